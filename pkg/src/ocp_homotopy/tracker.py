"""Predictor-corrector tracking of the homotopy zero curve.

Each step computes the unit tangent (oriented by the sign of the augmented
determinant), takes an Euler step of length ``h`` and projects back onto the
curve with Newton iterations constrained to the hyperplane orthogonal to the
tangent. Once a step lands at ``lam >= 1`` the endpoint is refined on the
hyperplane ``lam = 1`` by Newton on the KKT residual.
"""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .homotopy import CurvePoint, HomotopyParams, rho, rho_jacobian, solve_initial_multipliers
from .problem import total_cost
from .transcription import NlpView, evaluate_G, kkt_residual_alpha, stationarity

log = logging.getLogger(__name__)

TRACE_COLUMNS = ("iter", "lambda", "arclen", "res_inf", "tangent_lambda", "min_margin", "corrector_iters")


class Status(str, Enum):
    CONVERGED = "Converged"
    MAX_STEPS = "MaxSteps"
    CORRECTOR_FAILED = "CorrectorFailed"
    STEP_UNDERFLOW = "StepUnderflow"
    RANK_DEFICIENT = "RankDeficient"


class RankDeficient(np.linalg.LinAlgError):
    pass


class CorrectorFailed(RuntimeError):
    pass


@dataclass
class TrackerConfig:
    h: float = 0.1
    corrector_tol: float = 1e-10
    corrector_max_iters: int = 25
    max_steps: int = 10000
    min_step: float = 1e-6
    overshoot_cap: float = 1.1
    endpoint_tol: float = 1e-9
    rank_tol: float = 1e-10
    rank_check_every: int = 10
    hessian: str = "auto"
    reject_reversal: bool = True

    def __post_init__(self):
        if not self.h > self.min_step > 0:
            raise ValueError(f"need h > min_step > 0, got h={self.h}, min_step={self.min_step}")
        if not (self.corrector_tol > 0 and self.endpoint_tol > 0 and self.rank_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.overshoot_cap <= 1.0:
            raise ValueError("overshoot_cap must exceed 1")


@dataclass
class TraceRecord:
    iter: int
    lam: float
    arclen: float
    res_inf: float
    tangent_lambda: float
    min_margin: float
    corrector_iters: int
    w: np.ndarray = field(repr=False)
    rank_ratio: Optional[float] = None

    def row(self) -> list:
        return [self.iter, self.lam, self.arclen, self.res_inf, self.tangent_lambda, self.min_margin, self.corrector_iters]


@dataclass
class SolveResult:
    status: Status
    u: np.ndarray
    mu: np.ndarray
    lam: float
    cost: float
    kkt: dict
    steps: int
    trace: list
    message: str = ""
    seconds: float = 0.0

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED


# ---------------------------------------------------------------- steps


def tangent(J, prev=None, rank_tol: float = 1e-10, orientation: float = 1.0):
    """Unit null vector of ``J`` (shape ``(k, k+1)``) with ``sign det([J; t^T]) = orientation``.

    Returns ``(t, rank_ratio)``. Raises :class:`RankDeficient` when
    ``sigma_min / sigma_max <= rank_tol``.
    """
    J = np.asarray(J, dtype=float)
    k = J.shape[0]
    if J.shape != (k, k + 1):
        raise ValueError(f"expected a (k, k+1) matrix, got {J.shape}")
    _, sv, vt = np.linalg.svd(J, full_matrices=True)
    ratio = sv[-1] / sv[0] if sv[0] > 0 else 0.0
    if ratio <= rank_tol:
        raise RankDeficient(f"Jacobian rank deficient: sigma_min/sigma_max = {ratio:.3e}")
    t = vt[-1].copy()
    t /= np.linalg.norm(t)
    sign, _ = np.linalg.slogdet(np.vstack([J, t]))
    if sign * orientation < 0:
        t = -t
    if prev is not None and t @ prev <= 0:
        log.warning("tangent orientation disagrees with the previous tangent (t.prev = %.3e)", t @ prev)
    return t, ratio


def orientation_sign(J, t) -> float:
    sign, _ = np.linalg.slogdet(np.vstack([np.asarray(J, dtype=float), t]))
    return float(sign)


def predict(w, t, h: float) -> np.ndarray:
    return np.asarray(w, dtype=float) + h * np.asarray(t, dtype=float)


def correct(residual: Callable, jacobian: Callable, v, t, config: TrackerConfig):
    """Newton projection of ``v`` onto ``residual = 0`` within ``t^T (w - v) = 0``.

    Damped by Armijo backtracking on the squared residual norm. Returns
    ``(w, iterations, residual_inf_norm)``; raises :class:`CorrectorFailed`.
    """
    v = np.asarray(v, dtype=float)
    w = v.copy()
    F = residual(w)
    res = np.max(np.abs(F))
    for it in range(config.corrector_max_iters + 1):
        if not np.all(np.isfinite(F)):
            raise CorrectorFailed("non-finite residual in corrector")
        if res <= config.corrector_tol:
            return w, it, res
        if it == config.corrector_max_iters:
            break
        A = np.vstack([jacobian(w), t])
        rhs = -np.concatenate([F, [t @ (w - v)]])
        try:
            dw = np.linalg.solve(A, rhs)
        except np.linalg.LinAlgError as exc:
            raise CorrectorFailed(f"singular corrector system: {exc}") from exc
        if not np.all(np.isfinite(dw)):
            raise CorrectorFailed("singular corrector system")
        phi0 = F @ F
        step = 1.0
        for _ in range(20):
            w_try = w + step * dw
            F_try = residual(w_try)
            if np.all(np.isfinite(F_try)) and F_try @ F_try <= (1 - 2e-4 * step) * phi0:
                break
            step *= 0.5
        else:
            raise CorrectorFailed(f"line search failed at residual {res:.3e}")
        w, F = w_try, F_try
        res = np.max(np.abs(F))
    raise CorrectorFailed(f"no convergence in {config.corrector_max_iters} iterations (residual {res:.3e})")


# ---------------------------------------------------------------- generic curve following


@dataclass
class CurveRun:
    status: Status
    trace: list
    w_prev: Optional[np.ndarray] = None
    w_last: Optional[np.ndarray] = None
    t_last: Optional[np.ndarray] = None
    t_prev: Optional[np.ndarray] = None
    message: str = ""


def follow_curve(
    residual: Callable,
    jacobian: Callable,
    w0,
    config: TrackerConfig,
    margin: Optional[Callable] = None,
    start_iter: int = 0,
    arclen0: float = 0.0,
    t_prev=None,
) -> CurveRun:
    """Track ``residual(w) = 0`` from ``w0`` until ``w[0] >= 1``.

    ``w[0]`` is the homotopy parameter. No assumption is made on the sign of
    its increments: the curve may turn back in ``lam``.

    The determinant sign that orients the tangent is fixed once: from the
    previous tangent ``t_prev`` when resuming, otherwise so that the curve
    leaves the start into ``lam > 0``. It is then held along the curve.
    """
    w = np.asarray(w0, dtype=float).copy()
    trace: list = []
    arclen = arclen0
    try:
        J = jacobian(w)
        t, _ = tangent(J, None, config.rank_tol)
    except RankDeficient as exc:
        return CurveRun(Status.RANK_DEFICIENT, trace, None, w, None, str(exc))
    ref = t[0] if t_prev is None else t @ t_prev
    orientation = 1.0 if ref >= 0 else -1.0
    t = orientation * t
    h = config.h
    successes = 0
    for step in range(config.max_steps):
        while True:
            if h < config.min_step:
                return CurveRun(Status.STEP_UNDERFLOW, trace, None, w, t, f"step size fell below {config.min_step}")
            v = predict(w, t, h)
            if v[0] > config.overshoot_cap:
                h *= 0.5
                successes = 0
                continue
            try:
                w_new, iters, res = correct(residual, jacobian, v, t, config)
                J_new = jacobian(w_new)
                t_new, ratio = tangent(J_new, None, config.rank_tol, orientation)
            except (CorrectorFailed, RankDeficient) as exc:
                log.debug("step %d rejected at h=%.3g: %s", step, h, exc)
                h *= 0.5
                successes = 0
                continue
            if config.reject_reversal and t_new @ t <= 0:
                log.debug("step %d rejected at h=%.3g: tangent reversal", step, h)
                h *= 0.5
                successes = 0
                continue
            break
        successes += 1
        if successes >= 2:
            h = config.h
        arclen += float(np.linalg.norm(w_new - w))
        it = start_iter + step + 1
        rec = TraceRecord(
            iter=it,
            lam=float(w_new[0]),
            arclen=arclen,
            res_inf=float(res),
            tangent_lambda=float(t_new[0]),
            min_margin=float(margin(w_new)) if margin is not None else float("nan"),
            corrector_iters=iters,
            w=w_new.copy(),
            rank_ratio=float(ratio) if it % config.rank_check_every == 0 else None,
        )
        trace.append(rec)
        w_prev, t_prev, w, t = w, t, w_new, t_new
        if w[0] >= 1.0:
            return CurveRun(Status.CONVERGED, trace, w_prev, w, t, t_prev=t_prev)
    return CurveRun(Status.MAX_STEPS, trace, None, w, t, f"reached max_steps={config.max_steps}")


# ---------------------------------------------------------------- homotopy-specific driver


def curve_margins(view: NlpView, params: HomotopyParams, w) -> float:
    """``min_i min(mu_i, (1 - lam) b0_i - G_i(lam, u))``; nonnegative on the exact curve."""
    p = CurvePoint.from_vector(w, view.r)
    G = evaluate_G(view, p.lam, p.u)
    return float(min(np.min(p.mu), np.min((1 - p.lam) * params.b0 - G)))


def refine_endpoint(view: NlpView, params: HomotopyParams, w_prev, w_new, config: TrackerConfig):
    """Solve the KKT residual on ``lam = 1`` starting from the interpolated bracket.

    Newton runs until the residual reaches ``corrector_tol``; if it stalls
    earlier the point is still accepted at ``endpoint_tol``. Returns
    ``(u, mu, iterations)``; raises :class:`CorrectorFailed`.
    """
    r = view.r
    w_prev = np.asarray(w_prev, dtype=float)
    w_new = np.asarray(w_new, dtype=float)
    if w_new[0] == w_prev[0]:
        z = w_new[1:].copy()
    else:
        theta = (1.0 - w_prev[0]) / (w_new[0] - w_prev[0])
        z = (1 - theta) * w_prev[1:] + theta * w_new[1:]

    def alpha(zz):
        return kkt_residual_alpha(view, 1.0, zz[:r], zz[r:])

    F = alpha(z)
    res = np.max(np.abs(F))
    for it in range(50):
        if res <= config.corrector_tol:
            return z[:r].copy(), z[r:].copy(), it
        Jz = rho_jacobian(view, params, np.concatenate([[1.0], z]), config.hessian)[:, 1:]
        try:
            dz = np.linalg.solve(Jz, -F)
        except np.linalg.LinAlgError as exc:
            raise CorrectorFailed(f"singular endpoint Jacobian: {exc}") from exc
        phi0 = F @ F
        step = 1.0
        for _ in range(20):
            z_try = z + step * dz
            F_try = alpha(z_try)
            if F_try @ F_try <= (1 - 2e-4 * step) * phi0:
                break
            step *= 0.5
        else:
            if res <= config.endpoint_tol:
                return z[:r].copy(), z[r:].copy(), it
            raise CorrectorFailed(f"endpoint line search failed at residual {res:.3e}")
        z, F = z_try, F_try
        res = np.max(np.abs(F))
    if res <= config.endpoint_tol:
        return z[:r].copy(), z[r:].copy(), it
    raise CorrectorFailed(f"endpoint Newton did not reach {config.endpoint_tol:g}")


def kkt_norms(view: NlpView, u, mu) -> dict:
    G = evaluate_G(view, 1.0, u)
    return {
        "stationarity": float(np.max(np.abs(stationarity(view, 1.0, u, mu)))),
        "primal": float(max(0.0, np.max(G, initial=-np.inf))),
        "complementarity": float(abs(mu @ G)),
        "dual": float(max(0.0, -np.min(mu, initial=np.inf))),
        "alpha_inf": float(np.max(np.abs(kkt_residual_alpha(view, 1.0, u, mu)))),
    }


def track(params: HomotopyParams, view: NlpView, config: TrackerConfig, mu0=None) -> SolveResult:
    """Follow the zero curve of ``rho_a`` from ``(0, u0, mu0)`` to a KKT point at ``lam = 1``."""
    started = time.perf_counter()
    if mu0 is None:
        mu0 = solve_initial_multipliers(view, params)
    r = view.r
    w0 = np.concatenate([[0.0], params.u0, mu0])

    def residual(w):
        return rho(view, params, w)

    def jacobian(w):
        return rho_jacobian(view, params, w, config.hessian)

    def margin(w):
        return curve_margins(view, params, w)

    trace: list = []
    w_start, t_prev, arclen = w0, None, 0.0
    run_cfg = config
    for attempt in range(4):
        run = follow_curve(residual, jacobian, w_start, run_cfg, margin, len(trace), arclen, t_prev)
        trace.extend(run.trace)
        if run.status is not Status.CONVERGED:
            return _result(view, run.status, run.w_last, trace, run.message, started)
        try:
            u, mu, iters = refine_endpoint(view, params, run.w_prev, run.w_last, config)
        except CorrectorFailed as exc:
            log.info("endpoint refinement failed (%s); retracking from lam=%.4f", exc, run.w_prev[0])
            # drop the overshooting record and retrack the last step more finely
            trace.pop()
            w_start = run.w_prev
            arclen = trace[-1].arclen if trace else 0.0
            t_prev = run.t_prev
            run_cfg = TrackerConfig(**{**config.__dict__, "h": max(run_cfg.h / 4, 2 * config.min_step)})
            continue
        w_end = np.concatenate([[1.0], u, mu])
        # the overshooting record is replaced by its projection onto lam = 1
        last = trace.pop()
        t_end, _ = tangent(jacobian(w_end), None, config.rank_tol)
        trace.append(
            TraceRecord(
                iter=last.iter,
                lam=1.0,
                arclen=(trace[-1].arclen if trace else 0.0) + float(np.linalg.norm(w_end - run.w_prev)),
                res_inf=float(np.max(np.abs(residual(w_end)))),
                tangent_lambda=float(t_end[0] * np.sign(t_end @ run.t_last)),
                min_margin=margin(w_end),
                corrector_iters=iters,
                w=w_end,
                rank_ratio=last.rank_ratio,
            )
        )
        return _result(view, Status.CONVERGED, w_end, trace, "", started)
    return _result(view, Status.CORRECTOR_FAILED, run.w_last, trace, "endpoint refinement failed", started)


def _result(view, status, w, trace, message, started) -> SolveResult:
    p = CurvePoint.from_vector(w, view.r)
    if status is Status.CONVERGED:
        kkt = kkt_norms(view, p.u, p.mu)
    else:
        kkt = {}
    return SolveResult(
        status=status,
        u=p.u,
        mu=p.mu,
        lam=p.lam,
        cost=total_cost(view.problem, p.u),
        kkt=kkt,
        steps=len(trace),
        trace=trace,
        message=message,
        seconds=time.perf_counter() - started,
    )


def write_trace_csv(path, trace, r: int, s: int, full: bool = False):
    """Write the per-step trace; ``full`` appends ``u_*`` and ``mu_*`` columns."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = list(TRACE_COLUMNS)
        if full:
            header += [f"u_{i}" for i in range(r)] + [f"mu_{i}" for i in range(s)]
        writer.writerow(header)
        for rec in trace:
            row = rec.row()
            if full:
                row += [float(v) for v in rec.w[1:]]
            writer.writerow(row)
