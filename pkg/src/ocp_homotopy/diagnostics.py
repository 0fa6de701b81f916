"""Runtime checks of the standing assumptions and of KKT optimality.

Every check produces a :class:`CheckResult`; a failing check always carries
at least one witness ``{"point": ..., "value": ...}``. Sampled checks can
only ever report ``sampled-pass`` since sampling does not prove a
for-all statement.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .homotopy import HomotopyParams, rho_jacobian
from .transcription import NlpView, evaluate_G, stationarity

PASS = "pass"
FAIL = "fail"
SAMPLED_PASS = "sampled-pass"
NOT_CHECKED = "not-checked"

MAX_WITNESSES = 5


@dataclass
class CheckResult:
    check: str
    status: str
    witnesses: list = field(default_factory=list)
    detail: str = ""

    def to_dict(self) -> dict:
        d = {"check": self.check, "status": self.status, "witnesses": self.witnesses}
        if self.detail:
            d["detail"] = self.detail
        return d


@dataclass
class AssumptionReport:
    checks: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.status != FAIL for c in self.checks)

    def __getitem__(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.check == name:
                return c
        raise KeyError(name)

    def extend(self, results):
        self.checks.extend(results)
        return self

    def to_json(self, **kw) -> str:
        return json.dumps([c.to_dict() for c in self.checks], **kw)


def _result(name, witnesses, passed_status=PASS, detail=""):
    status = FAIL if witnesses else passed_status
    return CheckResult(name, status, witnesses[:MAX_WITNESSES], detail)


def check_feasible(view: NlpView, lam: float, u, tol: float = 0.0) -> bool:
    return bool(np.max(evaluate_G(view, lam, u), initial=-np.inf) <= tol)


def validate_params(view: NlpView, params: HomotopyParams):
    """``A2-interior`` (``G(0, u0) < 0``) and ``B0-valid`` (``G(0, u0) < b0``)."""
    u0 = params.u0
    G0 = evaluate_G(view, 0.0, u0)
    a2 = [
        {"point": {"row": int(i), "where": view.describe(int(i))}, "value": float(G0[i])}
        for i in np.flatnonzero(G0 >= 0)
    ]
    margin = float(-np.max(G0))
    b0 = [
        {"point": {"row": int(i), "where": view.describe(int(i)), "b0": float(params.b0[i])}, "value": float(G0[i])}
        for i in np.flatnonzero(G0 >= params.b0)
    ]
    return [
        _result("A2-interior", a2, detail=f"interior margin {margin:.6g}"),
        _result("B0-valid", b0),
    ]


def check_A5_A6_sampled(view: NlpView, samples: int = 200, seed: int = 0, u_range: float = 2.0, tol: float = 1e-12):
    """Sampled surrogates for A5 (each ``G_i`` nondecreasing in ``lam``) and A6.

    Controls are drawn uniformly from ``[-u_range, u_range]^r``.
    """
    rng = np.random.default_rng(seed)
    a5, a6 = [], []
    nc = view.nonconvex_idx
    for _ in range(samples):
        u = rng.uniform(-u_range, u_range, size=view.r)
        lam1, lam2 = np.sort(rng.uniform(0.0, 1.0, size=2))
        G1 = evaluate_G(view, lam1, u)
        G2 = evaluate_G(view, lam2, u)
        # witness value G(lam2) - G(lam1) is negative although lam2 >= lam1
        for i in np.flatnonzero(G2 < G1 - tol):
            if len(a5) < MAX_WITNESSES:
                a5.append(
                    {
                        "point": {"row": int(i), "where": view.describe(int(i)), "lam1": float(lam1), "lam2": float(lam2), "u": u.tolist()},
                        "value": float(G2[i] - G1[i]),
                    }
                )
        if nc.size:
            G0 = evaluate_G(view, 0.0, u)[nc]
            for j in np.flatnonzero(G0 > tol):
                if len(a6) < MAX_WITNESSES:
                    i = int(nc[j])
                    a6.append({"point": {"row": i, "where": view.describe(i), "u": u.tolist()}, "value": float(G0[j])})
    return [
        _result("A5-monotone", a5, SAMPLED_PASS, f"{samples} samples"),
        _result("A6-trivial", a6, SAMPLED_PASS, f"{samples} samples, {nc.size} nonconvex rows"),
        CheckResult("A7", NOT_CHECKED, [], "needs accumulation points of the zero curve; not observable in a finite run"),
    ]


def verify_kkt(view: NlpView, u, mu, tol: float = 1e-6) -> CheckResult:
    """First-order optimality at ``lam = 1``: stationarity, primal, complementarity, dual."""
    u = np.asarray(u, dtype=float)
    mu = np.asarray(mu, dtype=float)
    G = evaluate_G(view, 1.0, u)
    grad = stationarity(view, 1.0, u, mu)
    witnesses = []
    stat = float(np.max(np.abs(grad), initial=0.0))
    if stat > tol:
        witnesses.append({"point": {"condition": "stationarity", "index": int(np.argmax(np.abs(grad)))}, "value": stat})
    if G.size:
        if G.max() > tol:
            i = int(np.argmax(G))
            witnesses.append({"point": {"condition": "primal", "row": i, "where": view.describe(i)}, "value": float(G[i])})
        comp = float(mu @ G)
        if abs(comp) > tol:
            witnesses.append({"point": {"condition": "complementarity"}, "value": comp})
        if mu.min() < -tol:
            i = int(np.argmin(mu))
            witnesses.append({"point": {"condition": "dual", "row": i, "where": view.describe(i)}, "value": float(mu[i])})
    return _result("KKT", witnesses)


def curve_health(params: HomotopyParams, view: NlpView, trace, tol: float = 1e-8, rank_tol: float = 1e-10, every: int = 10, jacobian=None):
    """Margin and rank checks over accepted trace records.

    ``jacobian`` overrides the Jacobian evaluator (defaults to :func:`rho_jacobian`).
    """
    if not trace:
        raise ValueError("empty trace")
    jac = jacobian or (lambda w: rho_jacobian(view, params, w))
    margins, ranks = [], []
    for n, rec in enumerate(trace):
        lam, u, mu = rec.w[0], rec.w[1 : 1 + view.r], rec.w[1 + view.r :]
        slack = (1 - lam) * params.b0 - evaluate_G(view, lam, u)
        low = float(min(mu.min(), slack.min()))
        if low < -tol:
            margins.append({"point": {"iter": rec.iter, "lambda": float(lam)}, "value": low})
        if n % every == 0 or n == len(trace) - 1:
            sv = np.linalg.svd(jac(rec.w), compute_uv=False)
            ratio = float(sv[-1] / sv[0]) if sv[0] > 0 else 0.0
            if ratio <= rank_tol:
                ranks.append({"point": {"iter": rec.iter, "lambda": float(lam)}, "value": ratio})
    return [_result("margins", margins), _result("rank", ranks)]
