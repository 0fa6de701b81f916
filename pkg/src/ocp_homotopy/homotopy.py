"""The probability-one homotopy built from the KKT system.

For ``a = (u0, b0, c0)`` the map is::

    rho_a(lam, u, mu) = [ lam * (grad J(u) + grad_u G(lam, u)^T mu) + (1 - lam) * (u - u0) ]
                        [ K(lam, u, mu)                                                    ]

    K_i = mu_i^3 - |d_i - mu_i|^3 + d_i^3 - (1 - lam) c0_i,   d_i = (1 - lam) b0_i - G_i(lam, u)

At ``lam = 0`` the zero set is the single point ``(u0, mu0)``; at ``lam = 1``
``rho_a`` coincides with the KKT residual.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problem import rollout_with_sensitivities
from .transcription import (
    NlpView,
    cubic_merit,
    evaluate_G,
    evaluate_G_dlam,
    gradient_G,
    gradient_G_dlam,
    lagrangian_hessian,
    stationarity,
)


class InvalidParams(ValueError):
    pass


@dataclass(frozen=True)
class HomotopyParams:
    u0: np.ndarray
    b0: np.ndarray
    c0: np.ndarray

    def __post_init__(self):
        for name in ("u0", "b0", "c0"):
            arr = np.array(getattr(self, name), dtype=float).reshape(-1)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(self.b0 <= 0) or np.any(self.c0 <= 0):
            raise InvalidParams("b0 and c0 must be strictly positive")
        if self.b0.shape != self.c0.shape:
            raise InvalidParams(f"b0 has {self.b0.size} entries but c0 has {self.c0.size}")

    @classmethod
    def constant(cls, u0, s: int, b: float = 1.0, c: float = 1.0) -> "HomotopyParams":
        """``b0 = b * ones(s)``, ``c0 = c * ones(s)``."""
        return cls(u0, np.full(s, float(b)), np.full(s, float(c)))

    def check_against(self, view: NlpView) -> np.ndarray:
        """Raise :class:`InvalidParams` unless ``G(0, u0) < 0`` and ``G(0, u0) < b0``.

        Returns ``G(0, u0)``.
        """
        if self.u0.size != view.r or self.b0.size != view.s:
            raise InvalidParams(
                f"params sized (r={self.u0.size}, s={self.b0.size}) but problem has (r={view.r}, s={view.s})"
            )
        G0 = evaluate_G(view, 0.0, self.u0)
        bad = np.flatnonzero(G0 >= 0)
        if bad.size:
            raise InvalidParams(f"u0 not strictly feasible at lam=0: {view.describe(int(bad[0]))} = {G0[bad[0]]:.3g}")
        bad = np.flatnonzero(G0 >= self.b0)
        if bad.size:
            raise InvalidParams(f"b0 not above G(0, u0) at {view.describe(int(bad[0]))}")
        return G0


@dataclass(frozen=True)
class CurvePoint:
    lam: float
    u: np.ndarray
    mu: np.ndarray

    def to_vector(self) -> np.ndarray:
        return np.concatenate([[self.lam], self.u, self.mu])

    @classmethod
    def from_vector(cls, w, r: int) -> "CurvePoint":
        w = np.asarray(w, dtype=float)
        return cls(float(w[0]), w[1 : 1 + r].copy(), w[1 + r :].copy())


def K_values(lam, G, mu, b0, c0) -> np.ndarray:
    d = (1.0 - lam) * np.asarray(b0) - np.asarray(G)
    return cubic_merit(d, mu) - (1.0 - lam) * np.asarray(c0)


def K_partials(lam, G, mu, b0, c0):
    """Partials of each ``K_i`` w.r.t. ``mu_i``, ``d_i`` (through ``G``) and explicit ``lam``.

    Returns ``(dK_dmu, dK_dd, dK_dlam_explicit)``; ``d|t|^3/dt = 3 t |t|``.
    """
    d = (1.0 - lam) * np.asarray(b0) - np.asarray(G)
    mu = np.asarray(mu, dtype=float)
    t = d - mu
    dK_dmu = 3 * mu**2 + 3 * t * np.abs(t)
    dK_dd = -3 * t * np.abs(t) + 3 * d**2
    return dK_dmu, dK_dd, np.broadcast_to(np.asarray(c0, dtype=float), d.shape)


def K_component(view: NlpView, params: HomotopyParams, i: int, lam: float, u, mu) -> float:
    G = evaluate_G(view, lam, u)
    return float(K_values(lam, G[i], mu[i], params.b0[i], params.c0[i]))


def _split(view: NlpView, w):
    if isinstance(w, CurvePoint):
        return w.lam, np.asarray(w.u, dtype=float), np.asarray(w.mu, dtype=float)
    w = np.asarray(w, dtype=float)
    return float(w[0]), w[1 : 1 + view.r], w[1 + view.r :]


def rho(view: NlpView, params: HomotopyParams, w) -> np.ndarray:
    lam, u, mu = _split(view, w)
    traj = rollout_with_sensitivities(view.problem, u)
    top = lam * stationarity(view, lam, u, mu, traj) + (1.0 - lam) * (u - params.u0)
    G = evaluate_G(view, lam, u)
    return np.concatenate([top, K_values(lam, G, mu, params.b0, params.c0)])


def rho_jacobian(view: NlpView, params: HomotopyParams, w, hessian: str = "auto") -> np.ndarray:
    """Jacobian of ``rho_a``, shape ``(r+s, r+s+1)``, columns ordered ``(lam | u | mu)``."""
    lam, u, mu = _split(view, w)
    r, s = view.r, view.s
    traj = rollout_with_sensitivities(view.problem, u)
    DG = gradient_G(view, lam, u, traj)
    G = evaluate_G(view, lam, u)
    Gl = evaluate_G_dlam(view, lam, u)

    Jac = np.zeros((r + s, r + s + 1))
    st = stationarity(view, lam, u, mu, traj)
    Jac[:r, 0] = st + lam * (gradient_G_dlam(view, lam, u, traj).T @ mu) - (u - params.u0)
    Jac[:r, 1 : 1 + r] = lam * lagrangian_hessian(view, lam, u, mu, hessian, traj) + (1.0 - lam) * np.eye(r)
    Jac[:r, 1 + r :] = lam * DG.T

    dK_dmu, dK_dd, dK_dlam = K_partials(lam, G, mu, params.b0, params.c0)
    # d = (1 - lam) b0 - G(lam, u)
    Jac[r:, 0] = dK_dd * (-params.b0 - Gl) + dK_dlam
    Jac[r:, 1 : 1 + r] = -dK_dd[:, None] * DG
    Jac[r:, 1 + r :] = np.diag(dK_dmu)
    return Jac


def _initial_data(view: NlpView, params: HomotopyParams):
    G0 = params.check_against(view)
    return params.b0 - G0, params.c0


def _k0(mu, d, c):
    return cubic_merit(d, mu) - c


def _k0_prime(mu, d):
    t = d - mu
    return 3 * mu**2 + 3 * t * np.abs(t)


def _bracket(d, c):
    hi = np.ones_like(d)
    for _ in range(200):
        low = _k0(hi, d, c) <= 0
        if not low.any():
            return hi
        hi = np.where(low, 2 * hi, hi)
    raise InvalidParams("could not bracket the initial multiplier root")


def solve_initial_multipliers(view: NlpView, params: HomotopyParams, method: str = "bisection") -> np.ndarray:
    """Unique ``mu0 > 0`` with ``K(0, u0, mu0) = 0``, solved row by row.

    ``method="bisection"`` brackets ``[0, mu_bar]`` (doubling ``mu_bar``),
    bisects, then takes two Newton polish steps. ``method="newton"`` runs a
    bracket-safeguarded Newton iteration instead.
    """
    d, c = _initial_data(view, params)
    return initial_multiplier_roots(d, c, method)


def initial_multiplier_roots(d, c, method: str = "bisection") -> np.ndarray:
    """Roots of ``mu^3 - |d - mu|^3 + d^3 - c`` for ``d, c > 0`` (vectorised)."""
    d = np.asarray(d, dtype=float)
    c = np.asarray(c, dtype=float)
    if np.any(d <= 0):
        raise InvalidParams("G(0, u0) must lie strictly below b0")
    lo = np.zeros_like(d)
    hi = _bracket(d, c)
    if method == "bisection":
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            pos = _k0(mid, d, c) > 0
            hi = np.where(pos, mid, hi)
            lo = np.where(pos, lo, mid)
            if np.all(hi - lo <= 1e-12 * np.maximum(1.0, hi)):
                break
        mu = 0.5 * (lo + hi)
        for _ in range(2):
            step = _k0(mu, d, c) / _k0_prime(mu, d)
            mu = np.clip(mu - step, lo, hi)
        return mu
    if method == "newton":
        mu = 0.5 * hi
        for _ in range(200):
            val = _k0(mu, d, c)
            pos = val > 0
            hi = np.where(pos, mu, hi)
            lo = np.where(pos, lo, mu)
            trial = mu - val / _k0_prime(mu, d)
            outside = (trial <= lo) | (trial >= hi) | ~np.isfinite(trial)
            new = np.where(outside, 0.5 * (lo + hi), trial)
            if np.all(np.abs(new - mu) <= 1e-15 * np.maximum(1.0, mu)):
                return new
            mu = new
        return mu
    raise ValueError(f"unknown method {method!r}")
