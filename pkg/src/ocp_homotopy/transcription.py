"""Flatten an :class:`OcpProblem` into the nonlinear program ``min J(u) s.t. G(lam, u) <= 0``.

Flat constraint indices are 0-based here. State families come first (family
by family, times ascending), then input families. With full time masks this
reproduces ``i = (j-1)N + k`` for states and ``i = pN + (l-1)N + k`` for
inputs, where input slot ``k`` (1..N) refers to control ``u_{k-1}``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .problem import (
    INPUT,
    STATE,
    NonFiniteError,
    OcpProblem,
    cost_gradient,
    cost_hessian,
    fd_jacobian,
    rollout,
    rollout_with_sensitivities,
)


@dataclass(frozen=True)
class IndexEntry:
    kind: str
    family: int
    k: int


@dataclass(frozen=True)
class ConstraintIndexMap:
    entries: tuple

    @property
    def s(self) -> int:
        return len(self.entries)

    @cached_property
    def _lookup(self) -> dict:
        return {(e.kind, e.family, e.k): i for i, e in enumerate(self.entries)}

    def flat_index(self, kind: str, family: int, k: int) -> int:
        try:
            return self._lookup[(kind, family, k)]
        except KeyError:
            raise KeyError(f"({kind}, family={family}, k={k}) is not scheduled") from None

    def entry(self, i: int) -> IndexEntry:
        return self.entries[i]


def build_index_map(problem: OcpProblem) -> ConstraintIndexMap:
    entries = []
    for j, fam in enumerate(problem.state_constraints):
        entries.extend(IndexEntry(STATE, j, k) for k in sorted(fam.times))
    for l, fam in enumerate(problem.input_constraints):
        entries.extend(IndexEntry(INPUT, l, k) for k in sorted(fam.times))
    return ConstraintIndexMap(tuple(entries))


def classify_indices(problem: OcpProblem, index_map: ConstraintIndexMap):
    """Split flat indices into (convex, nonconvex) per the declared family flags."""
    convex, nonconvex = [], []
    for i, e in enumerate(index_map.entries):
        fams = problem.state_constraints if e.kind == STATE else problem.input_constraints
        (convex if fams[e.family].convex else nonconvex).append(i)
    return np.array(convex, dtype=int), np.array(nonconvex, dtype=int)


class NlpView:
    """Read-only NLP view of a problem: ``s``, index map and convexity partition."""

    def __init__(self, problem: OcpProblem):
        self.problem = problem
        self.index_map = build_index_map(problem)
        self.convex_idx, self.nonconvex_idx = classify_indices(problem, self.index_map)

    @property
    def r(self) -> int:
        return self.problem.r

    @property
    def s(self) -> int:
        return self.index_map.s

    def family(self, i: int):
        e = self.index_map.entries[i]
        fams = self.problem.state_constraints if e.kind == STATE else self.problem.input_constraints
        return fams[e.family]

    def describe(self, i: int) -> str:
        e = self.index_map.entries[i]
        return f"row {i} ({e.kind} family {self.family(i).name!r}, k={e.k})"

    def _arg(self, e: IndexEntry, xs, us):
        return xs[e.k] if e.kind == STATE else us[e.k]

    def _check_finite(self, vals, what):
        bad = np.flatnonzero(~np.isfinite(vals.reshape(vals.shape[0], -1)).all(axis=1))
        if bad.size:
            raise NonFiniteError(f"non-finite {what} at {self.describe(int(bad[0]))}", where=int(bad[0]))


def evaluate_G(view: NlpView, lam: float, u) -> np.ndarray:
    p = view.problem
    xs = rollout(p, u)
    us = np.asarray(u, dtype=float).reshape(p.N, p.m)
    G = np.array([view.family(i).value(lam, view._arg(e, xs, us)) for i, e in enumerate(view.index_map.entries)], dtype=float)
    view._check_finite(G, "constraint value")
    return G


def evaluate_G_dlam(view: NlpView, lam: float, u) -> np.ndarray:
    """Partial derivative of ``G`` with respect to ``lam``."""
    p = view.problem
    xs = rollout(p, u)
    us = np.asarray(u, dtype=float).reshape(p.N, p.m)
    return np.array(
        [view.family(i).d_lambda(lam, view._arg(e, xs, us)) for i, e in enumerate(view.index_map.entries)],
        dtype=float,
    )


def _jacobian_rows(view: NlpView, lam, u, traj, row_grad):
    p = view.problem
    xs, S = traj
    us = np.asarray(u, dtype=float).reshape(p.N, p.m)
    m = p.m
    out = np.zeros((view.s, p.r))
    for i, e in enumerate(view.index_map.entries):
        fam = view.family(i)
        if e.kind == STATE:
            out[i] = row_grad(fam, lam, xs[e.k]) @ S[e.k]
        else:
            out[i, e.k * m : (e.k + 1) * m] = row_grad(fam, lam, us[e.k])
    return out


def gradient_G(view: NlpView, lam: float, u, traj=None) -> np.ndarray:
    """Jacobian of ``G`` w.r.t. the stacked control, shape ``(s, r)``."""
    traj = traj if traj is not None else rollout_with_sensitivities(view.problem, u)
    DG = _jacobian_rows(view, lam, u, traj, lambda fam, lam_, z: fam.gradient(lam_, z))
    view._check_finite(DG, "constraint gradient")
    return DG


def gradient_G_dlam(view: NlpView, lam: float, u, traj=None) -> np.ndarray:
    """Derivative of ``gradient_G`` w.r.t. ``lam``."""
    traj = traj if traj is not None else rollout_with_sensitivities(view.problem, u)
    return _jacobian_rows(view, lam, u, traj, lambda fam, lam_, z: fam.d_lambda_gradient(lam_, z))


def stationarity(view: NlpView, lam: float, u, mu, traj=None) -> np.ndarray:
    """``grad J(u) + grad_u G(lam, u)^T mu``."""
    traj = traj if traj is not None else rollout_with_sensitivities(view.problem, u)
    return cost_gradient(view.problem, u, traj) + gradient_G(view, lam, u, traj).T @ np.asarray(mu, dtype=float)


def lagrangian_hessian(view: NlpView, lam: float, u, mu, method: str = "auto", traj=None) -> np.ndarray:
    """Derivative of :func:`stationarity` w.r.t. ``u``.

    ``method`` is ``"exact"`` (needs linear dynamics and user Hessians),
    ``"fd"`` (central differences on the stationarity map), or ``"auto"``.
    """
    p = view.problem
    if method == "auto":
        method = "exact" if p.second_order_exact else "fd"
    u = np.asarray(u, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if method == "fd":
        return fd_jacobian(lambda uu: stationarity(view, lam, uu, mu), u)
    if method != "exact":
        raise ValueError(f"unknown method {method!r}")
    if not p.second_order_exact:
        raise ValueError("exact Lagrangian Hessian needs linear dynamics and Hessians for every term")
    traj = traj if traj is not None else rollout_with_sensitivities(p, u)
    xs, S = traj
    us = u.reshape(p.N, p.m)
    m = p.m
    H = cost_hessian(p, u, traj)
    for i, e in enumerate(view.index_map.entries):
        if mu[i] == 0.0:
            continue
        fam = view.family(i)
        if e.kind == STATE:
            Hz = np.asarray(fam.hess(lam, xs[e.k]), dtype=float)
            H += mu[i] * (S[e.k].T @ Hz @ S[e.k])
        else:
            blk = slice(e.k * m, (e.k + 1) * m)
            H[blk, blk] += mu[i] * np.asarray(fam.hess(lam, us[e.k]), dtype=float)
    return H


def cubic_merit(d, mu) -> np.ndarray:
    """``mu^3 - |d - mu|^3 + d^3`` evaluated without cancellation.

    With ``t = d - mu``: for ``t >= 0`` the value is ``mu^3 + mu (d^2 + d t + t^2)``,
    otherwise ``d (mu^2 - mu t + t^2 + d^2)`` (sums/differences of cubes).
    """
    d = np.asarray(d, dtype=float)
    mu = np.asarray(mu, dtype=float)
    t = d - mu
    return np.where(
        t >= 0,
        mu**3 + mu * (d * d + d * t + t * t),
        d * (mu * mu - mu * t + t * t + d * d),
    )


def complementarity(G, mu) -> np.ndarray:
    """``mu^3 - |-G - mu|^3 + (-G)^3``: zero iff ``G <= 0, mu >= 0, mu*G = 0``."""
    return cubic_merit(-np.asarray(G, dtype=float), mu)


def kkt_residual_alpha(view: NlpView, lam: float, u, mu) -> np.ndarray:
    """Stacked stationarity and complementarity residual (length ``r + s``)."""
    traj = rollout_with_sensitivities(view.problem, u)
    G = evaluate_G(view, lam, u)
    out = np.concatenate([stationarity(view, lam, u, mu, traj), complementarity(G, mu)])
    if not np.all(np.isfinite(out)):
        raise NonFiniteError("non-finite KKT residual")
    return out
