"""Discrete-time optimal control problems with lambda-perturbed constraints.

A problem is a horizon ``N``, dynamics ``x_{k+1} = f(x_k, u_k)``, a running
and terminal cost, and scalar constraint families that act either on states
(``g(lam, x_k)``, times 1..N) or on controls (``h(lam, u_k)``, times 0..N-1).
The decision variable is the stacked control ``u = (u_0, ..., u_{N-1})``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

Array = np.ndarray

STATE = "state"
INPUT = "input"


class DimensionError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    """Raised when an evaluator produces NaN/inf; carries the offending location."""

    def __init__(self, message: str, where=None):
        super().__init__(message)
        self.where = where


def fd_gradient(fun: Callable[[Array], float], z: Array, step: float = 1e-6) -> Array:
    z = np.asarray(z, dtype=float)
    h = step * (1.0 + np.max(np.abs(z), initial=0.0))
    out = np.empty(z.size)
    for i in range(z.size):
        zp = z.copy()
        zm = z.copy()
        zp[i] += h
        zm[i] -= h
        out[i] = (fun(zp) - fun(zm)) / (2 * h)
    return out


def fd_jacobian(fun: Callable[[Array], Array], z: Array, step: float = 1e-6) -> Array:
    z = np.asarray(z, dtype=float)
    h = step * (1.0 + np.max(np.abs(z), initial=0.0))
    cols = []
    for i in range(z.size):
        zp = z.copy()
        zm = z.copy()
        zp[i] += h
        zm[i] -= h
        cols.append((np.asarray(fun(zp)) - np.asarray(fun(zm))) / (2 * h))
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class Dynamics:
    """``f(x, u)`` with Jacobians ``f_x`` (n x n) and ``f_u`` (n x m).

    ``linear`` declares that all second derivatives of ``f`` vanish, which
    allows exact Hessians of the transcribed problem.
    """

    f: Callable[[Array, Array], Array]
    f_x: Callable[[Array, Array], Array]
    f_u: Callable[[Array, Array], Array]
    linear: bool = False

    @classmethod
    def affine(cls, A, B) -> "Dynamics":
        A = np.array(A, dtype=float)
        B = np.array(B, dtype=float)
        return cls(
            f=lambda x, u: A @ x + B @ u,
            f_x=lambda x, u: A,
            f_u=lambda x, u: B,
            linear=True,
        )


@dataclass(frozen=True)
class RunningCost:
    """``l(x, u) >= 0``; ``hess`` returns ``(l_xx, l_xu, l_uu)`` when given."""

    value: Callable[[Array, Array], float]
    grad_x: Optional[Callable[[Array, Array], Array]] = None
    grad_u: Optional[Callable[[Array, Array], Array]] = None
    hess: Optional[Callable[[Array, Array], tuple]] = None


@dataclass(frozen=True)
class TerminalCost:
    value: Callable[[Array], float]
    grad: Optional[Callable[[Array], Array]] = None
    hess: Optional[Callable[[Array], Array]] = None


@dataclass(frozen=True)
class ConstraintFamily:
    """A scalar constraint ``c(lam, z) <= 0`` scheduled at ``times``.

    ``z`` is the state for ``kind == "state"`` and the control for
    ``kind == "input"``. Missing derivative callables fall back to central
    finite differences.
    """

    name: str
    kind: str
    value: Callable[[float, Array], float]
    times: tuple
    convex: bool
    grad: Optional[Callable[[float, Array], Array]] = None
    dlam: Optional[Callable[[float, Array], float]] = None
    dlam_grad: Optional[Callable[[float, Array], Array]] = None
    hess: Optional[Callable[[float, Array], Array]] = None

    def gradient(self, lam: float, z: Array) -> Array:
        if self.grad is not None:
            return np.asarray(self.grad(lam, z), dtype=float)
        return fd_gradient(lambda zz: self.value(lam, zz), z)

    def d_lambda(self, lam: float, z: Array) -> float:
        if self.dlam is not None:
            return float(self.dlam(lam, z))
        h = 1e-6
        return (self.value(lam + h, z) - self.value(lam - h, z)) / (2 * h)

    def d_lambda_gradient(self, lam: float, z: Array) -> Array:
        if self.dlam_grad is not None:
            return np.asarray(self.dlam_grad(lam, z), dtype=float)
        h = 1e-6
        return (self.gradient(lam + h, z) - self.gradient(lam - h, z)) / (2 * h)


@dataclass(frozen=True)
class OcpProblem:
    n: int
    m: int
    N: int
    x0: Array
    dynamics: Dynamics
    running_cost: RunningCost
    terminal_cost: Optional[TerminalCost] = None
    state_constraints: Sequence[ConstraintFamily] = field(default_factory=tuple)
    input_constraints: Sequence[ConstraintFamily] = field(default_factory=tuple)

    def __post_init__(self):
        if self.n < 1 or self.m < 1 or self.N < 1:
            raise ValueError(f"need n, m, N >= 1, got n={self.n}, m={self.m}, N={self.N}")
        x0 = np.array(self.x0, dtype=float).reshape(-1)
        if x0.size != self.n:
            raise DimensionError(f"x0 has {x0.size} entries, expected n={self.n}")
        x0.setflags(write=False)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "state_constraints", tuple(self.state_constraints))
        object.__setattr__(self, "input_constraints", tuple(self.input_constraints))
        for fam in self.state_constraints:
            self._check_family(fam, STATE, range(1, self.N + 1))
        for fam in self.input_constraints:
            self._check_family(fam, INPUT, range(0, self.N))

    @staticmethod
    def _check_family(fam: ConstraintFamily, kind: str, legal: range):
        if fam.kind != kind:
            raise ValueError(f"family {fam.name!r} has kind {fam.kind!r}, expected {kind!r}")
        if len(fam.times) == 0:
            raise ValueError(f"family {fam.name!r} has an empty time mask")
        bad = [k for k in fam.times if k not in legal]
        if bad:
            raise ValueError(
                f"family {fam.name!r} schedules times {bad} outside {legal.start}..{legal.stop - 1}"
            )
        if len(set(fam.times)) != len(fam.times):
            raise ValueError(f"family {fam.name!r} has repeated times")

    @property
    def r(self) -> int:
        return self.N * self.m

    @property
    def second_order_exact(self) -> bool:
        """True when exact Hessians of cost and constraints in ``u`` are available."""
        if not self.dynamics.linear or self.running_cost.hess is None:
            return False
        if self.terminal_cost is not None and self.terminal_cost.hess is None:
            return False
        fams = self.state_constraints + self.input_constraints
        return all(f.hess is not None for f in fams)

    def _running_grads(self, x, u):
        lc = self.running_cost
        gx = lc.grad_x(x, u) if lc.grad_x else fd_gradient(lambda xx: lc.value(xx, u), x)
        gu = lc.grad_u(x, u) if lc.grad_u else fd_gradient(lambda uu: lc.value(x, uu), u)
        return np.asarray(gx, dtype=float), np.asarray(gu, dtype=float)

    def _terminal_grad(self, x):
        tc = self.terminal_cost
        if tc.grad is not None:
            return np.asarray(tc.grad(x), dtype=float)
        return fd_gradient(tc.value, x)


def stack(controls) -> Array:
    """Stack ``[u_0, ..., u_{N-1}]`` into a single vector."""
    return np.concatenate([np.atleast_1d(np.asarray(c, dtype=float)) for c in controls])


def unstack(u: Array, m: int) -> Array:
    """Return controls as an ``(N, m)`` array; row k is ``u_k``."""
    u = np.asarray(u, dtype=float)
    if u.ndim != 1 or u.size % m:
        raise DimensionError(f"stacked control of shape {u.shape} is not a multiple of m={m}")
    return u.reshape(-1, m)


def _controls(problem: OcpProblem, u) -> Array:
    u = np.asarray(u, dtype=float).reshape(-1)
    if u.size != problem.r:
        raise DimensionError(
            f"stacked control has {u.size} entries, expected N*m = {problem.N}*{problem.m} = {problem.r}"
        )
    return u.reshape(problem.N, problem.m)


def rollout(problem: OcpProblem, u) -> Array:
    """States ``x_0..x_N`` as an ``(N+1, n)`` array."""
    us = _controls(problem, u)
    xs = np.empty((problem.N + 1, problem.n))
    xs[0] = problem.x0
    for k in range(problem.N):
        xs[k + 1] = problem.dynamics.f(xs[k], us[k])
        if not np.all(np.isfinite(xs[k + 1])):
            raise NonFiniteError(f"non-finite state at k={k + 1}", where=k + 1)
    return xs


def rollout_with_sensitivities(problem: OcpProblem, u):
    """States and forward sensitivities ``S[k] = dx_k/du`` (shape ``(N+1, n, r)``)."""
    us = _controls(problem, u)
    n, m, N = problem.n, problem.m, problem.N
    xs = rollout(problem, u)
    S = np.zeros((N + 1, n, N * m))
    dyn = problem.dynamics
    for k in range(N):
        A = np.asarray(dyn.f_x(xs[k], us[k]), dtype=float)
        B = np.asarray(dyn.f_u(xs[k], us[k]), dtype=float)
        S[k + 1, :, : k * m] = A @ S[k, :, : k * m]
        S[k + 1, :, k * m : (k + 1) * m] = B
    return xs, S


def total_cost(problem: OcpProblem, u) -> float:
    us = _controls(problem, u)
    xs = rollout(problem, u)
    J = sum(float(problem.running_cost.value(xs[k], us[k])) for k in range(problem.N))
    if problem.terminal_cost is not None:
        J += float(problem.terminal_cost.value(xs[-1]))
    if not np.isfinite(J):
        raise NonFiniteError("non-finite cost")
    return J


def cost_gradient(problem: OcpProblem, u, traj=None) -> Array:
    """Gradient of the total cost w.r.t. the stacked control.

    ``traj`` may pass a precomputed ``(xs, S)`` pair.
    """
    us = _controls(problem, u)
    xs, S = traj if traj is not None else rollout_with_sensitivities(problem, u)
    m = problem.m
    grad = np.zeros(problem.r)
    for k in range(problem.N):
        gx, gu = problem._running_grads(xs[k], us[k])
        grad += gx @ S[k]
        grad[k * m : (k + 1) * m] += gu
    if problem.terminal_cost is not None:
        grad += problem._terminal_grad(xs[-1]) @ S[-1]
    bad = np.flatnonzero(~np.isfinite(grad))
    if bad.size:
        raise NonFiniteError(f"non-finite cost gradient entries {bad.tolist()}", where=bad.tolist())
    return grad


def cost_hessian(problem: OcpProblem, u, traj=None) -> Array:
    """Exact cost Hessian; requires linear dynamics and user Hessians."""
    if not problem.dynamics.linear or problem.running_cost.hess is None:
        raise ValueError("exact cost Hessian needs linear dynamics and a running-cost Hessian")
    us = _controls(problem, u)
    xs, S = traj if traj is not None else rollout_with_sensitivities(problem, u)
    m, r = problem.m, problem.r
    H = np.zeros((r, r))
    for k in range(problem.N):
        lxx, lxu, luu = (np.asarray(a, dtype=float) for a in problem.running_cost.hess(xs[k], us[k]))
        blk = slice(k * m, (k + 1) * m)
        Sk = S[k]
        H += Sk.T @ lxx @ Sk
        cross = Sk.T @ lxu
        H[:, blk] += cross
        H[blk, :] += cross.T
        H[blk, blk] += luu
    if problem.terminal_cost is not None:
        H += S[-1].T @ np.asarray(problem.terminal_cost.hess(xs[-1]), dtype=float) @ S[-1]
    return H
