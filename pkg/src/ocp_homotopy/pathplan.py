"""Two-dimensional path planning around circular obstacles.

The obstacles enter as ``-|x - m|^2 + lam * r^2 <= 0``: points at ``lam = 0``,
full discs at ``lam = 1``. ``obstacle_schedule="shrink"`` reverses this
(``(1 - lam) * r^2``) and exists to exercise the monotonicity diagnostics. The target is a ball ``|x_N - xN|^2 <= eps^2``
and controls live in the box ``|u|_inf <= u_max``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .problem import (
    INPUT,
    STATE,
    ConstraintFamily,
    Dynamics,
    OcpProblem,
    RunningCost,
    rollout,
)
from .transcription import NlpView, evaluate_G

BOX_MARGIN = 0.05
SCHEDULES = ("grow", "shrink")


class ConfigError(ValueError):
    pass


class InfeasibleGuess(ValueError):
    pass


@dataclass(frozen=True)
class Obstacle:
    m: tuple
    r: float


def _default_obstacles():
    return (Obstacle((3.5, 2.5), 1.4), Obstacle((2.5, 3.5), 1.4))


@dataclass(frozen=True)
class PathPlanConfig:
    x0: tuple = (0.0, 0.0)
    xN: tuple = (5.0, 5.0)
    obstacles: tuple = field(default_factory=_default_obstacles)
    epsilon: float = 0.1
    N: int = 20
    u_max: float = 1.0
    gain: float = 0.5
    obstacle_schedule: str = "grow"

    def __post_init__(self):
        object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))
        object.__setattr__(self, "xN", tuple(float(v) for v in self.xN))
        obs = tuple(
            o if isinstance(o, Obstacle) else Obstacle(tuple(float(v) for v in o["m"]), float(o["r"]))
            for o in self.obstacles
        )
        object.__setattr__(self, "obstacles", obs)
        self.validate()

    def validate(self):
        if len(self.x0) != 2 or len(self.xN) != 2:
            raise ConfigError("x0 and xN must be 2-vectors")
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if int(self.N) != self.N or self.N < 2:
            raise ConfigError(f"N must be an integer >= 2, got {self.N}")
        if not self.u_max > 0 or not self.gain > 0:
            raise ConfigError("u_max and gain must be positive")
        if self.obstacle_schedule not in SCHEDULES:
            raise ConfigError(f"obstacle_schedule must be one of {SCHEDULES}, got {self.obstacle_schedule!r}")
        x0, xN = np.array(self.x0), np.array(self.xN)
        for i, ob in enumerate(self.obstacles):
            if len(ob.m) != 2 or not ob.r > 0:
                raise ConfigError(f"obstacle {i}: need a 2-vector centre and r > 0")
            m = np.array(ob.m)
            if np.linalg.norm(xN - m) <= ob.r + self.epsilon:
                raise ConfigError(f"obstacle {i} covers part of the target ball")
            if np.linalg.norm(x0 - m) <= 0:
                raise ConfigError(f"obstacle {i} is centred on the start point")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["x0"] = list(self.x0)
        d["xN"] = list(self.xN)
        d["obstacles"] = [{"m": list(o.m), "r": o.r} for o in self.obstacles]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PathPlanConfig":
        known = {"x0", "xN", "obstacles", "epsilon", "N", "u_max", "gain", "obstacle_schedule"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        try:
            return cls(**d)
        except (TypeError, KeyError) as exc:
            raise ConfigError(f"malformed config: {exc}") from exc

    @classmethod
    def load(cls, path) -> "PathPlanConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)

    def dump(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def _obstacle_family(idx: int, ob: Obstacle, times, schedule: str = "grow") -> ConstraintFamily:
    m = np.array(ob.m)
    r2 = ob.r**2
    if schedule == "grow":
        scale, slope = (lambda lam: lam), r2
    else:
        scale, slope = (lambda lam: 1.0 - lam), -r2
    return ConstraintFamily(
        name=f"obstacle{idx + 1}",
        kind=STATE,
        value=lambda lam, x: -float((x - m) @ (x - m)) + scale(lam) * r2,
        grad=lambda lam, x: -2.0 * (x - m),
        dlam=lambda lam, x: slope,
        dlam_grad=lambda lam, x: np.zeros(2),
        hess=lambda lam, x: -2.0 * np.eye(2),
        times=times,
        convex=False,
    )


def _box_family(j: int, sign: float, u_max: float, N: int) -> ConstraintFamily:
    e = np.zeros(2)
    e[j] = sign
    return ConstraintFamily(
        name=f"box{'+' if sign > 0 else '-'}u{j + 1}",
        kind=INPUT,
        value=lambda lam, u: float(e @ u) - u_max,
        grad=lambda lam, u: e.copy(),
        dlam=lambda lam, u: 0.0,
        dlam_grad=lambda lam, u: np.zeros(2),
        hess=lambda lam, u: np.zeros((2, 2)),
        times=tuple(range(N)),
        convex=True,
    )


def build_problem(config: PathPlanConfig) -> OcpProblem:
    N = config.N
    xN = np.array(config.xN)
    eps2 = config.epsilon**2
    I2 = np.eye(2)
    state = [_obstacle_family(i, ob, tuple(range(1, N)), config.obstacle_schedule) for i, ob in enumerate(config.obstacles)]
    state.append(
        ConstraintFamily(
            name="terminal",
            kind=STATE,
            value=lambda lam, x: float((x - xN) @ (x - xN)) - eps2,
            grad=lambda lam, x: 2.0 * (x - xN),
            dlam=lambda lam, x: 0.0,
            dlam_grad=lambda lam, x: np.zeros(2),
            hess=lambda lam, x: 2.0 * I2,
            times=(N,),
            convex=True,
        )
    )
    inputs = [_box_family(j, sgn, config.u_max, N) for j in range(2) for sgn in (1.0, -1.0)]
    return OcpProblem(
        n=2,
        m=2,
        N=N,
        x0=np.array(config.x0),
        dynamics=Dynamics.affine(I2, config.gain * I2),
        running_cost=RunningCost(
            value=lambda x, u: 0.5 * float(u @ u),
            grad_x=lambda x, u: np.zeros(2),
            grad_u=lambda x, u: np.asarray(u, dtype=float).copy(),
            hess=lambda x, u: (np.zeros((2, 2)), np.zeros((2, 2)), I2),
        ),
        state_constraints=state,
        input_constraints=inputs,
    )


# Unit-square waypoints for the detour routes, mapped onto the x0 -> xN frame.
_ROUTES = {
    "straight": [],
    "two-leg": [(0.9, 0.1)],
    "three-leg": [(-0.1, 0.45), (0.45, 1.1)],
}

STRATEGIES = tuple(_ROUTES)


def _route_points(config: PathPlanConfig, strategy: str, seed, jitter: float):
    x0, xN = np.array(config.x0), np.array(config.xN)
    delta = xN - x0
    # axis-aligned frame spanned by the start/target offsets
    frame = np.diag(np.where(np.abs(delta) > 1e-12, delta, 1.0))
    rng = np.random.default_rng(seed)
    pts = [x0]
    for wp in _ROUTES[strategy]:
        p = x0 + frame @ np.array(wp)
        if seed is not None:
            p = p + rng.uniform(-jitter, jitter, size=2)
        pts.append(p)
    pts.append(xN)
    return np.array(pts)


def _sample_route(points, N: int):
    """``N + 1`` samples along a polyline; steps per leg in proportion to the leg's inf-norm length."""
    legs = np.diff(points, axis=0)
    lengths = np.max(np.abs(legs), axis=1)
    if len(legs) > N:
        raise InfeasibleGuess("more legs than time steps")
    counts = np.maximum(1, np.floor(N * lengths / lengths.sum()).astype(int))
    while counts.sum() < N:
        counts[np.argmax(lengths / counts)] += 1
    while counts.sum() > N:
        counts[np.argmax(np.where(counts > 1, counts / np.maximum(lengths, 1e-12), -1))] -= 1
    samples = [points[0]]
    for leg, start, c in zip(legs, points[:-1], counts):
        samples.extend(start + leg * (j / c) for j in range(1, c + 1))
    return np.array(samples)


def find_initial_guess(config: PathPlanConfig, strategy: str = "straight", seed=None, jitter: float = 0.1, validate: bool = True):
    """A control sequence that is strictly feasible for the fully relaxed problem.

    The route (straight line or waypoint polyline, waypoints jittered when
    ``seed`` is given) is sampled at ``N + 1`` points and each control is the
    least-squares solution of ``B u_k = p_{k+1} - A x_k``. With
    ``validate=False`` the raw controls are returned unchecked.
    """
    if strategy not in _ROUTES:
        raise ValueError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")
    problem = build_problem(config)
    targets = _sample_route(_route_points(config, strategy, seed, jitter), config.N)
    dyn = problem.dynamics
    x = np.array(config.x0)
    controls = []
    for k in range(config.N):
        B = dyn.f_u(x, np.zeros(2))
        drift = dyn.f(x, np.zeros(2))
        uk, *_ = np.linalg.lstsq(B, targets[k + 1] - drift, rcond=None)
        controls.append(uk)
        x = dyn.f(x, uk)
    u = np.concatenate(controls)
    if not validate:
        return u
    worst = np.max(np.abs(u))
    if worst > config.u_max - BOX_MARGIN:
        raise InfeasibleGuess(
            f"{strategy} guess needs |u|_inf = {worst:.3f}, above u_max - {BOX_MARGIN} = {config.u_max - BOX_MARGIN:.3f}"
        )
    view = NlpView(problem)
    G0 = evaluate_G(view, 0.0, u)
    bad = np.flatnonzero(G0 >= 0)
    if bad.size:
        raise InfeasibleGuess(f"{strategy} guess is not strictly feasible at lam=0: {view.describe(int(bad[0]))}")
    return u


def trajectory(config: PathPlanConfig, u) -> np.ndarray:
    return rollout(build_problem(config), u)
