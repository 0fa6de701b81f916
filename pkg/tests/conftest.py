import functools

import numpy as np
import pytest

from ocp_homotopy.homotopy import HomotopyParams
from ocp_homotopy.pathplan import PathPlanConfig, build_problem, find_initial_guess
from ocp_homotopy.tracker import TrackerConfig, track
from ocp_homotopy.transcription import NlpView

# (guess, h, b0 = c0) for the three reference runs on the default instance
REFERENCE_RUNS = {
    "straight": (0.47, 1.0),
    "two-leg": (0.1, 0.1),
    "three-leg": (0.4, 1.0),
}


@pytest.fixture(scope="session")
def config():
    return PathPlanConfig()


@pytest.fixture(scope="session")
def view(config):
    return NlpView(build_problem(config))


@functools.lru_cache(maxsize=None)
def reference_solve(guess: str):
    """Run (and memoise) one reference solve on the default instance."""
    cfg = PathPlanConfig()
    v = NlpView(build_problem(cfg))
    h, b = REFERENCE_RUNS[guess]
    params = HomotopyParams.constant(find_initial_guess(cfg, guess), v.s, b, b)
    return v, params, track(params, v, TrackerConfig(h=h))


def random_point(rng, view, lam=None, u_scale=1.0, mu_scale=1.0):
    lam = rng.uniform(0, 1) if lam is None else lam
    return np.concatenate([[lam], rng.normal(0.25, u_scale, view.r), rng.uniform(0, mu_scale, view.s)])


ACCEPTANCE_LINES: list = []


def report_criterion(label: str, ok: bool, detail: str = "") -> bool:
    line = f"{label}: {'PASS' if ok else 'FAIL'}" + (f"  ({detail})" if detail else "")
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
