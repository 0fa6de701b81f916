import json

import numpy as np
import pytest

from ocp_homotopy.diagnostics import (
    FAIL,
    NOT_CHECKED,
    PASS,
    SAMPLED_PASS,
    AssumptionReport,
    check_A5_A6_sampled,
    check_feasible,
    curve_health,
    validate_params,
    verify_kkt,
)
from ocp_homotopy.homotopy import HomotopyParams
from ocp_homotopy.pathplan import PathPlanConfig, build_problem
from ocp_homotopy.problem import ConstraintFamily, Dynamics, OcpProblem, RunningCost
from ocp_homotopy.tracker import TraceRecord
from ocp_homotopy.transcription import NlpView, evaluate_G

from conftest import reference_solve

STRAIGHT = np.full(40, 0.5)


def scalar_view(value, dlam=None, kind="input"):
    fam = ConstraintFamily("g", kind, value, (0,) if kind == "input" else (1,), convex=False, dlam=dlam)
    kw = {"input_constraints": [fam]} if kind == "input" else {"state_constraints": [fam]}
    p = OcpProblem(
        n=1, m=1, N=1, x0=[0.0], dynamics=Dynamics.affine([[1.0]], [[1.0]]),
        running_cost=RunningCost(lambda x, u: 0.5 * float(u @ u), grad_u=lambda x, u: np.asarray(u, float)), **kw
    )
    return NlpView(p)


def test_params_pass(view):
    res = validate_params(view, HomotopyParams.constant(STRAIGHT, 119))
    assert [c.status for c in res] == [PASS, PASS]


def test_params_uniform_interior():
    v = scalar_view(lambda lam, u: float(u[0]) - 0.5)
    res = validate_params(v, HomotopyParams(np.zeros(1), np.ones(1), np.ones(1)))
    assert [c.status for c in res] == [PASS, PASS]


def test_boundary_guess_fails_a2(view):
    u = STRAIGHT.copy()
    u[0] = 1.5  # box row +u1 at k=0 sits at +0.5
    u[2] = -0.5  # keep x_N on target
    res = validate_params(view, HomotopyParams.constant(u, 119))
    assert res[0].status == FAIL
    assert res[0].witnesses[0]["point"]["where"].startswith("row 39")
    assert res[0].witnesses[0]["value"] == pytest.approx(0.5)


def test_b0_equal_to_G_fails(view):
    u = STRAIGHT.copy()
    u[0], u[2] = 1.5, -0.5
    G0 = evaluate_G(view, 0.0, u)
    b0 = np.where(G0 > 0, G0, 1.0)
    res = validate_params(view, HomotopyParams(u, b0, np.ones(119)))
    assert res[1].status == FAIL and res[1].witnesses[0]["point"]["row"] == 39


def test_sampled_checks_default(view):
    a5, a6, a7 = check_A5_A6_sampled(view, samples=50)
    assert a5.status == SAMPLED_PASS and a6.status == SAMPLED_PASS
    assert a7.status == NOT_CHECKED


def test_decreasing_family_fails_a5():
    v = scalar_view(lambda lam, u: -lam + float(u[0]), dlam=lambda lam, u: -1.0)
    a5, _, _ = check_A5_A6_sampled(v, samples=20)
    assert a5.status == FAIL
    w = a5.witnesses[0]
    # G(lam2) - G(lam1) < 0 although lam2 > lam1
    assert w["point"]["lam2"] > w["point"]["lam1"]
    assert w["value"] == pytest.approx(-(w["point"]["lam2"] - w["point"]["lam1"]))
    assert "row 0" in w["point"]["where"]


def test_shrinking_obstacles_fail_a5():
    v = NlpView(build_problem(PathPlanConfig(obstacle_schedule="shrink")))
    a5, a6, _ = check_A5_A6_sampled(v, samples=30)
    assert a5.status == FAIL and a5.witnesses
    assert "obstacle" in a5.witnesses[0]["point"]["where"]


def test_kkt_pass_interior():
    v = scalar_view(lambda lam, u: float(u[0]) - 1.0)
    assert verify_kkt(v, np.zeros(1), np.zeros(1)).status == PASS


def test_kkt_negative_multiplier():
    v = scalar_view(lambda lam, u: float(u[0]) - 1.0)
    res = verify_kkt(v, np.zeros(1), np.array([-1e-3]), tol=1e-6)
    assert res.status == FAIL
    conditions = {w["point"]["condition"] for w in res.witnesses}
    assert "dual" in conditions


def test_kkt_on_solved_endpoint(view):
    _, _, res = reference_solve("three-leg")
    assert verify_kkt(view, res.u, res.mu, tol=1e-6).status == PASS
    assert check_feasible(view, 1.0, res.u, tol=1e-9)
    assert not check_feasible(view, 1.0, STRAIGHT)


def test_curve_health_pass(view):
    _, params, res = reference_solve("three-leg")
    margins, rank = curve_health(params, view, res.trace)
    assert margins.status == PASS and rank.status == PASS


def test_curve_health_injected_faults(view):
    _, params, res = reference_solve("three-leg")
    bad = res.trace[3]
    w = bad.w.copy()
    w[41] = -1.0
    trace = list(res.trace)
    trace[3] = TraceRecord(bad.iter, bad.lam, bad.arclen, bad.res_inf, bad.tangent_lambda, bad.min_margin, 0, w)
    margins, rank = curve_health(params, view, trace, jacobian=lambda w: np.zeros((159, 160)))
    assert margins.status == FAIL and margins.witnesses[0]["point"]["iter"] == bad.iter
    assert margins.witnesses[0]["value"] == pytest.approx(-1.0)
    assert rank.status == FAIL
    with pytest.raises(ValueError):
        curve_health(params, view, [])


def test_report_json_roundtrip(view):
    report = AssumptionReport().extend(validate_params(view, HomotopyParams.constant(STRAIGHT, 119)))
    data = json.loads(report.to_json())
    assert data[0] == {"check": "A2-interior", "status": "pass", "witnesses": [], "detail": data[0]["detail"]}
    assert report.ok and report["B0-valid"].status == PASS
    with pytest.raises(KeyError):
        report["A9"]
