"""One test per acceptance criterion on the default two-obstacle instance.

Every test prints a single ``criterion N: PASS/FAIL`` line; the lines are
repeated in the terminal summary.
"""
import itertools

import numpy as np
import pytest

from ocp_homotopy.diagnostics import FAIL, PASS, SAMPLED_PASS, check_A5_A6_sampled, curve_health, validate_params
from ocp_homotopy.homotopy import (
    HomotopyParams,
    K_partials,
    K_values,
    rho,
    rho_jacobian,
    solve_initial_multipliers,
)
from ocp_homotopy.pathplan import PathPlanConfig, build_problem, find_initial_guess, trajectory
from ocp_homotopy.problem import fd_jacobian
from ocp_homotopy.tracker import Status, TrackerConfig, follow_curve, tangent
from ocp_homotopy.transcription import NlpView, evaluate_G, kkt_residual_alpha

from conftest import REFERENCE_RUNS, reference_solve, report_criterion

SOLVE_BUDGET_S = 60.0


def _endpoint_failures(config, res):
    """Return a list of violated endpoint conditions (empty when all hold)."""
    bad = []
    if res.status is not Status.CONVERGED:
        return [f"status {res.status.value} at lam={res.lam:.4f} after {res.steps} steps"]
    for k, v in res.kkt.items():
        if k != "alpha_inf" and v > 1e-6:
            bad.append(f"kkt {k}={v:.2e}")
    xs = trajectory(config, res.u)
    for ob in config.obstacles:
        d2 = np.sum((xs[1:-1] - np.array(ob.m)) ** 2, axis=1)
        if d2.min() < ob.r**2 - 1e-6:
            bad.append(f"obstacle margin {d2.min() - ob.r**2:.2e}")
    term = np.linalg.norm(xs[-1] - np.array(config.xN))
    if term > config.epsilon + 1e-8:
        bad.append(f"terminal error {term:.4f}")
    if np.max(np.abs(res.u)) > 1 + 1e-8:
        bad.append(f"|u|_inf={np.max(np.abs(res.u)):.4f}")
    if res.seconds > SOLVE_BUDGET_S:
        bad.append(f"runtime {res.seconds:.1f}s")
    return bad


@pytest.mark.parametrize("guess", list(REFERENCE_RUNS))
def test_criterion_1_reference_solves(config, guess):
    _, _, res = reference_solve(guess)
    bad = _endpoint_failures(config, res)
    h, b = REFERENCE_RUNS[guess]
    detail = f"{guess}, h={h}, b0=c0={b}: " + (
        "; ".join(bad) if bad else f"cost {res.cost:.9f}, {res.steps} steps, {res.seconds:.1f}s"
    )
    assert report_criterion(f"criterion 1 [{guess}]", not bad, detail), detail


def test_criterion_1_costs_agree():
    costs = {g: reference_solve(g)[2].cost for g in REFERENCE_RUNS if reference_solve(g)[2].converged}
    spread = max(abs(a - b) for a, b in itertools.combinations(costs.values(), 2)) if len(costs) > 1 else 0.0
    ok = len(costs) == len(REFERENCE_RUNS) and spread <= 1e-4
    detail = f"converged {sorted(costs)}, max pairwise cost gap {spread:.2e}"
    assert report_criterion("criterion 1 [cost agreement]", ok, detail), detail


def _sample_rows(view, rng, n_points, u_scale, mu_low, mu_high):
    """Stack per-row samples (lam, G_i, mu_i, b0_i, c0_i) from random points of the instance."""
    rows = []
    for _ in range(n_points):
        lam = rng.uniform(0, 1)
        u = rng.normal(0.25, u_scale, view.r)
        G = evaluate_G(view, lam, u)
        mu = rng.uniform(mu_low, mu_high, view.s)
        b0 = np.exp(rng.uniform(np.log(0.01), np.log(10), view.s))
        c0 = np.exp(rng.uniform(np.log(0.01), np.log(10), view.s))
        rows.append(np.column_stack([np.full(view.s, lam), G, mu, b0, c0]))
    return np.vstack(rows)


def test_criterion_2_K_increasing_in_mu(view):
    rng = np.random.default_rng(2)
    S = _sample_rows(view, rng, 200, 1.0, -5, 20)
    lam, G, mu, b0, c0 = S.T
    keep = G < (1 - lam) * b0
    lam, G, mu, b0, c0 = (a[keep][:10_000] for a in (lam, G, mu, b0, c0))
    dK_dmu, _, _ = K_partials(lam, G, mu, b0, c0)
    increase = K_values(lam, G, mu + 1e-3, b0, c0) > K_values(lam, G, mu, b0, c0)
    failures = int(np.sum(dK_dmu <= 0) + np.sum(~increase))
    ok = lam.size == 10_000 and failures == 0
    assert report_criterion("criterion 2", ok, f"{lam.size} samples, {failures} failures")


def test_criterion_3_K_negative_off_region(view):
    rng = np.random.default_rng(3)
    S = _sample_rows(view, rng, 200, 3.0, -20, 20)
    lam, G, mu, b0, c0 = S.T
    keep = (mu < 0) | ((1 - lam) * b0 - G < 0)
    lam, G, mu, b0, c0 = (a[keep][:10_000] for a in (lam, G, mu, b0, c0))
    failures = int(np.sum(K_values(lam, G, mu, b0, c0) >= 0))
    ok = lam.size == 10_000 and failures == 0
    assert report_criterion("criterion 3", ok, f"{lam.size} samples, {failures} failures")


def test_criterion_4_initial_multipliers(config, view):
    rng = np.random.default_rng(4)
    worst_res, worst_gap, nonpos, n = 0.0, 0.0, 0, 0
    while n < 100:
        guess = ("straight", "two-leg", "three-leg")[n % 3]
        seed = None if guess == "straight" else int(rng.integers(1 << 30))
        u0 = find_initial_guess(config, guess, seed=seed)
        b0 = np.exp(rng.uniform(np.log(0.01), np.log(10), view.s))
        c0 = np.exp(rng.uniform(np.log(0.01), np.log(10), view.s))
        params = HomotopyParams(u0, b0, c0)
        mu_b = solve_initial_multipliers(view, params, "bisection")
        mu_n = solve_initial_multipliers(view, params, "newton")
        nonpos += int(np.sum(mu_b <= 0))
        worst_res = max(worst_res, float(np.max(np.abs(rho(view, params, np.concatenate([[0.0], u0, mu_b]))))))
        worst_gap = max(worst_gap, float(np.max(np.abs(mu_b - mu_n))))
        n += 1
    ok = nonpos == 0 and worst_res <= 1e-10 and worst_gap <= 1e-10
    detail = f"{n} params, max |rho(0)| {worst_res:.1e}, max bisection/Newton gap {worst_gap:.1e}"
    assert report_criterion("criterion 4", ok, detail)


def test_criterion_5_endpoint_identity(config, view):
    rng = np.random.default_rng(5)
    params = HomotopyParams.constant(find_initial_guess(config, "straight"), view.s, 1.0, 1.0)
    worst = 0.0
    for _ in range(1000):
        u = rng.normal(0.25, 1.0, view.r)
        mu = rng.uniform(0, 5, view.s) * (rng.uniform(size=view.s) < 0.5)
        diff = rho(view, params, np.concatenate([[1.0], u, mu])) - kkt_residual_alpha(view, 1.0, u, mu)
        worst = max(worst, float(np.max(np.abs(diff))))
    assert report_criterion("criterion 5", worst <= 1e-14, f"1000 points, max |rho - alpha| = {worst:.1e}")


def _kink_distance(view, params, w):
    lam, u, mu = w[0], w[1 : 1 + view.r], w[1 + view.r :]
    return np.abs((1 - lam) * params.b0 - evaluate_G(view, lam, u) - mu)


def test_criterion_6_jacobian_vs_fd(config, view):
    rng = np.random.default_rng(6)
    params = HomotopyParams.constant(find_initial_guess(config, "straight"), view.s, 1.0, 1.0)
    worst, excluded = 0.0, 0
    for n in range(100):
        lam = rng.uniform(0, 1)
        u = rng.normal(0.25, 0.8, view.r)
        mu = rng.uniform(0, 3, view.s)
        if n % 2:
            # active-like: put half the multipliers close to the kink t = d - mu = 0
            d = (1 - lam) * params.b0 - evaluate_G(view, lam, u)
            near = rng.uniform(size=view.s) < 0.5
            mu[near] = d[near] + rng.normal(0, 1e-3, near.sum())
        w = np.concatenate([[lam], u, mu])
        J = rho_jacobian(view, params, w)
        fd = fd_jacobian(lambda ww: rho(view, params, ww), w)
        rows = np.ones(view.r + view.s, bool)
        rows[view.r :] = _kink_distance(view, params, w) >= 1e-8
        excluded += int(np.sum(~rows))
        err = np.abs(J[rows] - fd[rows]) / np.maximum(1.0, np.abs(fd[rows]))
        worst = max(worst, float(err.max()))
    detail = f"100 points, max rel err {worst:.1e}, {excluded} kink rows excluded"
    assert report_criterion("criterion 6", worst <= 1e-6, detail)


def test_criterion_7_curve_health(view):
    results = []
    for guess in REFERENCE_RUNS:
        _, params, res = reference_solve(guess)
        res_max = max(r.res_inf for r in res.trace) if res.trace else np.inf
        margins, rank = curve_health(params, view, res.trace, tol=1e-8, rank_tol=1e-10, every=10)
        ok = res_max <= 1e-10 and margins.status == PASS and rank.status == PASS
        results.append((guess, ok, f"{guess}: max |rho| {res_max:.1e}, margins {margins.status}, rank {rank.status}"))
    ok = all(r[1] for r in results)
    assert report_criterion("criterion 7", ok, "; ".join(r[2] for r in results))


def test_criterion_8_lambda_may_decrease():
    # S-shaped zero curve lam = z/2 + 0.4 sin(3z): two folds before reaching lam = 1
    run = follow_curve(
        lambda w: np.array([w[0] - 0.5 * w[1] - 0.4 * np.sin(3 * w[1])]),
        lambda w: np.array([[1.0, -0.5 - 1.2 * np.cos(3 * w[1])]]),
        np.zeros(2),
        TrackerConfig(h=0.05),
    )
    lams = np.array([0.0] + [r.lam for r in run.trace])
    backwards = int(np.sum(np.diff(lams) < 0))
    ok = run.status is Status.CONVERGED and backwards > 0 and lams[-1] >= 1.0
    assert report_criterion("criterion 8", ok, f"{run.status.value}, {backwards} accepted steps with dlam < 0")


def test_criterion_9_tangent_orientation():
    rng = np.random.default_rng(9)
    bad = 0
    for _ in range(100):
        k = int(rng.integers(1, 40))
        J = rng.normal(size=(k, k + 1))
        t, _ = tangent(J, rank_tol=1e-14)
        if not (np.linalg.det(np.vstack([J, t])) > 0 > np.linalg.det(np.vstack([J, -t]))):
            bad += 1
    assert report_criterion("criterion 9", bad == 0, f"100 Jacobians, {bad} misoriented")


def test_criterion_10_diagnostics(config, view):
    u0 = find_initial_guess(config, "straight")
    a2, b0v = validate_params(view, HomotopyParams.constant(u0, view.s, 1.0, 1.0))
    a5, a6, _ = check_A5_A6_sampled(view, samples=200, seed=0)
    mutated = NlpView(build_problem(PathPlanConfig(obstacle_schedule="shrink")))
    m5, _, _ = check_A5_A6_sampled(mutated, samples=200, seed=0)
    ok = (
        a2.status == PASS
        and b0v.status == PASS
        and a5.status == SAMPLED_PASS
        and a6.status == SAMPLED_PASS
        and m5.status == FAIL
        and len(m5.witnesses) > 0
    )
    detail = f"default: A2 {a2.status}, B0 {b0v.status}, A5 {a5.status}, A6 {a6.status}; shrinking obstacles: A5 {m5.status}"
    assert report_criterion("criterion 10", ok, detail)
