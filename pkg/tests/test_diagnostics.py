import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lca import activation as act
from lca import diagnostics as dg
from lca.dynamics import SolverConfig, simulate
from lca.errors import DegenerateStart, EmptySupport, UnsupportedCost
from lca.model import Dictionary, Problem, build_canonical_sinusoid_dictionary, dct_basis

from conftest import orthonormal_problem


def identity_problem(y, lam):
    return Problem(Dictionary(np.eye(len(y))), np.asarray(y, dtype=float), lam)


def test_objective_at_zero(small_instance):
    problem, _ = small_instance
    spec = act.soft_threshold(problem.lam)
    assert dg.objective(problem, spec, np.zeros(problem.n)) == pytest.approx(0.5 * problem.y @ problem.y)


def test_objective_identity_example():
    # 1/2 |(1,0) - (0.5,0)|^2 + 0.3 * 0.5 = 0.125 + 0.15
    problem = identity_problem([1.0, 0.0], 0.3)
    spec = act.soft_threshold(0.3)
    assert dg.objective(problem, spec, [0.5, 0.0]) == pytest.approx(0.275, abs=1e-15)


def test_generic_cost_matches_closed_form_when_available():
    lam = 0.2
    spec = act.generic(lam, lambda u: u - lam * np.sign(u) * (np.abs(u) > lam) - u * (np.abs(u) <= lam),
                       lambda u: 1.0 * (np.abs(u) > lam), 1.0, name="soft-as-generic")
    for a in (0.0, 0.3, -1.7):
        assert dg.cost(spec, a) == pytest.approx(lam * abs(a), abs=1e-8)


def test_generic_cost_tanh_vs_manual_quadrature():
    lam = 0.1
    spec = act.tanh_threshold(lam)
    a = 0.4
    grid = np.linspace(0, a, 4001)[1:]
    vals = np.array([act.cost_gradient(spec, x) for x in grid])
    trapezoid = getattr(np, "trapezoid", None) or np.trapz
    manual = trapezoid(np.concatenate([[lam], vals]), np.concatenate([[0.0], grid]))
    assert dg.cost(spec, a) == pytest.approx(manual, abs=1e-6)


def test_critical_point_slack_exact_solution():
    problem = identity_problem([1.0, -0.05, 0.2], 0.1)
    rep = dg.critical_point_slack(problem, [0.9, 0.0, 0.1])
    assert rep.active_slack == pytest.approx(0.0, abs=1e-15)
    assert rep.inactive_slack == 0.0
    assert rep.active_set == (0, 2) and rep.within(1e-12)


def test_critical_point_slack_detects_violations():
    problem = identity_problem([1.0, 0.5], 0.1)
    rep = dg.critical_point_slack(problem, [1.0, 0.0])
    assert rep.active_slack == pytest.approx(0.1)
    assert rep.inactive_slack == pytest.approx(0.4)
    assert not rep.within(0.05)


def test_critical_point_rejects_generic_cost(small_instance):
    problem, _ = small_instance
    with pytest.raises(UnsupportedCost):
        dg.critical_point_slack(problem, np.zeros(problem.n), act.tanh_threshold(problem.lam))


def test_map_output_to_state_is_a_fixed_point():
    problem = orthonormal_problem()
    spec = act.soft_threshold(problem.lam)
    a_star = act.apply(spec, problem.phi.T @ problem.y)
    u_star = dg.map_output_to_state(problem, a_star)
    np.testing.assert_allclose(act.apply(spec, u_star), a_star, atol=1e-14)
    assert dg.fixed_point_residual(problem, spec, u_star) < 1e-14


def test_reference_fixed_point_agrees(benchmark_instance):
    problem, _ = benchmark_instance
    spec = act.soft_threshold(problem.lam)
    u_star, info = dg.reference_fixed_point(problem, spec, tau=0.01)
    assert min(info["residuals"].values()) < 1e-9
    assert info["disagreement"] < 1e-7
    assert dg.critical_point_slack(problem, act.apply(spec, u_star)).within(1e-8)


def test_delta_orthonormal_is_zero():
    d = build_canonical_sinusoid_dictionary(16)
    assert dg.estimate_delta(d, range(16)) == pytest.approx(0.0, abs=1e-12)
    assert dg.estimate_delta(d, range(16, 32)) == pytest.approx(0.0, abs=1e-12)


def test_delta_identical_columns_is_one():
    col = np.array([[0.6], [0.8]])
    assert dg.estimate_delta(np.hstack([col, col]), [0, 1]) == pytest.approx(1.0, abs=1e-12)


def test_delta_two_columns_matches_coherence():
    d = build_canonical_sinusoid_dictionary(8)
    mu = abs(d.columns[:, 0] @ d.columns[:, 9])
    assert dg.estimate_delta(d, [0, 9]) == pytest.approx(mu, abs=1e-12)


def test_delta_monotone_over_nested_supports():
    d = build_canonical_sinusoid_dictionary(32)
    order = np.random.default_rng(0).permutation(64)
    deltas = [dg.estimate_delta(d, order[:k]) for k in range(1, 64)]
    assert np.all(np.diff(deltas) >= -1e-12)
    assert deltas[-1] >= 1.0 - 1e-12


def test_delta_empty_support():
    with pytest.raises(EmptySupport):
        dg.estimate_delta(np.eye(3), [])


def test_rate_bound_values():
    assert dg.rate_bound(1.0, 0.0, 1.0).speed == 1.0
    r = dg.rate_bound(1.0, 0.5, 0.01)
    assert r.speed == pytest.approx(50.0) and r.valid
    assert not dg.rate_bound(1.0, 1.0, 0.01).valid
    speeds = [dg.rate_bound(1.0, d, 0.01).speed for d in np.linspace(0, 0.99, 20)]
    assert np.all(np.diff(speeds) < 0)
    with pytest.raises(ValueError):
        dg.rate_bound(0.0, 0.1, 1.0)


def test_decay_curve_and_slope():
    problem = orthonormal_problem()
    spec = act.soft_threshold(problem.lam)
    u_star = problem.phi.T @ problem.y
    traj = simulate(problem, spec, SolverConfig(max_time=1.0, residual_tol=1e-13))
    curve = dg.decay_curve(traj, u_star)
    assert curve.error[0] == 1.0
    # orthonormal: each Euler step contracts the error by exactly 1 - dt/tau
    slope = dg.fit_log_slope(curve.t, curve.error)
    assert slope == pytest.approx(np.log(0.9) / 0.001, rel=1e-6)
    with pytest.raises(DegenerateStart):
        dg.decay_curve(traj, traj.u[0])


def test_fit_log_slope_exact_exponential():
    t = np.linspace(0, 1, 200)
    assert dg.fit_log_slope(t, np.exp(-20 * t)) == pytest.approx(-20.0)
    with pytest.raises(ValueError):
        dg.fit_log_slope(t, np.ones_like(t))


def test_error_variables_and_energy():
    spec = act.soft_threshold(0.1)
    ev = dg.error_variables(spec, [0.5, 0.0], [0.2, 0.3])
    np.testing.assert_allclose(ev.u_tilde, [0.3, -0.3])
    np.testing.assert_allclose(ev.a_tilde, [0.3, -0.2])
    assert dg.energy(ev.u_tilde) == pytest.approx(0.09)


def test_error_inequalities_scalar_example():
    lam = 0.1
    spec = act.soft_threshold(lam)
    res = dg.lemma1_check(spec, [0.0], [2 * lam])
    assert res.all
    ev = dg.error_variables(spec, [2 * lam], [0.0])
    assert ev.a_tilde[0] == pytest.approx(lam)


def test_error_inequalities_flag_inflated_alpha():
    # claim alpha = 0.5 for the soft threshold: the bound |a~| <= alpha |u~| breaks
    spec = act.soft_threshold(0.1, alpha=0.5)
    res = dg.lemma1_check(spec, [1.0], [1.0])
    assert not res.bounded and not res.quadratic


state = st.floats(min_value=-3, max_value=3, allow_nan=False)


@given(st.lists(st.tuples(state, state), min_size=1, max_size=12), st.sampled_from(["soft", "tanh"]))
@settings(max_examples=200, deadline=None)
def test_error_inequalities_hold_for_valid_activations(pairs, name):
    spec = act.by_name(name, 0.1)
    u_star = np.array([p[0] for p in pairs])
    u_tilde = np.array([p[1] for p in pairs])
    assert dg.lemma1_check(spec, u_star, u_tilde).all


def test_delta_over_trajectory(benchmark_instance):
    problem, _ = benchmark_instance
    spec = act.soft_threshold(problem.lam)
    traj = simulate(problem, spec, SolverConfig(max_time=1.0, residual_tol=1e-8))
    star = traj.final_state.active
    d_final, d_max = dg.delta_over_trajectory(problem.dictionary, traj, star)
    assert 0 <= d_final <= d_max
    assert d_final == pytest.approx(dg.estimate_delta(problem.dictionary, star))
    assert dg.count_switches(traj)[0] == len(traj.switch_events)
