import io
import json

import numpy as np
import pytest
from scipy.linalg import expm

from lca import activation as act
from lca import dynamics as dyn
from lca.errors import NonFiniteState
from lca.model import Dictionary, Problem, generate_instance, normalize_columns

from conftest import orthonormal_problem


def udot_by_loops(phi, y, lam, u, tau):
    """Term-by-term evaluation with explicit sums; the oracle for udot."""
    m, n = phi.shape
    a = [u_i - lam if u_i > lam else (u_i + lam if u_i < -lam else 0.0) for u_i in u]
    out = []
    for i in range(n):
        drive = sum(phi[k, i] * y[k] for k in range(m))
        lateral = 0.0
        for j in range(n):
            if j == i:
                continue
            gij = sum(phi[k, i] * phi[k, j] for k in range(m))
            lateral += gij * a[j]
        out.append((-u[i] - lateral + drive) / tau)
    return np.array(out)


def test_active_set_examples():
    np.testing.assert_array_equal(dyn.active_set([0.1, -0.3, 0.2, 0.05], 0.2), [1])
    assert dyn.active_set(np.zeros(5), 0.1).size == 0


def test_udot_matches_loop_oracle(small_instance):
    problem, _ = small_instance
    spec = act.soft_threshold(problem.lam)
    rng = np.random.default_rng(3)
    for _ in range(20):
        u = rng.normal(scale=0.4, size=problem.n)
        expect = udot_by_loops(problem.phi, problem.y, problem.lam, u, 0.01)
        np.testing.assert_allclose(dyn.udot(problem, spec, u, 0.01), expect, rtol=0, atol=1e-10)


def test_udot_below_threshold_is_leak_plus_drive(small_instance):
    problem, _ = small_instance
    spec = act.soft_threshold(problem.lam)
    u = np.full(problem.n, 0.5 * problem.lam)
    np.testing.assert_allclose(dyn.udot(problem, spec, u), -u + problem.phi.T @ problem.y, atol=1e-15)


def test_udot_vanishes_at_fixed_point():
    problem = orthonormal_problem()
    spec = act.soft_threshold(problem.lam)
    u_star = problem.phi.T @ problem.y
    assert np.max(np.abs(dyn.udot(problem, spec, u_star))) < 1e-14


def test_partitioned_agrees_with_full(small_instance):
    problem, _ = small_instance
    spec = act.soft_threshold(problem.lam)
    rng = np.random.default_rng(5)
    for _ in range(50):
        u = rng.normal(scale=0.4, size=problem.n)
        full = dyn.udot(problem, spec, u)
        part = dyn.rhs_partitioned(problem, spec, u)
        np.testing.assert_allclose(part.a_dot_active, full[part.active], atol=1e-12)
        np.testing.assert_allclose(part.u_dot_inactive, full[part.inactive], atol=1e-12)


def test_partitioned_empty_and_full_sets(small_instance):
    problem, _ = small_instance
    spec = act.soft_threshold(problem.lam)
    empty = dyn.rhs_partitioned(problem, spec, np.zeros(problem.n))
    assert empty.active.size == 0 and empty.a_dot_active.size == 0
    np.testing.assert_allclose(empty.u_dot_inactive, problem.phi.T @ problem.y)
    u = np.full(problem.n, 3.0)
    full = dyn.rhs_partitioned(problem, spec, u)
    assert full.inactive.size == 0
    np.testing.assert_allclose(full.a_dot_active, dyn.udot(problem, spec, u), atol=1e-12)


def test_partitioned_uses_slope_for_generic(small_instance):
    problem, _ = small_instance
    spec = act.tanh_threshold(problem.lam)
    u = np.random.default_rng(1).normal(scale=0.5, size=problem.n)
    part = dyn.rhs_partitioned(problem, spec, u)
    full = dyn.udot(problem, spec, u)
    slope = act.jacobian_diag(spec, u[part.active])
    np.testing.assert_allclose(part.a_dot_active, slope * full[part.active], atol=1e-12)


def test_one_euler_step_from_zero(small_instance):
    problem, _ = small_instance
    spec = act.soft_threshold(problem.lam)
    cfg = dyn.SolverConfig(tau=0.01, dt=0.001)
    s = dyn.step(dyn.LcaState.from_u(0.0, np.zeros(problem.n), spec), problem, spec, cfg)
    np.testing.assert_allclose(s.u, 0.1 * problem.phi.T @ problem.y, atol=1e-15)
    assert s.t == pytest.approx(0.001)


def test_step_at_fixed_point_stays():
    problem = orthonormal_problem()
    spec = act.soft_threshold(problem.lam)
    u_star = problem.phi.T @ problem.y
    s = dyn.step(dyn.LcaState.from_u(0.0, u_star, spec), problem, spec, dyn.SolverConfig(method="rk4"))
    np.testing.assert_allclose(s.u, u_star, atol=1e-14)


def test_simulate_from_fixed_point_converges_immediately():
    problem = orthonormal_problem()
    spec = act.soft_threshold(problem.lam)
    traj = dyn.simulate(problem, spec, dyn.SolverConfig(), u0=problem.phi.T @ problem.y)
    assert traj.converged and traj.steps == 0 and traj.final_state.t == 0.0
    assert traj.switch_events == [] and len(traj) == 1


def test_simulate_orthonormal_reaches_soft_threshold():
    problem = orthonormal_problem()
    spec = act.soft_threshold(problem.lam)
    traj = dyn.simulate(problem, spec, dyn.SolverConfig(max_time=10, residual_tol=1e-10))
    assert traj.converged
    expect = act.apply(spec, problem.phi.T @ problem.y)
    np.testing.assert_allclose(traj.final_state.a, expect, atol=1e-9)


def test_simulate_timing_and_recording(small_instance):
    problem, _ = small_instance
    spec = act.soft_threshold(problem.lam)
    cfg = dyn.SolverConfig(tau=0.01, dt=0.001, max_time=0.0105, residual_tol=1e-300, record_stride=4)
    traj = dyn.simulate(problem, spec, cfg)
    assert traj.steps == 11 and not traj.converged
    np.testing.assert_allclose(traj.t, [0, 0.004, 0.008, 0.011], atol=1e-15)
    assert traj.u.shape == (4, problem.n) and traj.objective.shape == (4,)


def test_switch_events_are_consistent(benchmark_instance):
    problem, _ = benchmark_instance
    spec = act.soft_threshold(problem.lam)
    traj = dyn.simulate(problem, spec, dyn.SolverConfig(max_time=1.0, residual_tol=1e-8))
    assert traj.converged and traj.switch_events
    current = set(traj.active_sets()[0])
    for ev in traj.switch_events:
        assert not set(ev.entered) & current
        assert set(ev.left) <= current
        current = (current | set(ev.entered)) - set(ev.left)
        assert current == set(ev.active)
        assert ev.entered or ev.left
    assert current == set(traj.final_state.active.tolist())
    assert current == set(np.flatnonzero(traj.final_state.a).tolist())


def test_objective_non_increasing(benchmark_instance):
    problem, _ = benchmark_instance
    traj = dyn.simulate(problem, act.soft_threshold(problem.lam), dyn.SolverConfig(max_time=1.0))
    v = traj.objective
    assert np.all(np.diff(v) <= 1e-8 * (1 + np.abs(v[:-1])))


def _no_switch_error(method, dt):
    problem, _ = generate_instance(seed=7, m=4, n=8, s=2, noise_std=0.01, lam=0.1)
    spec = act.soft_threshold(problem.lam)
    # every node starts far above threshold, so a = u - lam*sign(u) throughout
    # and the flow is the affine ODE tau du/dt = -G u + c, solved exactly below
    u0 = 2.0 * np.where(np.arange(problem.n) % 2, 1.0, -1.0)
    sgn = np.sign(u0)
    g = problem.phi.T @ problem.phi
    c = (g - np.eye(problem.n)) @ (problem.lam * sgn) + problem.phi.T @ problem.y
    tau, horizon = 0.01, 0.02
    aug = np.zeros((problem.n + 1, problem.n + 1))
    aug[:-1, :-1] = -g / tau
    aug[:-1, -1] = c / tau
    exact = (expm(aug * horizon) @ np.append(u0, 1.0))[:-1]
    cfg = dyn.SolverConfig(tau=tau, dt=dt, max_time=horizon, residual_tol=1e-300, method=method)
    traj = dyn.simulate(problem, spec, cfg, u0=u0)
    assert traj.switch_events == []
    assert np.all(np.sign(traj.u) == sgn) and np.all(np.abs(traj.u) > problem.lam)
    return np.max(np.abs(traj.final_state.u - exact))


@pytest.mark.parametrize("method,low,high", [("euler", 1.5, 3.0), ("rk4", 8.0, 32.0)])
def test_integrator_order(method, low, high):
    ratio = _no_switch_error(method, 0.001) / _no_switch_error(method, 0.0005)
    assert low <= ratio <= high


def test_non_finite_state_raises():
    problem = orthonormal_problem()
    spec = act.soft_threshold(problem.lam)
    u0 = np.full(problem.n, 1e308)
    with pytest.raises(NonFiniteState), np.errstate(over="ignore", invalid="ignore"):
        dyn.simulate(problem, spec, dyn.SolverConfig(residual_tol=1e-300), u0=u0)


def test_config_guards():
    with pytest.raises(ValueError):
        dyn.SolverConfig(tau=0.01, dt=0.02)
    with pytest.raises(ValueError):
        dyn.SolverConfig(method="midpoint")
    cfg = dyn.SolverConfig(tau=0.02)
    assert cfg.dt == pytest.approx(0.002) and cfg.max_time == pytest.approx(2.0)


def test_generic_activation_alpha_warning():
    problem = orthonormal_problem()
    steep = act.generic(problem.lam, lambda u: 2 * (u - problem.lam * np.sign(u)) * (np.abs(u) > problem.lam),
                        lambda u: 2.0 * (np.abs(u) > problem.lam), alpha=1.0)
    with pytest.warns(RuntimeWarning):
        dyn.simulate(problem, steep, dyn.SolverConfig(max_time=0.05))


def test_csv_export(small_instance):
    problem, _ = small_instance
    traj = dyn.simulate(problem, act.soft_threshold(problem.lam), dyn.SolverConfig(max_time=0.005))
    buf = io.StringIO()
    dyn.write_trajectory_csv(traj, buf, include_vectors=True, comment="run")
    lines = buf.getvalue().splitlines()
    assert lines[0] == "# run"
    header = lines[1].split(",")
    assert header[:3] == ["t", "V", "nnz"] and len(header) == 3 + 2 * problem.n
    assert len(lines) == 2 + len(traj)
    last = lines[-1].split(",")
    assert float(last[1]) == traj.objective[-1]
    assert float(last[3]) == traj.u[-1, 0]


def test_json_export_roundtrips_floats(small_instance):
    problem, _ = small_instance
    traj = dyn.simulate(problem, act.soft_threshold(problem.lam), dyn.SolverConfig(max_time=0.005))
    buf = io.StringIO()
    dyn.write_trajectory_json(traj, buf)
    data = json.loads(buf.getvalue())
    np.testing.assert_array_equal(np.array(data["u"]), traj.u)
    assert len(data["switch_events"]) == len(traj.switch_events)
