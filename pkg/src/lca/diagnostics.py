"""
Instruments for checking the convergence behaviour of LCA runs.

Covers objective evaluation, optimality (critical point) slack, the
output-to-state fixed-point map, switch counting, restricted isometry
constants of visited supports, the exponential rate bound and the
per-coordinate inequalities that the rate argument relies on.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import quad

from . import activation as act
from .dynamics import SolverConfig, Trajectory, simulate, udot
from .errors import DegenerateStart, EmptySupport, UnsupportedCost
from .model import Dictionary, Problem


# --------------------------------------------------------------------------
# objective


def cost(spec: act.ActivationSpec, a: float) -> float:
    """``lam * C(a)``: the penalty attached to a single coefficient.

    For generic activations this integrates the cost gradient from 0 to
    ``|a|`` numerically.
    """
    x = abs(float(a))
    if x == 0:
        return 0.0
    if spec.is_soft:
        return spec.lam * x
    val, _ = quad(lambda s: act.cost_gradient(spec, s) if s > 0 else spec.lam,
                  0.0, x, epsabs=1e-9, epsrel=1e-9, limit=200)
    return float(val)


def penalty(spec: act.ActivationSpec, a, lam: Optional[float] = None) -> float:
    """``lam * sum_n C(a_n)``."""
    a = np.asarray(a, dtype=float)
    if spec.is_soft:
        lam = spec.lam if lam is None else lam
        return float(lam * np.sum(np.abs(a)))
    return float(sum(cost(spec, x) for x in a[a != 0]))


def objective(problem: Problem, spec: act.ActivationSpec, a) -> float:
    """``1/2 ||y - Phi a||^2 + lam * sum C(a_n)``."""
    a = np.asarray(a, dtype=float)
    r = problem.y - problem.phi @ a
    return 0.5 * float(r @ r) + penalty(spec, a, problem.lam)


# --------------------------------------------------------------------------
# optimality


@dataclass(frozen=True)
class CriticalPointReport:
    active_slack: float
    inactive_slack: float
    active_set: Tuple[int, ...]

    def within(self, tol: float) -> bool:
        return self.active_slack <= tol and self.inactive_slack <= tol


def critical_point_slack(problem: Problem, a, spec: Optional[act.ActivationSpec] = None) -> CriticalPointReport:
    """How far ``a`` is from satisfying the l1 optimality conditions.

    With ``rho = Phi^T (y - Phi a)``: on the support ``rho_n`` must equal
    ``lam * sign(a_n)``; off it ``|rho_n| <= lam``.
    """
    if spec is not None and not spec.is_soft:
        raise UnsupportedCost("critical point certification is only implemented for the l1 cost")
    a = np.asarray(a, dtype=float)
    phi, lam = problem.phi, problem.lam
    rho = phi.T @ (problem.y - phi @ a)
    on = a != 0
    active_slack = float(np.max(np.abs(rho[on] - lam * np.sign(a[on])))) if on.any() else 0.0
    inactive_slack = float(max(0.0, np.max(np.abs(rho[~on])) - lam)) if (~on).any() else 0.0
    return CriticalPointReport(active_slack, inactive_slack, tuple(np.flatnonzero(on).tolist()))


def fixed_point_residual(problem: Problem, spec: act.ActivationSpec, u, tau: float = 1.0) -> float:
    """``tau * ||du/dt||_inf``: the size of the unscaled right-hand side."""
    return float(np.max(np.abs(udot(problem, spec, u, tau)))) * tau


def map_output_to_state(problem: Problem, a_star) -> np.ndarray:
    """State ``u* = a* - Phi^T Phi a* + Phi^T y`` whose output is ``a*``
    when ``a*`` is a critical point."""
    a_star = np.asarray(a_star, dtype=float)
    phi = problem.phi
    return a_star + phi.T @ (problem.y - phi @ a_star)


def reference_fixed_point(problem: Problem, spec: act.ActivationSpec, tau: float = 1.0, tol: float = 1e-10,
                          max_time: Optional[float] = None):
    """Accurate fixed point ``u*`` for rate measurements.

    Runs a long LCA simulation and, for the l1 cost, ISTA; both outputs are
    mapped to states and the one with the smaller fixed-point residual is
    returned together with a dict describing both candidates.
    """
    from .baseline import IstaConfig, ista_solve

    cfg = SolverConfig(tau=tau, residual_tol=tol, max_time=max_time or 5000 * tau, record_stride=10**9)
    traj = simulate(problem, spec, cfg)
    candidates = {"lca": map_output_to_state(problem, traj.final_state.a)}
    if spec.is_soft:
        a_ista, _, _ = ista_solve(problem, IstaConfig(tol=tol, max_iters=200_000))
        candidates["ista"] = map_output_to_state(problem, a_ista)
    residuals = {k: fixed_point_residual(problem, spec, u) for k, u in candidates.items()}
    best = min(residuals, key=residuals.get)
    info = {"chosen": best, "residuals": residuals}
    if len(candidates) == 2:
        info["disagreement"] = float(np.max(np.abs(candidates["lca"] - candidates["ista"])))
    return candidates[best], info


# --------------------------------------------------------------------------
# switches and isometry constants


def count_switches(trajectory: Trajectory):
    return len(trajectory.switch_events), list(trajectory.switch_events)


def _columns(dictionary):
    return dictionary.columns if isinstance(dictionary, Dictionary) else np.asarray(dictionary, dtype=float)


def estimate_delta(dictionary, support: Iterable[int]) -> float:
    """Smallest ``delta`` with ``(1-delta)|x|^2 <= |Phi_S x|^2 <= (1+delta)|x|^2``.

    Computed from the extreme eigenvalues of the Gram matrix of the
    selected columns. Supports larger than M give ``delta >= 1``.
    """
    idx = np.unique(np.fromiter(support, dtype=int))
    if idx.size == 0:
        raise EmptySupport("support must contain at least one index")
    sub = _columns(dictionary)[:, idx]
    eig = np.linalg.eigvalsh(sub.T @ sub)
    return float(max(eig[-1] - 1.0, 1.0 - eig[0], 0.0))


def delta_over_trajectory(dictionary, trajectory: Trajectory, gamma_star: Sequence[int]) -> Tuple[float, float]:
    """``(delta on the final support, max delta over visited supports joined
    with the final support)``."""
    star = frozenset(int(i) for i in gamma_star)
    delta_final = estimate_delta(dictionary, star)
    delta_max = delta_final
    for s in set(frozenset(s) for s in trajectory.active_sets()):
        joined = s | star
        if joined != star:
            delta_max = max(delta_max, estimate_delta(dictionary, joined))
    return delta_final, delta_max


@dataclass(frozen=True)
class RateEstimate:
    alpha: float
    delta: float
    tau: float
    speed: float
    valid: bool


def rate_bound(alpha: float, delta: float, tau: float) -> RateEstimate:
    """Guaranteed exponential speed ``(1 - alpha*delta)/tau``; only
    meaningful (``valid``) when ``alpha*delta < 1``."""
    if not (alpha > 0 and delta >= 0 and tau > 0):
        raise ValueError("need alpha > 0, delta >= 0, tau > 0")
    prod = alpha * delta
    return RateEstimate(alpha, delta, tau, (1.0 - prod) / tau, prod < 1.0)


# --------------------------------------------------------------------------
# decay


class DecayCurve(NamedTuple):
    t: np.ndarray
    error: np.ndarray


def decay_curve(trajectory: Trajectory, u_star) -> DecayCurve:
    """``||u(t) - u*|| / ||u(0) - u*||`` at each recorded sample."""
    u_star = np.asarray(u_star, dtype=float)
    dist = np.linalg.norm(trajectory.u - u_star[None, :], axis=1)
    if dist[0] < 1e-14:
        raise DegenerateStart("the trajectory starts at the reference point")
    return DecayCurve(trajectory.t.copy(), dist / dist[0])


def fit_log_slope(t, error, lo: float = 1e-8, hi: float = 1e-2) -> float:
    """Least-squares slope of ``log(error)`` against ``t`` over the samples
    with ``lo <= error <= hi``, i.e. after the transient and before the
    floor set by the solver tolerance."""
    t = np.asarray(t, dtype=float)
    e = np.asarray(error, dtype=float)
    keep = (e >= lo) & (e <= hi)
    if keep.sum() < 3:
        raise ValueError(f"only {keep.sum()} samples in [{lo}, {hi}]; cannot fit a slope")
    slope, _ = np.polyfit(t[keep], np.log(e[keep]), 1)
    return float(slope)


# --------------------------------------------------------------------------
# per-coordinate inequalities


class ErrorVariables(NamedTuple):
    u_tilde: np.ndarray
    a_tilde: np.ndarray


def error_variables(spec: act.ActivationSpec, u, u_star) -> ErrorVariables:
    u = np.asarray(u, dtype=float)
    u_star = np.asarray(u_star, dtype=float)
    return ErrorVariables(u - u_star, act.apply(spec, u) - act.apply(spec, u_star))


def energy(u_tilde) -> float:
    u_tilde = np.asarray(u_tilde, dtype=float)
    return 0.5 * float(u_tilde @ u_tilde)


class Lemma1Result(NamedTuple):
    sign: bool
    bounded: bool
    quadratic: bool
    integral: bool

    @property
    def all(self) -> bool:
        return self.sign and self.bounded and self.quadratic and self.integral


def lemma1_check(spec: act.ActivationSpec, u_star, u_tilde, tol: float = 1e-12,
                 integral_tol: float = 1e-9, nodes: int = 257) -> Lemma1Result:
    """Check the four inequalities relating state and output errors
    around ``u_star``:

    * ``a~_n`` has the sign of ``u~_n`` (or is zero),
    * ``|a~_n| <= alpha |u~_n|``,
    * ``a~^T a~ <= alpha u~^T a~ <= alpha^2 u~^T u~`` on every index subset
      (checked per coordinate, which implies every subset, and on the
      whole vector),
    * ``sum_n int_0^{u~_n} g_n(s) ds <= u~^T a~`` with
      ``g_n(s) = T(s + u*_n) - T(u*_n)``, integrated by the trapezoid rule.
    """
    u_star = np.atleast_1d(np.asarray(u_star, dtype=float))
    ut = np.atleast_1d(np.asarray(u_tilde, dtype=float))
    at = act.apply(spec, ut + u_star) - act.apply(spec, u_star)
    alpha = spec.alpha

    sign_ok = bool(np.all(at * np.sign(ut) >= -tol) & np.all((ut != 0) | (np.abs(at) <= tol)))
    bounded_ok = bool(np.all(np.abs(at) <= alpha * np.abs(ut) + tol))

    ua = ut * at
    quad_ok = bool(
        np.all(at * at <= alpha * ua + tol)
        and np.all(alpha * ua <= alpha**2 * ut * ut + tol)
        and at @ at <= alpha * ua.sum() + tol
        and alpha * ua.sum() <= alpha**2 * (ut @ ut) + tol
    )

    frac = np.linspace(0.0, 1.0, nodes)
    s = ut[:, None] * frac[None, :]
    g = act.apply(spec, s + u_star[:, None]) - act.apply(spec, u_star)[:, None]
    integrals = np.trapezoid(g, s, axis=1) if hasattr(np, "trapezoid") else np.trapz(g, s, axis=1)
    integral_ok = bool(integrals.sum() <= ua.sum() + integral_tol)

    return Lemma1Result(sign_ok, bounded_ok, quad_ok, integral_ok)
