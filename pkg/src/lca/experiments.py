"""
Experiment drivers behind the command line: convergence traces, switch
count statistics and decay-rate measurements on synthetic instances.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional

import numpy as np

from . import activation as act
from . import diagnostics as dg
from .baseline import IstaConfig, ista_solve
from .dynamics import SolverConfig, simulate
from .model import Dictionary, dct_basis, generate_instance


@dataclass(frozen=True)
class InstanceParams:
    """Generator settings; defaults are the 256 x 512 setup with s = 5."""

    m: int = 256
    n: Optional[int] = None
    s: int = 5
    noise: float = 0.0062
    seed: int = 0
    lam: float = 0.025
    dictionary: str = "union"

    def __post_init__(self):
        if self.dictionary not in ("union", "dct"):
            raise ValueError(f"dictionary must be 'union' or 'dct', got {self.dictionary!r}")
        if self.n is None:
            object.__setattr__(self, "n", 2 * self.m if self.dictionary == "union" else self.m)
        if self.m < 2 or self.n < 1 or self.s < 1:
            raise ValueError("m, n and s must be positive (m >= 2)")
        if self.noise < 0:
            raise ValueError("noise must be nonnegative")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")

    def build(self, seed: Optional[int] = None):
        """``union`` is the identity/DCT union (n = 2m); ``dct`` is the
        orthonormal DCT basis alone (n = m)."""
        dictionary = None
        if self.dictionary == "dct":
            dictionary = Dictionary(dct_basis(self.m), kind="dct", params={"m": self.m})
        return generate_instance(self.seed if seed is None else seed,
                                 self.m, self.n, self.s, self.noise, self.lam, dictionary=dictionary)

    def as_dict(self):
        return asdict(self)


# --------------------------------------------------------------------------
# convergence traces


def run_convergence(params: InstanceParams, config: SolverConfig, n_nodes: int = 10,
                    starts: int = 30, start_scale: float = 0.5, activation: str = "soft") -> Dict:
    """Node traces from ``u(0) = 0``, the final solution next to the truth and
    ISTA, and two-node traces from ``starts`` random initial states."""
    problem, truth = params.build()
    spec = act.by_name(activation, problem.lam)
    rng = np.random.Generator(np.random.PCG64([params.seed, 1]))

    traj = simulate(problem, spec, config)
    final_active = np.flatnonzero(traj.final_state.a)
    inactive = np.setdiff1d(np.arange(problem.n), final_active)
    k_on = min(len(final_active), max(1, n_nodes // 2))
    k_off = min(len(inactive), n_nodes - k_on)
    nodes = np.sort(np.concatenate([
        rng.choice(final_active, size=k_on, replace=False) if k_on else np.array([], int),
        rng.choice(inactive, size=k_off, replace=False) if k_off else np.array([], int),
    ])).astype(int)
    node_rows = []
    for i, t in enumerate(traj.t):
        for j in nodes:
            node_rows.append((float(t), int(j), "active" if j in final_active else "inactive", float(traj.u[i, j])))

    ista_a = None
    if spec.is_soft:
        ista_a, _, _ = ista_solve(problem, IstaConfig(tol=1e-10))
    joint = set(truth.support) | set(final_active.tolist())
    if ista_a is not None:
        joint |= set(np.flatnonzero(ista_a).tolist())
    solution_rows = [
        (int(j), float(truth.a0[j]), float(traj.final_state.a[j]),
         float(ista_a[j]) if ista_a is not None else float("nan"))
        for j in sorted(joint)
    ]

    pair = final_active[:2] if len(final_active) >= 2 else np.arange(2)
    start_rows = []
    finals = []
    all_converged = traj.converged
    for k in range(starts):
        u0 = start_scale * rng.standard_normal(problem.n)
        tr = simulate(problem, spec, config, u0=u0)
        all_converged &= tr.converged
        finals.append(tr.final_state.u)
        for i, t in enumerate(tr.t):
            start_rows.append((k, float(t), float(tr.u[i, pair[0]]), float(tr.u[i, pair[1]])))
    finals = np.array(finals) if finals else np.zeros((0, problem.n))
    spread = 0.0
    if len(finals) > 1:
        spread = float(max(np.max(np.abs(finals - f[None, :])) for f in finals))
    return {
        "problem": problem,
        "truth": truth,
        "trajectory": traj,
        "nodes": nodes.tolist(),
        "node_rows": node_rows,
        "solution_rows": solution_rows,
        "pair": [int(pair[0]), int(pair[1])],
        "start_rows": start_rows,
        "start_finals": finals,
        "summary": {
            "converged": bool(traj.converged),
            "all_starts_converged": bool(all_converged),
            "max_pairwise_linf": spread,
            "lca_support": final_active.tolist(),
            "true_support": list(truth.support),
            "lca_vs_ista_linf": (float(np.max(np.abs(traj.final_state.a - ista_a)))
                                 if ista_a is not None else None),
        },
    }


# --------------------------------------------------------------------------
# switch statistics


def _switch_trial(args):
    params, seed, config, activation = args
    problem, _ = params.build(seed)
    spec = act.by_name(activation, problem.lam)
    cfg = SolverConfig(tau=config.tau, dt=config.dt, max_time=config.max_time,
                       residual_tol=config.residual_tol, record_stride=10**9, method=config.method)
    traj = simulate(problem, spec, cfg)
    return seed, len(traj.switch_events), bool(traj.converged)


def run_switches(params: InstanceParams, config: SolverConfig, trials: int = 1000,
                 workers: int = 1, bin_width: int = 1, activation: str = "soft") -> Dict:
    """Switch counts for ``trials`` instances seeded ``seed, seed+1, ...``.

    Trials may run in a process pool; results are kept in seed order.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if bin_width < 1:
        raise ValueError("bin width must be >= 1")
    jobs = [(params, params.seed + i, config, activation) for i in range(trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_switch_trial, jobs, chunksize=max(1, trials // (4 * workers))))
    else:
        results = [_switch_trial(j) for j in jobs]
    counts = np.array([r[1] for r in results], dtype=int)
    bins = (counts // bin_width) * bin_width
    edges, freq = np.unique(bins, return_counts=True)
    histogram = [(int(e), 100.0 * int(c) / trials) for e, c in zip(edges, freq)]
    return {
        "seeds": [r[0] for r in results],
        "counts": counts.tolist(),
        "converged": [r[2] for r in results],
        "histogram": histogram,
        "summary": {
            "trials": trials,
            "n": params.n,
            "min": int(counts.min()),
            "median": float(np.median(counts)),
            "max": int(counts.max()),
            "all_converged": bool(all(r[2] for r in results)),
        },
    }


# --------------------------------------------------------------------------
# decay rate


def run_rate(params: InstanceParams, config: SolverConfig, activation: str = "soft",
             fit_range=(1e-8, 1e-2)) -> Dict:
    """Normalized distance to the fixed point against the two exponential
    bounds built from the final support and the largest visited support."""
    problem, _ = params.build()
    spec = act.by_name(activation, problem.lam)
    tau = config.tau
    u_star, ref_info = dg.reference_fixed_point(problem, spec, tau=tau, tol=min(1e-10, config.residual_tol))
    traj = simulate(problem, spec, config)
    gamma_star = np.flatnonzero(np.abs(u_star) > problem.lam)
    delta_final, delta_max = dg.delta_over_trajectory(problem.dictionary, traj, gamma_star)
    curve = dg.decay_curve(traj, u_star)
    alpha = spec.alpha
    rate_final = dg.rate_bound(alpha, delta_final, tau)
    rate_max = dg.rate_bound(alpha, delta_max, tau)
    bound_final = np.exp(-rate_final.speed * curve.t)
    bound_max = np.exp(-rate_max.speed * curve.t)
    slope = dg.fit_log_slope(curve.t, curve.error, *fit_range)
    below_max = bool(np.all(curve.error <= bound_max * (1 + 1e-12)))
    below_final = bool(np.all(curve.error <= bound_final * (1 + 1e-12)))
    return {
        "problem": problem,
        "trajectory": traj,
        "u_star": u_star,
        "curve": curve,
        "bound_final": bound_final,
        "bound_max": bound_max,
        "summary": {
            "alpha": alpha,
            "tau": tau,
            "delta_final": delta_final,
            "delta_max": delta_max,
            "final_support_size": int(gamma_star.size),
            "max_visited_support_size": int(max(len(s) for s in traj.active_sets())),
            "fitted_slope": slope,
            "slope_bound_final": -rate_final.speed,
            "slope_bound_max": -rate_max.speed,
            "valid_final": rate_final.valid,
            "valid_max": rate_max.valid,
            "below_bound_max": below_max,
            "below_bound_final": below_final,
            "converged": bool(traj.converged),
            "reference": ref_info,
        },
    }


def default_workers() -> int:
    return max(1, min(4, os.cpu_count() or 1))


# --------------------------------------------------------------------------
# invariant suite


def run_validation(quick: bool = False, alpha: Optional[float] = None, seed: int = 0) -> List[tuple]:
    """Run the invariant checks; returns ``(name, passed, detail)`` rows.

    ``alpha`` overrides the soft threshold's derivative bound, which is
    only useful to confirm that a wrong bound is caught.
    """
    from .dynamics import rhs_partitioned, udot
    from .activation import jacobian_diag

    rng = np.random.Generator(np.random.PCG64(seed))
    lam = 0.025
    soft = act.soft_threshold(lam) if alpha is None else act.soft_threshold(lam, alpha=alpha)
    smooth = act.tanh_threshold(lam)
    trials = 500 if quick else 10_000
    rows = []

    for spec in (soft, smooth):
        rep = act.validate_conditions(spec, (lam, 100 * lam), 2001)
        rows.append((f"activation conditions [{spec.name}]", rep.ok,
                     f"worst violation {rep.worst_violation:.3g}"))

    for spec in (soft, smooth):
        fails = {"sign": 0, "bounded": 0, "quadratic": 0, "integral": 0}
        for _ in range(trials):
            n = int(rng.integers(1, 9))
            u_star = rng.normal(scale=4 * lam, size=n)
            u_tilde = rng.normal(scale=4 * lam, size=n)
            res = dg.lemma1_check(spec, u_star, u_tilde)
            for key, ok in res._asdict().items():
                fails[key] += not ok
        for key, bad in fails.items():
            rows.append((f"error inequality '{key}' [{spec.name}, alpha={spec.alpha:g}]", bad == 0,
                         f"{trials - bad}/{trials} trials"))

    params = InstanceParams(m=32, n=64, s=3, noise=0.0062, lam=lam, seed=seed)
    problem, _ = params.build()
    cfg = SolverConfig(tau=0.01, dt=0.001, residual_tol=1e-8, max_time=50.0)
    traj = simulate(problem, soft, cfg)
    v = traj.objective
    mono = bool(np.all(np.diff(v) <= 1e-8 * (1 + np.abs(v[:-1]))))
    rows.append(("objective non-increasing along a run", mono and traj.converged,
                 f"{len(v)} samples, converged={traj.converged}"))

    a_ista, _, _ = ista_solve(problem, IstaConfig(tol=1e-10))
    gap = float(np.max(np.abs(traj.final_state.a - a_ista)))
    rows.append(("LCA matches ISTA (32x64, s=3)", gap <= 1e-3, f"linf gap {gap:.3g}"))

    small, _ = InstanceParams(m=4, n=8, s=2, noise=0.01, lam=0.1, seed=seed).build()
    worst = 0.0
    for _ in range(20 if quick else 100):
        u = rng.normal(scale=0.3, size=8)
        part = rhs_partitioned(small, soft, u)
        full = udot(small, soft, u)
        chain = jacobian_diag(soft, u) * full
        worst = max(worst,
                    float(np.max(np.abs(part.a_dot_active - chain[part.active]), initial=0.0)),
                    float(np.max(np.abs(part.u_dot_inactive - full[part.inactive]), initial=0.0)))
    rows.append(("partitioned dynamics identity", worst <= 1e-12, f"max deviation {worst:.3g}"))
    return rows
