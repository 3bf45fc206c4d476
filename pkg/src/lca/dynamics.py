"""
Simulation of the LCA network

    tau * du/dt = -u - (Phi^T Phi - I) a + Phi^T y,    a = T(u)

with fixed-step integrators, active-set tracking and switch recording.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Callable, List, NamedTuple, Optional, Tuple

import numpy as np

from . import activation as act
from .errors import NonFiniteState
from .model import Problem, driving_input, interconnection

EULER = "euler"
RK4 = "rk4"


def active_set(u, lam: float) -> np.ndarray:
    """Sorted indices with ``|u_n| > lam``."""
    return np.flatnonzero(np.abs(np.asarray(u, dtype=float)) > lam)


@dataclass(frozen=True, eq=False)
class LcaState:
    t: float
    u: np.ndarray
    a: np.ndarray
    active: np.ndarray

    @classmethod
    def from_u(cls, t, u, spec: act.ActivationSpec) -> "LcaState":
        u = np.array(u, dtype=float)
        return cls(t=float(t), u=u, a=act.apply(spec, u), active=active_set(u, spec.lam))


@dataclass(frozen=True)
class SolverConfig:
    """Integration settings.

    The default ``dt = tau/10`` reproduces the usual (0.001, 0.01) pairing.
    ``max_time`` defaults to ``100 * tau``.
    """

    tau: float = 0.01
    dt: Optional[float] = None
    max_time: Optional[float] = None
    residual_tol: float = 1e-6
    record_stride: int = 1
    method: str = EULER

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.dt is None:
            object.__setattr__(self, "dt", self.tau / 10)
        if self.max_time is None:
            object.__setattr__(self, "max_time", 100 * self.tau)
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        # Euler is only stable for dt < 2 tau / lambda_max(Gram); dt <= tau
        # is a cheap instance-independent guard.
        if self.dt > self.tau * (1 + 1e-12):
            raise ValueError(f"dt={self.dt} exceeds tau={self.tau}")
        if not self.max_time > 0:
            raise ValueError("max_time must be positive")
        if not self.residual_tol > 0:
            raise ValueError("residual_tol must be positive")
        if int(self.record_stride) < 1:
            raise ValueError("record_stride must be >= 1")
        if self.method not in (EULER, RK4):
            raise ValueError(f"unknown method {self.method!r}")


class SwitchEvent(NamedTuple):
    t: float
    entered: Tuple[int, ...]
    left: Tuple[int, ...]
    active: Tuple[int, ...]


@dataclass(eq=False)
class Trajectory:
    """Recorded samples of a run.

    ``t``, ``u``, ``a`` and ``objective`` are stacked arrays with one row
    per sample. ``switch_events`` holds every step at which the active set
    changed, with the full new active set.
    """

    t: np.ndarray
    u: np.ndarray
    a: np.ndarray
    objective: np.ndarray
    switch_events: List[SwitchEvent]
    converged: bool
    final_state: LcaState
    steps: int = 0
    residual: float = math.inf
    config: Optional[SolverConfig] = None
    lam: float = 0.0

    def __len__(self):
        return len(self.t)

    @property
    def samples(self):
        return list(zip(self.t, self.u, self.a, self.objective))

    @property
    def initial_active(self) -> Tuple[int, ...]:
        return tuple(np.flatnonzero(self.a[0]).tolist())

    def active_sets(self) -> List[Tuple[int, ...]]:
        """Initial active set followed by each post-switch active set."""
        first = tuple(active_set(self.u[0], self.lam).tolist())
        return [first] + [ev.active for ev in self.switch_events]


class _Rhs:
    """Right-hand side with the Gram matrix and feed-forward input cached."""

    def __init__(self, problem: Problem, spec: act.ActivationSpec, tau: float):
        self.problem = problem
        self.spec = spec
        self.tau = float(tau)
        self.b = driving_input(problem)
        self.g = interconnection(problem)

    def __call__(self, u, a=None):
        if a is None:
            a = act.apply(self.spec, u)
        return (-u - self.g @ a + self.b) / self.tau

    def objective(self, a):
        r = self.problem.y - self.problem.phi @ a
        return 0.5 * float(r @ r) + _penalty(self.problem, self.spec, a)


def _penalty(problem, spec, a):
    # import here: diagnostics depends on this module
    from .diagnostics import penalty

    return penalty(spec, a, problem.lam)


def udot(problem: Problem, spec: act.ActivationSpec, u, tau: float = 1.0) -> np.ndarray:
    """Time derivative of the internal state."""
    u = np.asarray(u, dtype=float)
    a = act.apply(spec, u)
    phi = problem.phi
    return (-u - (phi.T @ (phi @ a) - a) + phi.T @ problem.y) / tau


class PartitionedRhs(NamedTuple):
    active: np.ndarray
    inactive: np.ndarray
    a_dot_active: np.ndarray
    u_dot_inactive: np.ndarray


def rhs_partitioned(problem: Problem, spec: act.ActivationSpec, u, tau: float = 1.0) -> PartitionedRhs:
    """Split the dynamics into output rates on the active set and state
    rates on the inactive set. Inactive nodes do not feed back, so only
    ``Phi_active`` enters either block.
    """
    u = np.asarray(u, dtype=float)
    on = active_set(u, spec.lam)
    off = np.setdiff1d(np.arange(u.size), on)
    a = act.apply(spec, u)
    phi_on = problem.phi[:, on]
    phi_off = problem.phi[:, off]
    a_on = a[on]
    y = problem.y
    fprime = act.jacobian_diag(spec, u[on])

    recon = phi_on @ a_on
    a_dot = fprime * (-u[on] + a_on - phi_on.T @ recon + phi_on.T @ y) / tau
    u_dot = (-u[off] - phi_off.T @ recon + phi_off.T @ y) / tau
    return PartitionedRhs(on, off, a_dot, u_dot)


def _advance(rhs: _Rhs, u, dt, method, k1=None):
    if k1 is None:
        k1 = rhs(u)
    if method == EULER:
        return u + dt * k1
    k2 = rhs(u + 0.5 * dt * k1)
    k3 = rhs(u + 0.5 * dt * k2)
    k4 = rhs(u + dt * k3)
    return u + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def step(
    state: LcaState,
    problem: Problem,
    spec: act.ActivationSpec,
    config: SolverConfig,
    rhs: Optional[Callable] = None,
) -> LcaState:
    """Advance one step of size ``config.dt``.

    Pass a prebuilt ``rhs`` (see :func:`make_rhs`) to avoid rebuilding the
    Gram matrix on every call.
    """
    if rhs is None:
        rhs = make_rhs(problem, spec, config.tau)
    u = _advance(rhs, state.u, config.dt, config.method)
    t = state.t + config.dt
    if not np.all(np.isfinite(u)):
        raise NonFiniteState(t)
    return LcaState.from_u(t, u, spec)


def make_rhs(problem: Problem, spec: act.ActivationSpec, tau: float) -> _Rhs:
    return _Rhs(problem, spec, tau)


def simulate(
    problem: Problem,
    spec: act.ActivationSpec,
    config: SolverConfig = SolverConfig(),
    u0=None,
) -> Trajectory:
    """Integrate from ``u0`` (default zero) until ``||du/dt||_inf`` drops
    below ``config.residual_tol`` or ``config.max_time`` is reached.

    Samples are kept every ``record_stride`` steps plus the last state.
    A switch event is recorded whenever the active set differs from the
    previous step's; crossings that start and finish inside a single step
    go unseen.
    """
    n = problem.n
    u = np.zeros(n) if u0 is None else np.array(u0, dtype=float)
    if u.shape != (n,):
        raise ValueError(f"u0 must have length {n}")
    rhs = make_rhs(problem, spec, config.tau)
    dt, lam = config.dt, spec.lam
    n_steps = int(math.ceil(config.max_time / dt - 1e-9))
    stride = int(config.record_stride)

    ts, us, as_, vs = [], [], [], []
    events: List[SwitchEvent] = []

    def record(t, u, a):
        ts.append(t)
        us.append(u.copy())
        as_.append(a.copy())
        vs.append(rhs.objective(a))

    a = act.apply(spec, u)
    mask = np.abs(u) > lam
    k = 0
    t = 0.0
    record(t, u, a)
    converged = False
    residual = math.inf
    while True:
        du = rhs(u, a)
        residual = float(np.max(np.abs(du))) if n else 0.0
        if residual < config.residual_tol:
            converged = True
            break
        if k >= n_steps:
            break
        u = _advance(rhs, u, dt, config.method, k1=du)
        k += 1
        t = k * dt
        if not np.all(np.isfinite(u)):
            raise NonFiniteState(t)
        a = act.apply(spec, u)
        new_mask = np.abs(u) > lam
        if not np.array_equal(new_mask, mask):
            events.append(
                SwitchEvent(
                    t=t,
                    entered=tuple(np.flatnonzero(new_mask & ~mask).tolist()),
                    left=tuple(np.flatnonzero(mask & ~new_mask).tolist()),
                    active=tuple(np.flatnonzero(new_mask).tolist()),
                )
            )
            mask = new_mask
        if k % stride == 0:
            record(t, u, a)

    if ts[-1] != t:
        record(t, u, a)
    if not spec.is_soft:
        act.check_alpha(spec, np.vstack(us))

    final = LcaState(t=t, u=u.copy(), a=a.copy(), active=np.flatnonzero(mask))
    return Trajectory(
        t=np.array(ts),
        u=np.vstack(us),
        a=np.vstack(as_),
        objective=np.array(vs),
        switch_events=events,
        converged=converged,
        final_state=final,
        steps=k,
        residual=residual,
        config=config,
        lam=lam,
    )


# --------------------------------------------------------------------------
# export


def _fmt(x) -> str:
    return format(float(x), ".17g")


def write_trajectory_csv(traj: Trajectory, fh, include_vectors: bool = False, comment: Optional[str] = None):
    """One row per sample: ``t, V, nnz`` and optionally ``u_i``/``a_i``."""
    if comment:
        fh.write(f"# {comment}\n")
    w = csv.writer(fh, lineterminator="\n")
    n = traj.u.shape[1]
    header = ["t", "V", "nnz"]
    if include_vectors:
        header += [f"u_{i}" for i in range(n)] + [f"a_{i}" for i in range(n)]
    w.writerow(header)
    for i in range(len(traj)):
        row = [_fmt(traj.t[i]), _fmt(traj.objective[i]), int(np.count_nonzero(traj.a[i]))]
        if include_vectors:
            row += [_fmt(x) for x in traj.u[i]] + [_fmt(x) for x in traj.a[i]]
        w.writerow(row)


def trajectory_to_dict(traj: Trajectory) -> dict:
    return {
        "converged": traj.converged,
        "steps": traj.steps,
        "residual": traj.residual,
        "t": traj.t.tolist(),
        "objective": traj.objective.tolist(),
        "u": traj.u.tolist(),
        "a": traj.a.tolist(),
        "switch_events": [ev._asdict() for ev in traj.switch_events],
        "final_state": {
            "t": traj.final_state.t,
            "u": traj.final_state.u.tolist(),
            "a": traj.final_state.a.tolist(),
            "active": traj.final_state.active.tolist(),
        },
    }


def write_trajectory_json(traj: Trajectory, fh):
    # json writes floats with repr(), which round-trips exactly
    json.dump(trajectory_to_dict(traj), fh)
