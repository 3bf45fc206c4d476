"""Discrete-time reference solver (ISTA/FISTA) for the l1 problem."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .errors import StepTooLarge
from .model import Dictionary, Problem


def spectral_norm_estimate(dictionary, rtol: float = 1e-6, max_iters: int = 10_000, seed: int = 0) -> float:
    """Power-iteration estimate of ``sigma_max(Phi)^2``."""
    phi = dictionary.columns if isinstance(dictionary, Dictionary) else np.asarray(dictionary, dtype=float)
    x = np.random.Generator(np.random.PCG64(seed)).standard_normal(phi.shape[1])
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(max_iters):
        z = phi.T @ (phi @ x)
        new = float(np.linalg.norm(z))
        if new == 0.0:
            return 0.0
        x = z / new
        if abs(new - est) <= rtol * new:
            return new
        est = new
    return est


@dataclass(frozen=True)
class IstaConfig:
    """ISTA settings. ``step_size=None`` means ``0.9 / sigma_max^2``."""

    step_size: Optional[float] = None
    max_iters: int = 100_000
    tol: float = 1e-10
    accelerated: bool = False

    def __post_init__(self):
        if self.step_size is not None and not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")


def _soft(x, thr):
    return np.sign(x) * np.maximum(np.abs(x) - thr, 0.0)


def _objective(phi, y, lam, a):
    r = y - phi @ a
    return 0.5 * float(r @ r) + lam * float(np.abs(a).sum())


def ista_solve(problem: Problem, config: IstaConfig = IstaConfig()) -> Tuple[np.ndarray, int, List[float]]:
    """Minimize ``1/2||y - Phi a||^2 + lam ||a||_1`` by proximal gradient.

    Starts from ``a = 0`` and stops when ``||a_{k+1} - a_k||_inf < tol``.

    Returns
    -------
    a : ndarray
        Final iterate.
    iters : int
        Number of iterations performed.
    history : list of float
        Objective at the start and after each iteration.

    Raises
    ------
    StepTooLarge
        If ``step_size`` exceeds ``1 / sigma_max^2`` (beyond the power
        iteration's accuracy).
    """
    phi, y, lam = problem.phi, problem.y, problem.lam
    lip = spectral_norm_estimate(problem.dictionary)
    if config.step_size is None:
        eta = 0.9 / lip
    else:
        eta = float(config.step_size)
        if eta * lip > 1.0 + 1e-6:
            raise StepTooLarge(f"step {eta:g} > 1/sigma_max^2 = {1 / lip:g}")

    n = problem.n
    a = np.zeros(n)
    z = a
    t_k = 1.0
    history = [_objective(phi, y, lam, a)]
    iters = 0
    for iters in range(1, config.max_iters + 1):
        grad_pt = z if config.accelerated else a
        a_new = _soft(grad_pt + eta * (phi.T @ (y - phi @ grad_pt)), lam * eta)
        history.append(_objective(phi, y, lam, a_new))
        change = float(np.max(np.abs(a_new - a))) if n else 0.0
        if config.accelerated:
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_k * t_k))
            z = a_new + ((t_k - 1.0) / t_next) * (a_new - a)
            t_k = t_next
        a = a_new
        if change < config.tol:
            break
    return a, iters, history
