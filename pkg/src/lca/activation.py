"""
Thresholding activation functions.

An activation ``T`` with threshold ``lam`` maps an internal state ``u`` to
an output ``a``::

    T(u) = 0      if |u| <= lam
    T(u) = f(u)   if |u| >  lam

where ``f`` is odd, vanishes at ``lam``, is strictly increasing and is
dominated by the identity on ``u >= lam``. The soft threshold
``f(u) = u - lam*sign(u)`` is the canonical choice and corresponds to an
l1 penalty.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.optimize import brentq

from .errors import InversionFailure

SOFT = "soft"
GENERIC = "generic"


@dataclass(frozen=True)
class ActivationSpec:
    """Threshold ``lam`` plus the above-threshold branch ``f``.

    ``f``, ``f_deriv`` and ``f_inverse`` must accept numpy arrays. ``f`` is
    only ever evaluated on ``|u| >= lam`` and ``f_inverse`` on nonzero
    outputs. ``alpha`` is an upper bound on ``f'`` over the states that
    are visited.
    """

    lam: float
    kind: str = SOFT
    f: Optional[Callable] = None
    f_deriv: Optional[Callable] = None
    alpha: float = 1.0
    f_inverse: Optional[Callable] = None
    name: str = "soft"

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"threshold must be positive, got {self.lam!r}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha!r}")
        if self.kind == GENERIC and (self.f is None or self.f_deriv is None):
            raise ValueError("generic activations need f and f_deriv")
        if self.kind not in (SOFT, GENERIC):
            raise ValueError(f"unknown activation kind {self.kind!r}")

    @property
    def is_soft(self) -> bool:
        return self.kind == SOFT


def soft_threshold(lam: float, alpha: float = 1.0) -> ActivationSpec:
    """The soft-threshold activation (l1 cost).

    ``alpha`` is 1 for this function; overriding it is only useful for
    checking that diagnostics notice a wrong bound.
    """
    return ActivationSpec(lam=float(lam), kind=SOFT, alpha=float(alpha), name="soft")


def generic(lam, f, f_deriv, alpha, f_inverse=None, name="generic") -> ActivationSpec:
    return ActivationSpec(
        lam=float(lam),
        kind=GENERIC,
        f=f,
        f_deriv=f_deriv,
        alpha=float(alpha),
        f_inverse=f_inverse,
        name=name,
    )


def tanh_threshold(lam: float) -> ActivationSpec:
    """Smooth shrinkage ``f(u) = sign(u) * (|u| - lam*tanh(|u|/lam)/tanh(1))``.

    Odd, zero at ``lam``, increasing with ``0 < f' < 1`` on ``|u| > lam``
    (so ``alpha = 1``) and approaches the hard threshold's slope far from
    the threshold. No closed-form inverse; cost gradients use numeric
    inversion.
    """
    lam = float(lam)
    k = 1.0 / np.tanh(1.0)

    def f(u):
        u = np.asarray(u, dtype=float)
        au = np.abs(u)
        return np.sign(u) * (au - lam * k * np.tanh(au / lam))

    def f_deriv(u):
        au = np.abs(np.asarray(u, dtype=float))
        e = np.exp(-2.0 * au / lam)
        # sech^2(x) = 4 e^{-2x} / (1 + e^{-2x})^2, overflow-free for large x
        return 1.0 - k * 4.0 * e / (1.0 + e) ** 2

    return generic(lam, f, f_deriv, alpha=1.0, name="tanh")


def by_name(name: str, lam: float) -> ActivationSpec:
    if name == "soft":
        return soft_threshold(lam)
    if name == "tanh":
        return tanh_threshold(lam)
    raise ValueError(f"unknown activation {name!r} (expected 'soft' or 'tanh')")


def apply(spec: ActivationSpec, u) -> np.ndarray:
    """Evaluate ``T(u)`` componentwise. ``|u| == lam`` maps to 0."""
    u = np.asarray(u, dtype=float)
    active = np.abs(u) > spec.lam
    if spec.is_soft:
        return np.where(active, u - spec.lam * np.sign(u), 0.0)
    out = np.zeros_like(u)
    if np.any(active):
        out[active] = spec.f(u[active])
    return out


def jacobian_diag(spec: ActivationSpec, u) -> np.ndarray:
    """Diagonal of dT/du: 0 on the inactive set, ``f'(u)`` on the active set."""
    u = np.asarray(u, dtype=float)
    active = np.abs(u) > spec.lam
    if spec.is_soft:
        return active.astype(float)
    out = np.zeros_like(u)
    if np.any(active):
        out[active] = spec.f_deriv(u[active])
    return out


def check_alpha(spec: ActivationSpec, u) -> float:
    """Largest ``|f'|`` over the active entries of ``u``.

    Warns if it exceeds ``spec.alpha``; the bound is trajectory dependent
    so it can only be checked after the fact.
    """
    d = np.abs(jacobian_diag(spec, u))
    worst = float(d.max()) if d.size else 0.0
    if worst > spec.alpha * (1 + 1e-12):
        warnings.warn(
            f"observed |f'| = {worst:.6g} exceeds alpha = {spec.alpha:.6g}",
            RuntimeWarning,
            stacklevel=2,
        )
    return worst


@dataclass(frozen=True)
class ConditionReport:
    odd_symmetry_ok: bool
    boundary_zero_ok: bool
    monotone_ok: bool
    dominated_ok: bool
    worst_violation: float
    samples_checked: int

    @property
    def ok(self) -> bool:
        return self.odd_symmetry_ok and self.boundary_zero_ok and self.monotone_ok and self.dominated_ok


def _branch(spec: ActivationSpec, u):
    u = np.asarray(u, dtype=float)
    if spec.is_soft:
        return u - spec.lam * np.sign(u)
    return np.asarray(spec.f(u), dtype=float)


def validate_conditions(
    spec: ActivationSpec,
    sample_range: Tuple[float, float],
    num_samples: int = 1001,
    tol: float = 1e-12,
) -> ConditionReport:
    """Sample ``f`` on ``[lo, hi]`` (and its mirror) and test the four
    admissibility conditions: oddness, ``f(lam) = 0``, strict increase and
    ``f(u) <= u``.
    """
    lo, hi = map(float, sample_range)
    if lo < spec.lam:
        raise ValueError("sample range must start at or above the threshold")
    if num_samples < 2 or hi <= lo:
        raise ValueError("need at least two samples on a non-empty range")
    grid = np.linspace(lo, hi, num_samples)
    fp = _branch(spec, grid)
    fn = _branch(spec, -grid)

    odd_viol = float(np.max(np.abs(fn + fp)))
    b = _branch(spec, np.array([spec.lam, -spec.lam]))
    boundary_viol = float(np.max(np.abs(b)))
    steps = np.diff(fp)
    mono_viol = float(max(0.0, -steps.min())) if steps.size else 0.0
    monotone_ok = bool(np.all(steps > 0))
    dom_viol = float(max(0.0, np.max(fp - grid)))

    worst = max(odd_viol, boundary_viol, mono_viol, dom_viol)
    return ConditionReport(
        odd_symmetry_ok=odd_viol <= tol,
        boundary_zero_ok=boundary_viol <= tol,
        monotone_ok=monotone_ok,
        dominated_ok=dom_viol <= tol,
        worst_violation=worst,
        samples_checked=2 * num_samples,
    )


def invert(spec: ActivationSpec, a: float, xtol: float = 1e-12) -> float:
    """State ``u`` with ``T(u) = a`` for ``a != 0``."""
    a = float(a)
    if a == 0:
        raise ValueError("the activation is not invertible at 0")
    if spec.is_soft:
        return a + spec.lam * np.sign(a)
    if spec.f_inverse is not None:
        return float(spec.f_inverse(a))
    target = abs(a)
    lo, hi = spec.lam, 2.0 * spec.lam
    f = lambda x: float(_branch(spec, x)) - target
    for _ in range(200):
        if f(hi) >= 0:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise InversionFailure(f"could not bracket f^-1({a!r})")
    if f(lo) > 0:
        raise InversionFailure(f"f({lo!r}) already exceeds {target!r}; f is not increasing")
    u = brentq(f, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps)
    return float(np.copysign(u, a))


def cost_gradient(spec: ActivationSpec, a: float) -> float:
    """``lam * C'(a) = u - T(u)`` evaluated at ``u = T^{-1}(a)``."""
    a = float(a)
    if a == 0:
        raise ValueError("the cost is not differentiable at 0")
    if spec.is_soft:
        return spec.lam * float(np.sign(a))
    return invert(spec, a) - a
