"""
Sparse approximation problems: dictionaries, instances and their file format.

A problem is the triple (Phi, y, lambda) defining the objective

    V(a) = 1/2 ||y - Phi a||_2^2 + lambda * sum_n C(a_n)

where Phi is an M x N dictionary with unit-norm columns.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from .errors import InvalidSparsity, ProblemFormatError, ZeroColumn

UNIT_NORM_TOL = 1e-9
_ZERO_NORM = 1e-12

FORMAT_NAME = "lca-problem"
FORMAT_VERSION = 1


def _frozen(x, dtype=float):
    arr = np.array(x, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Dictionary:
    """M x N matrix whose columns are unit-norm atoms.

    ``kind`` and ``params`` remember how the dictionary was built so a
    problem file can name the constructor instead of inlining the matrix.
    """

    columns: np.ndarray
    kind: str = "dense"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        cols = _frozen(self.columns)
        if cols.ndim != 2 or cols.shape[0] < 1 or cols.shape[1] < 1:
            raise ValueError(f"dictionary must be a non-empty 2-D matrix, got shape {cols.shape}")
        norms = np.linalg.norm(cols, axis=0)
        bad = np.flatnonzero(np.abs(norms - 1.0) > UNIT_NORM_TOL)
        if bad.size:
            raise ValueError(
                f"column {bad[0]} has norm {norms[bad[0]]!r}; use normalize_columns()"
            )
        object.__setattr__(self, "columns", cols)

    @property
    def m(self) -> int:
        return self.columns.shape[0]

    @property
    def n(self) -> int:
        return self.columns.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.columns.shape


@dataclass(frozen=True, eq=False)
class Problem:
    """One sparse approximation instance."""

    dictionary: Dictionary
    y: np.ndarray
    lam: float

    def __post_init__(self):
        y = _frozen(self.y)
        if y.ndim != 1 or y.shape[0] != self.dictionary.m:
            raise ValueError(
                f"y must have length {self.dictionary.m}, got shape {y.shape}"
            )
        lam = float(self.lam)
        if not np.isfinite(lam) or lam <= 0:
            raise ValueError(f"lambda must be positive, got {self.lam!r}")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "lam", lam)

    @property
    def phi(self) -> np.ndarray:
        return self.dictionary.columns

    @property
    def m(self) -> int:
        return self.dictionary.m

    @property
    def n(self) -> int:
        return self.dictionary.n


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """The sparse vector that generated an instance, and the noise level."""

    a0: np.ndarray
    support: Tuple[int, ...]
    noise_std: float

    def __post_init__(self):
        a0 = _frozen(self.a0)
        support = tuple(sorted(int(i) for i in self.support))
        if tuple(np.flatnonzero(a0)) != support:
            raise ValueError("support does not match the nonzeros of a0")
        if self.noise_std < 0:
            raise ValueError("noise_std must be nonnegative")
        object.__setattr__(self, "a0", a0)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "noise_std", float(self.noise_std))


def normalize_columns(matrix) -> Dictionary:
    """Scale every column of ``matrix`` to unit Euclidean norm.

    Raises
    ------
    ZeroColumn
        If some column has norm below 1e-12.
    """
    mat = np.array(matrix, dtype=float)
    if mat.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    norms = np.linalg.norm(mat, axis=0)
    small = np.flatnonzero(norms < _ZERO_NORM)
    if small.size:
        raise ZeroColumn(small[0])
    return Dictionary(mat / norms)


def dct_basis(m: int) -> np.ndarray:
    """Orthonormal DCT-II synthesis basis; column k is the k-th cosine atom."""
    j = np.arange(m)[:, None]
    k = np.arange(m)[None, :]
    basis = np.sqrt(2.0 / m) * np.cos(np.pi * (2 * j + 1) * k / (2 * m))
    basis[:, 0] /= np.sqrt(2.0)
    return basis


def build_canonical_sinusoid_dictionary(m: int) -> Dictionary:
    """Union of the identity and the DCT-II basis, an ``m x 2m`` dictionary."""
    m = int(m)
    if m < 2:
        raise ValueError("m must be at least 2")
    cols = np.hstack([np.eye(m), dct_basis(m)])
    # the DCT atoms are unit-norm only up to rounding; renormalize exactly
    cols /= np.linalg.norm(cols, axis=0)
    return Dictionary(cols, kind="canonical_sinusoid", params={"m": m})


def generate_instance(
    seed: int,
    m: int,
    n: int,
    s: int,
    noise_std: float,
    lam: float,
    dictionary: Optional[Dictionary] = None,
) -> Tuple[Problem, GroundTruth]:
    """Draw a random s-sparse instance ``y = Phi a0 + eta``.

    Randomness comes from a PCG64 generator seeded with ``seed`` and is
    consumed in a fixed order: support positions, then amplitudes, then
    noise. ``a0`` is normalized to unit norm.

    Without an explicit ``dictionary`` the canonical/DCT union is used,
    which requires ``n == 2 * m``.
    """
    if dictionary is None:
        if n != 2 * m:
            raise ValueError(
                f"the canonical/sinusoid dictionary needs n == 2m (got m={m}, n={n});"
                " pass a dictionary explicitly"
            )
        dictionary = build_canonical_sinusoid_dictionary(m)
    elif dictionary.shape != (m, n):
        raise ValueError(f"dictionary shape {dictionary.shape} != ({m}, {n})")
    if s < 1 or s > n:
        raise InvalidSparsity(f"sparsity s={s} must lie in [1, n={n}]")
    if noise_std < 0:
        raise ValueError("noise_std must be nonnegative")

    rng = np.random.Generator(np.random.PCG64(seed))
    support = np.sort(rng.choice(n, size=s, replace=False))
    amps = rng.standard_normal(s)
    noise = rng.standard_normal(m) * noise_std

    a0 = np.zeros(n)
    a0[support] = amps / np.linalg.norm(amps)
    y = dictionary.columns @ a0
    if noise_std > 0:
        y = y + noise
    truth = GroundTruth(a0=a0, support=tuple(support.tolist()), noise_std=noise_std)
    return Problem(dictionary=dictionary, y=y, lam=lam), truth


def driving_input(problem: Problem) -> np.ndarray:
    """Feed-forward input ``Phi^T y``."""
    return problem.phi.T @ problem.y


def interconnection(problem: Problem) -> np.ndarray:
    """Lateral weight matrix ``Phi^T Phi - I``."""
    phi = problem.phi
    g = phi.T @ phi
    g = 0.5 * (g + g.T)
    g[np.diag_indices_from(g)] -= 1.0
    return g


# --------------------------------------------------------------------------
# file format


def problem_to_dict(problem: Problem, truth: Optional[GroundTruth] = None) -> dict:
    d = problem.dictionary
    if d.kind == "canonical_sinusoid":
        dict_entry = {"kind": "canonical_sinusoid", "m": d.params["m"]}
    else:
        dict_entry = {"kind": "dense", "matrix": d.columns.tolist()}
    out = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "m": problem.m,
        "n": problem.n,
        "lambda": problem.lam,
        "y": problem.y.tolist(),
        "dictionary": dict_entry,
    }
    if truth is not None:
        out["ground_truth"] = {
            "a0": truth.a0.tolist(),
            "support": list(truth.support),
            "noise_std": truth.noise_std,
        }
    return out


def _field(obj, key, path):
    if not isinstance(obj, dict) or key not in obj:
        raise ProblemFormatError(path, "missing")
    return obj[key]


def _vector(value, path, length=None):
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ProblemFormatError(path, "expected an array of numbers") from None
    if arr.ndim != 1:
        raise ProblemFormatError(path, "expected a 1-D array")
    if length is not None and arr.shape[0] != length:
        raise ProblemFormatError(path, f"expected length {length}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ProblemFormatError(path, "contains non-finite values")
    return arr


def _positive_int(value, path):
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ProblemFormatError(path, "expected a positive integer")
    return value


def problem_from_dict(data) -> Tuple[Problem, Optional[GroundTruth]]:
    """Inverse of :func:`problem_to_dict`, with field-level validation."""
    if not isinstance(data, dict):
        raise ProblemFormatError("<root>", "expected a JSON object")
    fmt = data.get("format", FORMAT_NAME)
    if fmt != FORMAT_NAME:
        raise ProblemFormatError("format", f"expected {FORMAT_NAME!r}, got {fmt!r}")
    m = _positive_int(_field(data, "m", "m"), "m")
    n = _positive_int(_field(data, "n", "n"), "n")
    lam = _field(data, "lambda", "lambda")
    if isinstance(lam, bool) or not isinstance(lam, (int, float)) or not lam > 0:
        raise ProblemFormatError("lambda", "expected a positive number")
    y = _vector(_field(data, "y", "y"), "y", m)

    entry = _field(data, "dictionary", "dictionary")
    kind = _field(entry, "kind", "dictionary.kind")
    if kind == "canonical_sinusoid":
        dm = _positive_int(_field(entry, "m", "dictionary.m"), "dictionary.m")
        if dm != m or n != 2 * m:
            raise ProblemFormatError("dictionary.m", f"inconsistent with m={m}, n={n}")
        dictionary = build_canonical_sinusoid_dictionary(m)
    elif kind == "dense":
        raw = _field(entry, "matrix", "dictionary.matrix")
        try:
            mat = np.asarray(raw, dtype=float)
        except (TypeError, ValueError):
            raise ProblemFormatError("dictionary.matrix", "expected a rectangular numeric array") from None
        if mat.shape != (m, n):
            raise ProblemFormatError("dictionary.matrix", f"expected shape ({m}, {n}), got {mat.shape}")
        try:
            dictionary = Dictionary(mat)
        except ValueError:
            dictionary = None
        try:
            dictionary = dictionary or normalize_columns(mat)
        except ZeroColumn as exc:
            raise ProblemFormatError("dictionary.matrix", str(exc)) from None
    else:
        raise ProblemFormatError("dictionary.kind", f"unknown dictionary kind {kind!r}")

    problem = Problem(dictionary=dictionary, y=y, lam=float(lam))
    truth = None
    if "ground_truth" in data:
        gt = data["ground_truth"]
        a0 = _vector(_field(gt, "a0", "ground_truth.a0"), "ground_truth.a0", n)
        support = _field(gt, "support", "ground_truth.support")
        noise = _field(gt, "noise_std", "ground_truth.noise_std")
        try:
            truth = GroundTruth(a0=a0, support=tuple(support), noise_std=float(noise))
        except (TypeError, ValueError) as exc:
            raise ProblemFormatError("ground_truth", str(exc)) from None
    return problem, truth


def save_problem(path, problem: Problem, truth: Optional[GroundTruth] = None) -> None:
    Path(path).write_text(json.dumps(problem_to_dict(problem, truth), indent=1))


def load_problem(path) -> Tuple[Problem, Optional[GroundTruth]]:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ProblemFormatError("<root>", f"invalid JSON ({exc})") from None
    return problem_from_dict(data)
