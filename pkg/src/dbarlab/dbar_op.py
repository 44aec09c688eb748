"""Dense discretization of P = h dbar + dbar(phi) and its singular values.

The node basis carries the uniform quadrature weight dx*dy on every node, so
the l2 singular values of the matrix equal the L2 singular values of the
discrete operator.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from .torus_grid import ComplexField, TorusGrid, dbar_array
from .weights import Weight

DENSE_CAP = 4096
PRECISION_FLOOR = 1e-12
MAX_TAU_OVER_H = 25.0
GAP_WARN = 1e-3


class PrecisionError(ValueError):
    pass


class SpectrumError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    h: float
    grid: TorusGrid
    entries: np.ndarray
    weight_name: str = ""

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


def check_precision(tau: float, h: float) -> None:
    if tau / h > MAX_TAU_OVER_H:
        h_min = tau / MAX_TAU_OVER_H
        raise PrecisionError(
            f"precision floor: tau/h = {tau / h:.3g} > {MAX_TAU_OVER_H:g}; "
            f"increase h to >= {h_min:.4g} or use tau <= {MAX_TAU_OVER_H * h:.4g}")


def dbar_matrix(grid: TorusGrid) -> np.ndarray:
    """Dense matrix of the spectral dbar; column j is the image of node j."""
    n = grid.size
    eye = np.eye(n, dtype=complex).reshape(n, grid.ny, grid.nx)
    cols = dbar_array(eye, grid).reshape(n, n)
    return np.ascontiguousarray(cols.T)


def assemble(w: Weight, h: float, grid: TorusGrid | None = None) -> OperatorMatrix:
    if not h > 0:
        raise ValueError("h must be positive")
    grid = grid or w.grid
    if grid != w.grid:
        raise ValueError("weight lives on a different grid")
    m = h * dbar_matrix(grid)
    m[np.diag_indices_from(m)] += w.dbar_phi.flat()
    return OperatorMatrix(float(h), grid, m, w.name)


@dataclass(frozen=True)
class SpectrumResult:
    h: float
    svals: tuple
    tau_ref: float | None = None
    n_below: dict = field(default_factory=dict)
    valid_below: float = math.inf
    norm: float = 0.0
    flags: tuple = ()

    def __post_init__(self):
        s = tuple(float(v) for v in self.svals)
        if any(b < a for a, b in zip(s, s[1:])):
            raise SpectrumError("svals must be sorted ascending")
        if s and s[0] < 0:
            raise SpectrumError("svals must be nonnegative")
        object.__setattr__(self, "svals", s)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.svals)

    @property
    def complete(self) -> bool:
        return math.isinf(self.valid_below)

    def with_count(self, threshold: float) -> "SpectrumResult":
        n, flag = _count(self, threshold)
        counts = dict(self.n_below)
        counts[threshold] = n
        flags = self.flags + ((flag,) if flag else ())
        return SpectrumResult(self.h, self.svals, self.tau_ref, counts,
                              self.valid_below, self.norm, flags)

    def to_json(self) -> dict:
        return {"h": self.h, "svals": list(self.svals),
                "counts": {repr(float(k)): int(v) for k, v in self.n_below.items()}}


def _spectral_norm(a: np.ndarray, iters: int = 60) -> float:
    rng = np.random.default_rng(12345)
    v = rng.standard_normal(a.shape[1]) + 1j * rng.standard_normal(a.shape[1])
    v /= np.linalg.norm(v)
    s = 0.0
    for _ in range(iters):
        u = a @ v
        v = a.conj().T @ u
        s_new = math.sqrt(np.linalg.norm(v))
        v /= np.linalg.norm(v)
        if abs(s_new - s) <= 1e-12 * s_new:
            s = s_new
            break
        s = s_new
    return s


def lowest_singular_triplets(m: OperatorMatrix, k: int):
    """Lowest ``k`` singular values and right singular vectors.

    Dense Hermitian eigensolve of P^H P selects the lowest-k subspace V;
    the SVD of the n-by-k matrix P V then restores full precision on the tiny
    singular values (errors ~ eps*|P|^2 / sigma_{k+1} instead of
    eps*|P|^2 / sigma).
    """
    a = m.entries
    n = m.dim
    k = int(min(k, n))
    gram = a.conj().T @ a
    _, vecs = sla.eigh(gram, subset_by_index=[0, k - 1], driver="evr",
                       overwrite_a=True, check_finite=False)
    del gram
    pv = a @ vecs
    _, s, wh = sla.svd(pv, full_matrices=False, lapack_driver="gesdd",
                       check_finite=False)
    order = np.argsort(s)
    s = s[order]
    right = vecs @ wh.conj().T[:, order]
    return s, right


def singular_values(m: OperatorMatrix, n_lowest: int | None = None,
                    dense_cap: int = DENSE_CAP) -> SpectrumResult:
    """Singular values, ascending.  ``n_lowest=None`` computes all of them by
    a full dense SVD; otherwise only the lowest ``n_lowest``."""
    if m.dim > dense_cap:
        raise SpectrumError(f"dense cap: dim {m.dim} exceeds {dense_cap}")
    norm = _spectral_norm(m.entries)
    if n_lowest is None or n_lowest >= m.dim:
        s = np.sort(sla.svdvals(m.entries, check_finite=False))
        return SpectrumResult(m.h, tuple(s), norm=norm)
    s, _ = lowest_singular_triplets(m, n_lowest)
    s = np.sort(s)
    return SpectrumResult(m.h, tuple(s), valid_below=float(s[-1]), norm=norm)


def _count(s: SpectrumResult, threshold: float):
    if threshold < 10 * PRECISION_FLOOR:
        raise PrecisionError(
            f"threshold {threshold:.3e} below 10x precision floor "
            f"{PRECISION_FLOOR:g}: increase h or use smaller tau")
    arr = s.array
    if threshold >= s.valid_below:
        raise SpectrumError(
            f"threshold {threshold:.3e} beyond the range where the partial "
            f"spectrum is complete ({s.valid_below:.3e}); request more values")
    n = int(np.searchsorted(arr, threshold, side="right"))
    flag = None
    if arr.size:
        gaps = np.abs(arr - threshold) / threshold
        if gaps.min() < GAP_WARN:
            flag = f"threshold {threshold:.6e} within relative gap {gaps.min():.1e} of a singular value"
    return n, flag


def count_below(s: SpectrumResult, threshold: float) -> int:
    return _count(s, threshold)[0]


def threshold_flag(s: SpectrumResult, threshold: float) -> str | None:
    return _count(s, threshold)[1]


def numerical_zero_count(s: SpectrumResult, rtol: float = 1e-12) -> int:
    return int(np.sum(s.array <= rtol * s.norm))


def singular_states(m: OperatorMatrix, count: int, n_lowest: int | None = None):
    """``(svals, states)`` for the ``count`` smallest singular values; each
    state is an l2-normalized right singular vector shaped to the grid."""
    if count > m.dim:
        raise IndexError("state index out of range")
    if m.dim <= 1024 and n_lowest is None:
        _, s, vh = sla.svd(m.entries, full_matrices=False, check_finite=False)
        order = np.argsort(s)[:count]
        s, vecs = s[order], vh.conj().T[:, order]
    else:
        s, vecs = lowest_singular_triplets(m, max(count, n_lowest or count))
        s, vecs = s[:count], vecs[:, :count]
    vecs = vecs / np.linalg.norm(vecs, axis=0)
    states = vecs.T.reshape(count, m.grid.ny, m.grid.nx)
    return s, states


def singular_state(m: OperatorMatrix, index: int) -> ComplexField:
    if not 0 <= index < m.dim:
        raise IndexError(f"state index {index} out of range [0, {m.dim})")
    _, states = singular_states(m, index + 1)
    return ComplexField(m.grid, states[index])


def write_spectrum_json(path, s: SpectrumResult) -> None:
    Path(path).write_text(json.dumps(s.to_json(), indent=2) + "\n")


def read_spectrum_json(path) -> SpectrumResult:
    d = json.loads(Path(path).read_text())
    counts = {float(k): int(v) for k, v in d.get("counts", {}).items()}
    return SpectrumResult(d["h"], tuple(d["svals"]), n_below=counts)


def write_spectrum_csv(path, s: SpectrumResult) -> None:
    with Path(path).open("w") as fh:
        fh.write("index,sval\n")
        for i, v in enumerate(s.svals):
            fh.write(f"{i},{v!r}\n")
