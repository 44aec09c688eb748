"""Uniform periodic grid on [0, 2pi)^2 with spectral calculus.

Fields are stored as arrays of shape ``(ny, nx)``: row ``j`` holds the values
at ``y = j*dy``, so flattening in C order gives the row-major, x-fastest
layout used for operator matrices.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

TWO_PI = 2.0 * np.pi


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class TorusGrid:
    nx: int
    ny: int

    def __post_init__(self):
        for n in (self.nx, self.ny):
            if int(n) != n:
                raise GridError(f"grid size must be an integer, got {n!r}")
            if n % 2:
                raise GridError(f"odd dimension {n}: nx and ny must be even")
            if n < 8:
                raise GridError(f"grid size {n} too small (need >= 8)")

    @property
    def dx(self) -> float:
        return TWO_PI / self.nx

    @property
    def dy(self) -> float:
        return TWO_PI / self.ny

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.nx) * self.dx

    @property
    def y(self) -> np.ndarray:
        return np.arange(self.ny) * self.dy

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinates ``(X, Y)``, each of shape ``(ny, nx)``."""
        return np.meshgrid(self.x, self.y, indexing="xy")

    def wavenumbers(self) -> tuple[np.ndarray, np.ndarray]:
        """Integer wavenumbers ``(k, l)`` broadcastable to ``(ny, nx)``.

        Both run over ``{-n/2, ..., n/2 - 1}`` in FFT order.
        """
        k = np.fft.fftfreq(self.nx, d=1.0 / self.nx)
        l = np.fft.fftfreq(self.ny, d=1.0 / self.ny)
        return k[None, :], l[:, None]


def make_grid(nx: int, ny: int) -> TorusGrid:
    return TorusGrid(int(nx), int(ny))


@dataclass(frozen=True)
class ScalarField:
    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            v = v.reshape(self.grid.shape) if v.size == self.grid.size else None
            if v is None:
                raise GridError("field length does not match nx*ny")
        if not np.all(np.isfinite(v)):
            raise GridError("field has non-finite entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def flat(self) -> np.ndarray:
        return self.values.ravel()


@dataclass(frozen=True)
class ComplexField:
    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != self.grid.shape:
            if v.size != self.grid.size:
                raise GridError("field length does not match nx*ny")
            v = v.reshape(self.grid.shape)
        if not np.all(np.isfinite(v)):
            raise GridError("field has non-finite entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def flat(self) -> np.ndarray:
        return self.values.ravel()


# -- spectral multipliers -------------------------------------------------

def _odd_multipliers(grid: TorusGrid) -> tuple[np.ndarray, np.ndarray]:
    # real-field first derivatives: Nyquist mode treated as cosine-only
    k, l = grid.wavenumbers()
    k = np.where(k == -grid.nx // 2, 0.0, k)
    l = np.where(l == -grid.ny // 2, 0.0, l)
    return k, l


def _dbar_multiplier(grid: TorusGrid) -> np.ndarray:
    # full complex multiplier, Nyquist included: keeps ker(dbar) = constants
    # and -Laplacian = 4 dbar^* dbar exact on every mode
    k, l = grid.wavenumbers()
    return (1j * k - l) / 2.0


def laplacian(f: ScalarField) -> ScalarField:
    g = f.grid
    k, l = g.wavenumbers()
    fh = np.fft.fft2(f.values)
    return ScalarField(g, np.fft.ifft2(-(k**2 + l**2) * fh).real)


def laplacian_array(values: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """Batched spectral Laplacian over the trailing ``(ny, nx)`` axes."""
    k, l = grid.wavenumbers()
    return np.fft.ifft2(-(k**2 + l**2) * np.fft.fft2(values)).real


def gradient(f: ScalarField) -> tuple[ScalarField, ScalarField]:
    """Spectral ``(f_x, f_y)`` of a real field."""
    g = f.grid
    k, l = _odd_multipliers(g)
    fh = np.fft.fft2(f.values)
    fx = np.fft.ifft2(1j * k * fh).real
    fy = np.fft.ifft2(1j * l * fh).real
    return ScalarField(g, fx), ScalarField(g, fy)


def dbar_apply(f: ComplexField) -> ComplexField:
    g = f.grid
    return ComplexField(g, dbar_array(f.values, g))


def dbar_array(values: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """Batched dbar over the trailing ``(ny, nx)`` axes."""
    m = _dbar_multiplier(grid)
    return np.fft.ifft2(m * np.fft.fft2(values))


def dbar_conjugate_apply(f: ComplexField) -> ComplexField:
    """L^2 adjoint of dbar, i.e. ``-d_z = -(d_x - i d_y)/2``."""
    g = f.grid
    m = np.conj(_dbar_multiplier(g))
    return ComplexField(g, np.fft.ifft2(m * np.fft.fft2(f.values)))


def poisson_solve(g: ScalarField, rtol: float = 1e-10) -> ScalarField:
    """Mean-zero ``f`` with ``laplacian(f) = g``.

    Raises ``GridError`` when ``g`` has a mean larger than ``rtol*max|g|``
    (no periodic solution exists).
    """
    grid = g.grid
    vals = g.values
    mean = vals.mean()
    scale = np.abs(vals).max()
    if abs(mean) > rtol * max(scale, np.finfo(float).tiny):
        raise GridError(f"nonzero mean {mean:.3e}: not solvable on torus")
    k, l = grid.wavenumbers()
    denom = -(k**2 + l**2)
    denom[0, 0] = 1.0
    gh = np.fft.fft2(vals) / denom
    gh[0, 0] = 0.0
    return ScalarField(grid, np.fft.ifft2(gh).real)


def integrate(f: ScalarField) -> float:
    return float(f.values.sum() * f.grid.cell_area)


def spectral_interpolate(values: np.ndarray, grid: TorusGrid,
                         points: np.ndarray) -> np.ndarray:
    """Evaluate the trigonometric interpolant of a real field at ``points``.

    ``points`` has shape ``(m, 2)`` holding ``(x, y)``.  The Nyquist modes are
    symmetrized so the result is real for real input.
    """
    pts = np.atleast_2d(points)
    c = np.fft.fft2(values) / grid.size
    k = np.fft.fftfreq(grid.nx, d=1.0 / grid.nx)
    l = np.fft.fftfreq(grid.ny, d=1.0 / grid.ny)
    ex = np.exp(1j * np.outer(pts[:, 0], k))
    ey = np.exp(1j * np.outer(pts[:, 1], l))
    # split Nyquist as cos: weight 1/2 on +n/2 and -n/2
    ix = grid.nx // 2
    iy = grid.ny // 2
    ex[:, ix] = np.cos(pts[:, 0] * ix)
    ey[:, iy] = np.cos(pts[:, 1] * iy)
    return np.einsum("ml,lk,mk->m", ey, c, ex).real


# -- CSV dumps ------------------------------------------------------------

def write_field_csv(path, values: np.ndarray, grid: TorusGrid) -> None:
    """``# nx=<nx> ny=<ny>`` header, then ny rows of nx values (row = fixed y)."""
    path = Path(path)
    arr = np.asarray(values).reshape(grid.shape)
    with path.open("w", newline="") as fh:
        fh.write(f"# nx={grid.nx} ny={grid.ny}\n")
        w = csv.writer(fh)
        for row in arr:
            w.writerow([repr(float(v)) for v in row])


def write_complex_field_csv(stem, values: np.ndarray, grid: TorusGrid) -> None:
    stem = str(stem)
    arr = np.asarray(values, dtype=complex)
    write_field_csv(stem + "_re.csv", arr.real, grid)
    write_field_csv(stem + "_im.csv", arr.imag, grid)


def read_field_csv(path) -> ScalarField:
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip()
        if not header.startswith("#"):
            raise GridError(f"{path}: missing '# nx=.. ny=..' header")
        meta = dict(tok.split("=") for tok in header[1:].split())
        grid = make_grid(int(meta["nx"]), int(meta["ny"]))
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
    return ScalarField(grid, np.array(rows))
