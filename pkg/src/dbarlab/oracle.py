"""Separation-of-variables oracle for weights phi = phi(y).

For u = exp(ikx) w(y) the operator acts as

    P u = (i/2) (h w' + (h k + phi'(y)) w) exp(ikx),

so the 2-D singular values are the union over k of the singular values of
the 1-D mode operators.  For |h k| > max|phi'| the Hermitian part
diag(hk + phi') of the mode operator is definite while h d/dy is
skew-Hermitian, hence  |<A w, w>| >= (|hk| - max|phi'|)/2  for unit w, and
every singular value of mode k is at least  (|hk| - max|phi'|)/2.  Truncating
at |k| <= k_max therefore captures every singular value below
(h (k_max + 1) - max|phi'|)/2.

The module also carries a fine-grid 1-D double obstacle solver and the
closed-form solution for phi = sin y.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .dbar_op import SpectrumResult
from .obstacle import ConvergenceError, cascadic_psor
from .torus_grid import TWO_PI, TorusGrid
from .weights import Weight


class OracleError(ValueError):
    pass


# -- 1-D spectral calculus -------------------------------------------------

def _wavenumbers(n: int) -> np.ndarray:
    return np.fft.fftfreq(n, d=1.0 / n)


def spectral_derivative_matrix(n: int) -> np.ndarray:
    """Dense d/dy with the full multiplier i*l (Nyquist kept), matching the
    y-part of the 2-D dbar."""
    l = _wavenumbers(n)
    eye = np.eye(n)
    return np.fft.ifft(1j * l[:, None] * np.fft.fft(eye, axis=0), axis=0)


def real_derivative(f: np.ndarray) -> np.ndarray:
    # derivative of a real periodic sample, Nyquist mode dropped
    n = f.size
    l = _wavenumbers(n)
    l[n // 2] = 0.0
    return np.fft.ifft(1j * l * np.fft.fft(f)).real


def resample(f: np.ndarray, n: int) -> np.ndarray:
    """Trigonometric resampling of periodic samples to ``n`` points."""
    f = np.asarray(f, dtype=float)
    m = f.size
    if m == n:
        return f.copy()
    c = np.fft.rfft(f) / m
    if m % 2 == 0:
        c[-1] *= 0.5  # split the Nyquist cosine evenly
    out = np.zeros(n // 2 + 1, dtype=complex)
    k = min(c.size, out.size)
    out[:k] = c[:k]
    return np.fft.irfft(out * n, n)


# -- mode operators ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ModeOperator:
    k: int
    h: float
    ny: int
    entries: np.ndarray

    def svals(self) -> np.ndarray:
        return np.sort(np.linalg.svd(self.entries, compute_uv=False))


def mode_operator(dphi: np.ndarray, h: float, k: int,
                  deriv: np.ndarray | None = None) -> ModeOperator:
    ny = dphi.size
    d = spectral_derivative_matrix(ny) if deriv is None else deriv
    a = h * d + np.diag(h * k + dphi)
    return ModeOperator(int(k), float(h), ny, 0.5j * a)


def required_k_max(dphi: np.ndarray, h: float) -> int:
    return int(math.ceil(2.0 * float(np.abs(dphi).max()) / h))


def coverage_bound(dphi: np.ndarray, h: float, k_max: int) -> float:
    """Lower bound on singular values of all modes with |k| > k_max."""
    return 0.5 * (h * (k_max + 1) - float(np.abs(dphi).max()))


def oracle_spectrum(phi_y, h: float, k_max: int | None = None,
                    ny: int | None = None, saturation: bool = True) -> SpectrumResult:
    """Merged singular values of the mode operators with |k| <= k_max.

    The result is complete below ``valid_below`` (the coverage bound); counts
    at larger thresholds are refused by ``count_below``.
    """
    if not h > 0:
        raise OracleError("h must be positive")
    phi_y = np.asarray(phi_y, dtype=float)
    if ny is not None and ny != phi_y.size:
        phi_y = resample(phi_y, ny)
    dphi = real_derivative(phi_y)
    need = required_k_max(dphi, h)
    if k_max is None:
        k_max = need
    if k_max < need:
        raise OracleError(f"k_max={k_max} too small: need k_max >= {need} "
                          "to capture all singular values below threshold")
    deriv = spectral_derivative_matrix(phi_y.size)
    vals = [mode_operator(dphi, h, k, deriv).svals() for k in range(-k_max, k_max + 1)]
    s = np.sort(np.concatenate(vals))
    bound = coverage_bound(dphi, h, k_max)
    flags = ()
    if saturation:
        extra = min(mode_operator(dphi, h, k, deriv).svals()[0]
                    for k in (-k_max - 1, k_max + 1))
        if extra < bound * (1 - 1e-12):
            flags = (f"saturation: mode k_max+1 has sval {extra:.3e} below bound",)
    norm = float(s[-1])
    return SpectrumResult(float(h), tuple(s), valid_below=bound, norm=norm,
                          flags=flags)


def y_profile(w: Weight) -> np.ndarray:
    """The y-profile of a weight that depends on y only."""
    if not w.depends_on_y_only:
        raise OracleError("weight depends on x: separation of variables does not apply")
    return w.phi.values[:, 0].copy()


def oracle_for_weight(w: Weight, h: float, k_max: int | None = None) -> SpectrumResult:
    return oracle_spectrum(y_profile(w), h, k_max)


# -- 1-D double obstacle ---------------------------------------------------

@dataclass(frozen=True)
class Obstacle1D:
    y: np.ndarray
    psi: np.ndarray
    phi: np.ndarray
    tau: float
    iterations: int
    residual: float

    def masks(self, delta: float = 1e-9):
        m_plus = self.phi - self.psi <= delta
        m_minus = self.psi - (self.phi - self.tau) <= delta
        return m_plus, m_minus


def _sample(phi_y, n: int) -> np.ndarray:
    if callable(phi_y):
        return np.asarray(phi_y(np.arange(n) * TWO_PI / n), dtype=float)
    return resample(np.asarray(phi_y, dtype=float), n)


def solve_obstacle_1d(phi: np.ndarray, tau: float, omega: float = 1.95,
                      tol: float = 1e-13, max_iter: int = 1_000_000,
                      check: bool = True) -> Obstacle1D:
    """Projected SOR for the periodic 3-point Laplacian with box
    [phi - tau, phi] at the resolution of the samples ``phi``."""
    phi = np.asarray(phi, dtype=float)
    n = phi.size
    osc = float(phi.max() - phi.min())
    if not 0 < tau <= osc * (1 + 1e-12):
        raise OracleError(f"tau must lie in (0, osc={osc:.6g}]")
    dy = TWO_PI / n
    try:
        psi, it, change = cascadic_psor(phi - tau, phi, (dy,), omega, tol, max_iter)
    except ConvergenceError as exc:
        raise OracleError(f"1-D obstacle solve failed: {exc}") from exc
    sol = Obstacle1D(np.arange(n) * dy, psi, phi, float(tau), int(it), float(change))
    if check:
        _check_1d(sol)
    return sol


def oracle_obstacle_1d(phi_y, tau: float, n_fine: int = 4096,
                       omega: float = 1.95, tol: float = 1e-13,
                       max_iter: int = 1_000_000, check: bool = True) -> Obstacle1D:
    """Fine-grid 1-D double obstacle solve.

    ``phi_y`` is a callable of y or an array of periodic samples (resampled
    trigonometrically to ``n_fine`` points).  With ``check`` the solution is
    verified a posteriori: affine on the band and free of kinks at the
    contact transitions.
    """
    if n_fine < 1024 or n_fine % 2:
        raise OracleError("n_fine must be even and >= 1024")
    return solve_obstacle_1d(_sample(phi_y, n_fine), tau, omega, tol, max_iter, check)


def _check_1d(sol: Obstacle1D) -> None:
    psi, phi = sol.psi, sol.phi
    d2 = np.roll(psi, 1) - 2 * psi + np.roll(psi, -1)
    lo = phi - sol.tau
    band = (psi > lo + 1e-9) & (psi < phi - 1e-9)
    if band.any() and np.abs(d2[band]).max() > 1e-8:
        raise OracleError("band segments are not affine (second difference > 1e-8)")
    d2phi = np.roll(phi, 1) - 2 * phi + np.roll(phi, -1)
    if np.abs(d2).max() > 2.0 * np.abs(d2phi).max() + 1e-8:
        raise OracleError("kink at a contact transition: detachment is not tangential")


def contact_intervals(mask: np.ndarray, y: np.ndarray) -> list[tuple[float, float]]:
    """Maximal runs of a periodic boolean mask as ``(start, end)`` node
    coordinates; a run crossing the seam has ``end < start``."""
    n = mask.size
    if mask.all():
        return [(0.0, float(y[-1]))]
    if not mask.any():
        return []
    shift = int(np.argmin(mask))  # start scanning from a False node
    m = np.roll(mask, -shift)
    out = []
    i = 0
    while i < n:
        if m[i]:
            j = i
            while j + 1 < n and m[j + 1]:
                j += 1
            out.append((float(y[(i + shift) % n]), float(y[(j + shift) % n])))
            i = j + 1
        else:
            i += 1
    return sorted(out)


def reflection_asymmetry(mask: np.ndarray, center: float) -> int:
    """Number of nodes whose reflection about ``y = center`` changes the
    mask value (0 for a symmetric mask, node-exact when 2*center/dy is an
    integer)."""
    n = mask.size
    c = center * n / TWO_PI
    j = np.arange(n)
    refl = np.rint(2 * c - j).astype(int) % n
    return int(np.sum(mask != mask[refl]))


def lift_to_grid(sol: Obstacle1D, grid: TorusGrid) -> np.ndarray:
    """The 1-D solution sampled on the y-nodes of ``grid`` and broadcast in x."""
    n = sol.psi.size
    if n % grid.ny == 0:
        col = sol.psi[:: n // grid.ny]
    else:
        col = np.interp(grid.y, np.append(sol.y, TWO_PI), np.append(sol.psi, sol.psi[0]))
    return np.broadcast_to(col[:, None], grid.shape).copy()


def write_obstacle_1d_csv(path, sol: Obstacle1D) -> None:
    with Path(path).open("w") as fh:
        fh.write("y,psi,phi\n")
        for y, p, f in zip(sol.y, sol.psi, sol.phi):
            fh.write(f"{y!r},{p!r},{f!r}\n")


# -- closed form for phi = sin y ------------------------------------------

def siny_tangent_parameter(tau: float) -> float:
    """Solution s of  tau = 2 (sin s - s cos s)  on (0, pi/2].

    The bands of the sin y solution are common tangent lines of the two
    obstacles, touching them at y = -s, s and y = pi - s, pi + s.
    """
    if not 0 < tau <= 2.0:
        raise OracleError("tau must lie in (0, 2] for sin y")
    if tau == 2.0:
        return math.pi / 2
    return brentq(lambda s: 2 * (math.sin(s) - s * math.cos(s)) - tau,
                  1e-12, math.pi / 2, xtol=1e-15)


def siny_solution(y: np.ndarray, tau: float) -> np.ndarray:
    """Exact double obstacle solution for phi = sin y.

    Lower contact [s, pi - s], upper contact [pi + s, 2pi - s]; both bands
    are affine and tangent to the obstacles at their ends.
    """
    s = siny_tangent_parameter(tau)
    y = np.mod(np.asarray(y, dtype=float), TWO_PI)
    out = np.empty_like(y)
    lower = (y >= s) & (y <= np.pi - s)
    upper = (y >= np.pi + s) & (y <= TWO_PI - s)
    out[lower] = np.sin(y[lower]) - tau
    out[upper] = np.sin(y[upper])
    yc = np.where(y > np.pi, y - TWO_PI, y)
    b0 = (yc > -s) & (yc < s)
    out[b0] = -math.sin(s) + math.cos(s) * (yc[b0] + s)
    b1 = (y > np.pi - s) & (y < np.pi + s)
    out[b1] = math.sin(s) - tau - math.cos(s) * (y[b1] - (np.pi - s))
    return out


def siny_v_plus(tau: float) -> float:
    """Integral of the Laplacian of sin y over the upper contact set."""
    return 4.0 * math.pi * math.cos(siny_tangent_parameter(tau))
