"""Double obstacle problem  phi - tau <= psi <= phi,
lap psi >= 0 where psi > phi - tau,  lap psi <= 0 where psi < phi.

Two independent solvers: projected SOR on the 5-point Laplacian, and the
penalization scheme -lap u = f_eps(u, .) + g_eps((u|psi_0)) solved by damped
Picard iteration with eps-continuation.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .torus_grid import TWO_PI, ScalarField, TorusGrid, laplacian_array
from .weights import Weight


class ObstacleError(RuntimeError):
    pass


class ConvergenceError(ObstacleError):
    def __init__(self, msg, residual=None, iterations=None):
        super().__init__(msg)
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class ObstacleSolution:
    psi: ScalarField
    tau: float
    method: str
    iterations: int
    residual: float
    wall_time: float
    tol: float
    history: dict = field(default_factory=dict, compare=False, repr=False)

    def sidecar(self) -> dict:
        return {"tau": self.tau, "method": self.method,
                "iterations": self.iterations, "residual": self.residual}


@dataclass(frozen=True)
class PenaltyParams:
    epsilon: float
    c0: float
    damping: float = 0.5
    schedule: tuple = (0.2, 0.1, 0.05, 0.02)

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        s = tuple(float(e) for e in self.schedule)
        if any(b >= a for a, b in zip(s, s[1:])) or any(e <= 0 for e in s):
            raise ValueError("eps schedule must be positive and strictly decreasing")
        object.__setattr__(self, "schedule", s)


def default_penalty(w: Weight, schedule=(0.2, 0.1, 0.05, 0.02),
                    damping: float = 0.5) -> PenaltyParams:
    c0 = 2.0 * float(np.abs(w.lap_phi.values).max())
    return PenaltyParams(min(schedule), c0, damping, tuple(schedule))


# -- projected SOR ------------------------------------------------------

def _parity_mask(shape) -> np.ndarray:
    idx = np.indices(shape).sum(axis=0)
    return idx % 2 == 0


def psor_sweeps(lo: np.ndarray, hi: np.ndarray, psi: np.ndarray,
                spacings, omega: float, tol: float, max_iter: int,
                strict: bool = True):
    """Red-black projected SOR for the periodic FD Laplacian on any
    number of axes.  Returns ``(psi, sweeps, last_change)``; with
    ``strict=False`` an unconverged iterate is returned instead of raising."""
    psi = np.clip(psi.astype(float, copy=True), lo, hi)
    w = [1.0 / h**2 for h in spacings]
    diag = 2.0 * sum(w)
    colors = (_parity_mask(psi.shape), ~_parity_mask(psi.shape))
    change = np.inf
    for it in range(1, max_iter + 1):
        change = 0.0
        for mask in colors:
            nb = np.zeros_like(psi)
            for ax, wa in enumerate(w):
                nb += wa * (np.roll(psi, 1, axis=ax) + np.roll(psi, -1, axis=ax))
            new = psi + omega * (nb / diag - psi)
            np.clip(new, lo, hi, out=new)
            d = np.abs(new[mask] - psi[mask]).max()
            change = max(change, d)
            psi[mask] = new[mask]
        if change <= tol:
            return psi, it, change
    if not strict:
        return psi, max_iter, change
    raise ConvergenceError(
        f"PSOR did not converge in {max_iter} sweeps (last change {change:.3e})",
        residual=change, iterations=max_iter)


def _prolong(coarse: np.ndarray) -> np.ndarray:
    # periodic linear interpolation by a factor 2 along every axis
    out = coarse
    for ax in range(coarse.ndim):
        nxt = np.roll(out, -1, axis=ax)
        shape = list(out.shape)
        shape[ax] *= 2
        fine = np.empty(shape)
        sl_even = [slice(None)] * out.ndim
        sl_odd = [slice(None)] * out.ndim
        sl_even[ax] = slice(0, None, 2)
        sl_odd[ax] = slice(1, None, 2)
        fine[tuple(sl_even)] = out
        fine[tuple(sl_odd)] = 0.5 * (out + nxt)
        out = fine
    return out


def initial_guess(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    # the constant solving the critical case, clipped into the box
    c = 0.5 * (lo.max() + hi.min())
    return np.clip(np.full_like(lo, c), lo, hi)


def cascadic_psor(lo, hi, spacings, omega, tol, max_iter, min_size=16,
                  initial=None):
    """PSOR preceded by coarse-to-fine initialization on subsampled obstacles."""
    shape = lo.shape
    sweeps = 0
    if initial is None and all(n % 2 == 0 and n // 2 >= min_size for n in shape):
        sl = tuple(slice(0, None, 2) for _ in shape)
        coarse, s, _ = cascadic_psor(lo[sl], hi[sl], [2 * h for h in spacings],
                                     omega, tol, max_iter, min_size)
        sweeps += s
        initial = _prolong(coarse)
    if initial is None:
        initial = initial_guess(lo, hi)
    psi, it, change = psor_sweeps(lo, hi, initial, spacings, omega, tol, max_iter)
    return psi, sweeps + it, change


def _check_tau(w: Weight, tau: float):
    if not tau > 0:
        raise ObstacleError("tau must be positive")
    if tau > w.osc * (1 + 1e-12):
        raise ObstacleError(
            f"tau={tau} exceeds osc={w.osc:.6g}: non-uniqueness regime")


def solve_psor(w: Weight, tau: float, omega: float = 1.8, tol: float = 1e-10,
               max_iter: int = 200000, cascade: bool = True,
               initial: np.ndarray | None = None) -> ObstacleSolution:
    _check_tau(w, tau)
    if not 0 < omega < 2:
        raise ObstacleError("omega must lie in (0, 2)")
    t0 = time.perf_counter()
    g = w.grid
    hi = w.phi.values
    lo = hi - tau
    spacings = (g.dy, g.dx)  # axis 0 is y
    if cascade:
        psi, it, change = cascadic_psor(lo, hi, spacings, omega, tol, max_iter,
                                        initial=initial)
    else:
        init = initial_guess(lo, hi) if initial is None else initial
        psi, it, change = psor_sweeps(lo, hi, init, spacings, omega, tol, max_iter)
    return ObstacleSolution(ScalarField(g, psi), float(tau), "psor", int(it),
                            float(change), time.perf_counter() - t0, float(tol))


# -- penalization -------------------------------------------------------

def heaviside_eps(t, eps):
    """Lipschitz Heaviside: 1 on [0, inf), 1 + t/eps on [-eps, 0), else 0."""
    t = np.asarray(t, dtype=float)
    return np.where(t >= 0, 1.0, np.where(t >= -eps, 1.0 + t / eps, 0.0))


def f_eps(t, lap_lo, lap_hi, lo, hi, eps):
    """Penalty (lap lo)^- H(lo - t) - (lap hi)^+ H(t - hi)."""
    return (np.maximum(-lap_lo, 0.0) * heaviside_eps(lo - t, eps)
            - np.maximum(lap_hi, 0.0) * heaviside_eps(t - hi, eps))


@dataclass(frozen=True)
class MeanPenalty:
    """Strictly decreasing piecewise-affine g_eps on the mean coefficient.

    Breakpoints lo0 < lo0 + eps(1-eps) < hi0 - eps(1-eps) < hi0 with values
    C0, C0*eps, -C0*eps, -C0 and slope -C0 outside [lo0, hi0].
    """
    lo0: float
    hi0: float
    c0: float
    eps: float

    def __post_init__(self):
        if not self.lo0 + self.eps * (1 - self.eps) < self.hi0 - self.eps * (1 - self.eps):
            raise ObstacleError(
                f"eps={self.eps} too large for the obstacle gap "
                f"{self.hi0 - self.lo0:.4g} of the mean coefficients")

    @property
    def knots(self):
        d = self.eps * (1 - self.eps)
        t = np.array([self.lo0, self.lo0 + d, self.hi0 - d, self.hi0])
        v = np.array([self.c0, self.c0 * self.eps, -self.c0 * self.eps, -self.c0])
        return t, v

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        kt, kv = self.knots
        out = np.interp(t, kt, kv)
        out = np.where(t < kt[0], kv[0] - self.c0 * (t - kt[0]), out)
        return np.where(t > kt[-1], kv[-1] - self.c0 * (t - kt[-1]), out)

    def inverse(self, v):
        v = np.asarray(v, dtype=float)
        kt, kv = self.knots
        # kv is decreasing; interp needs increasing abscissae
        out = np.interp(v, kv[::-1], kt[::-1])
        out = np.where(v > kv[0], kt[0] - (v - kv[0]) / self.c0, out)
        return np.where(v < kv[-1], kt[-1] - (v - kv[-1]) / self.c0, out)


def _inv_neg_laplacian(f: np.ndarray, grid: TorusGrid) -> np.ndarray:
    # Q = (-lap)^(-1) on mean-zero fields
    k, l = grid.wavenumbers()
    denom = k**2 + l**2
    denom[0, 0] = 1.0
    fh = np.fft.fft2(f - f.mean()) / denom
    fh[0, 0] = 0.0
    return np.fft.ifft2(fh).real


def solve_penalized(w: Weight, tau: float, pp: PenaltyParams | None = None,
                    tol: float = 1e-9, max_iter: int = 200000,
                    initial: np.ndarray | None = None) -> ObstacleSolution:
    """Penalization with warm-started eps continuation.

    The mean coefficient c = (u|psi_0) is the root of the scalar monotone
    equation  g_eps(c) = -mean f_eps(c psi_0 + w, .)  for the current
    mean-zero part w; w itself follows the damped Picard map
    w <- (1-theta) w + theta Q f_eps(u, .).  theta is capped by the
    Lipschitz bound 1/(1 + max|lap phi|/eps) of the map.
    """
    _check_tau(w, tau)
    if pp is None:
        pp = default_penalty(w)
    t0 = time.perf_counter()
    grid = w.grid
    hi = w.phi.values
    lo = hi - tau
    lap = w.lap_phi.values
    sqrt_vol = TWO_PI  # vol(M) = 4 pi^2
    lo0 = lo.mean() * sqrt_vol
    hi0 = hi.mean() * sqrt_vol
    lap_max = float(np.abs(lap).max())

    u = initial_guess(lo, hi) if initial is None else np.array(initial, float)
    total = 0
    history = {"eps": [], "iterations": [], "mean_coeff": [], "bracket_ok": True}
    residual = np.inf
    for eps in [e for e in pp.schedule if e >= pp.epsilon]:
        gpen = MeanPenalty(lo0, hi0, pp.c0, eps)
        theta = min(pp.damping, 1.0 / (1.0 + lap_max / eps))

        def solve_mean(wz):
            def F(c):
                return np.mean(f_eps(c / sqrt_vol + wz, lap, lap, lo, hi, eps)) + gpen(c)
            a, b = lo0 - 1.0, hi0 + 1.0
            while F(a) < 0:
                a -= 2 * (b - a)
            while F(b) > 0:
                b += 2 * (b - a)
            return brentq(F, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps)

        wz = u - u.mean()
        c = solve_mean(wz)
        best = np.inf
        stall = 0
        for it in range(1, max_iter + 1):
            u = c / sqrt_vol + wz
            fu = f_eps(u, lap, lap, lo, hi, eps)
            target = _inv_neg_laplacian(fu, grid)
            residual = float(np.abs(target - wz).max())
            wz = wz + theta * (target - wz)
            c = solve_mean(wz)
            if not lo0 <= c <= hi0:
                history["bracket_ok"] = False
            if residual <= tol:
                break
            # plateau detection on the fixed-point residual
            if residual < 0.999 * best:
                best, stall = residual, 0
            else:
                stall += 1
                if stall > 5000:
                    raise ConvergenceError(
                        f"Picard stagnation at eps={eps}: residual {residual:.3e}; "
                        "use smaller damping or larger eps_min",
                        residual=residual, iterations=total + it)
        else:
            raise ConvergenceError(
                f"penalized solve did not converge at eps={eps} "
                f"(residual {residual:.3e})", residual=residual,
                iterations=total + max_iter)
        total += it
        u = c / sqrt_vol + wz
        history["eps"].append(eps)
        history["iterations"].append(it)
        history["mean_coeff"].append(c)
    return ObstacleSolution(ScalarField(grid, u), float(tau), "penalized",
                            int(total), float(residual),
                            time.perf_counter() - t0, float(tol), history)


# -- diagnostics ---------------------------------------------------------

@dataclass(frozen=True)
class Residual:
    box_violation: float
    sub_violation: float
    super_violation: float
    band_interior: float

    def max(self) -> float:
        return max(self.box_violation, self.sub_violation, self.super_violation)


def complementarity_residual(psi: ScalarField, w: Weight, tau: float,
                             delta: float) -> Residual:
    """Violations of the three obstacle conditions, measured with the
    spectral Laplacian at nodes at least ``delta`` away (in value) from a
    contact transition."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    p = psi.values
    phi = w.phi.values
    lp = laplacian_array(p, psi.grid)
    box = float(np.max(np.maximum(np.maximum(phi - tau - p, p - phi), 0.0)))
    off_lo = p > phi - tau + delta
    off_hi = p < phi - delta
    sub = float(np.max(np.maximum(-lp[off_lo], 0.0), initial=0.0))
    sup = float(np.max(np.maximum(lp[off_hi], 0.0), initial=0.0))
    band = off_lo & off_hi
    inner = float(np.max(np.abs(lp[band]), initial=0.0))
    return Residual(box, sub, sup, inner)


def default_delta(w: Weight, tol: float) -> float:
    g = w.grid
    return max(10.0 * tol, 5.0 * max(g.dx, g.dy) ** 2 * float(np.abs(w.lap_phi.values).max()))
