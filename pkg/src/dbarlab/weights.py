"""Weights phi on the torus: catalog, Laplacian sign regions, zero curve of
the Laplacian and the curve integral of (d_n Laplacian)^(1/3)."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .torus_grid import (
    TWO_PI,
    ComplexField,
    ScalarField,
    TorusGrid,
    gradient,
    integrate,
    laplacian,
    poisson_solve,
    spectral_interpolate,
)

CATALOG = ("siny", "bump", "custom-poisson")


class WeightError(ValueError):
    pass


@dataclass(frozen=True)
class Weight:
    phi: ScalarField
    lap_phi: ScalarField
    dbar_phi: ComplexField
    osc: float
    name: str = "custom"
    params: dict = field(default_factory=dict)

    @property
    def grid(self) -> TorusGrid:
        return self.phi.grid

    @property
    def depends_on_y_only(self) -> bool:
        return bool(np.max(self.phi.values.var(axis=1)) <= 1e-12)


def weight_from_field(phi: ScalarField, name: str = "custom",
                      params: dict | None = None) -> Weight:
    osc = float(phi.values.max() - phi.values.min())
    if not osc > 1e-12:
        raise WeightError("weight must be non-constant (osc > 0)")
    lap = laplacian(phi)
    fx, fy = gradient(phi)
    dbar = ComplexField(phi.grid, 0.5 * (fx.values + 1j * fy.values))
    scale = np.abs(lap.values).sum() * phi.grid.cell_area
    if abs(integrate(lap)) > 1e-10 * max(scale, 1.0):
        raise WeightError("Laplacian of the weight does not integrate to 0")
    return Weight(phi, lap, dbar, osc, name, dict(params or {}))


def bump_source(grid: TorusGrid, center=(np.pi, np.pi), sigma=0.8,
                amplitude=1.0, images: int = 2) -> np.ndarray:
    """Periodized Gaussian bump minus its (discrete) mean."""
    X, Y = grid.mesh()
    x0, y0 = center
    g = np.zeros(grid.shape)
    for m in range(-images, images + 1):
        for n in range(-images, images + 1):
            r2 = (X - x0 + TWO_PI * m) ** 2 + (Y - y0 + TWO_PI * n) ** 2
            g += np.exp(-r2 / (2.0 * sigma**2))
    g *= amplitude
    return g - g.mean()


def weight_from_catalog(name: str, params: dict | None, grid: TorusGrid) -> Weight:
    params = dict(params or {})
    if name == "siny":
        _, Y = grid.mesh()
        return weight_from_field(ScalarField(grid, np.sin(Y)), "siny", params)
    if name == "bump":
        center = (float(params.get("center_x", np.pi)),
                  float(params.get("center_y", np.pi)))
        sigma = float(params.get("sigma", 0.8))
        amp = float(params.get("amplitude", 1.0))
        if sigma <= 0 or amp == 0:
            raise WeightError("bump needs sigma > 0 and amplitude != 0")
        g = bump_source(grid, center, sigma, amp)
        phi = poisson_solve(ScalarField(grid, g))
        p = {"center_x": center[0], "center_y": center[1], "sigma": sigma,
             "amplitude": amp}
        return weight_from_field(phi, "bump", p)
    if name == "custom-poisson":
        g = params.get("g")
        if g is None:
            raise WeightError("custom-poisson needs a source field 'g'")
        gf = g if isinstance(g, ScalarField) else ScalarField(grid, np.asarray(g))
        return weight_from_field(poisson_solve(gf), "custom-poisson", {})
    raise WeightError(f"unknown weight {name!r}; choose from {', '.join(CATALOG)}")


def oscillation(w: Weight) -> float:
    return float(w.phi.values.max() - w.phi.values.min())


def positive_region_volume(w: Weight) -> float:
    """Integral of the Laplacian over ``{lap > 0}``."""
    lap = w.lap_phi.values
    return float(np.where(lap > 0, lap, 0.0).sum() * w.grid.cell_area)


def negative_region_volume(w: Weight) -> float:
    lap = w.lap_phi.values
    return float(np.where(lap < 0, lap, 0.0).sum() * w.grid.cell_area)


# -- zero curve of the Laplacian -------------------------------------------

@dataclass(frozen=True)
class CurveSample:
    components: list  # list of (m, 2) arrays, closed: last point == first
    dn_lap: list      # per-point |grad lap|
    arclength: list   # per-segment lengths
    dn_mid: list      # |grad lap| at segment midpoints

    @property
    def n_components(self) -> int:
        return len(self.components)

    def total_length(self) -> float:
        return float(sum(a.sum() for a in self.arclength))


def _edge_point(i, j, edge, f, grid):
    """Linear zero crossing on an edge of the cell with lower-left node (j, i).

    Edges: 0 bottom (j,i)-(j,i+1), 1 right (j,i+1)-(j+1,i+1),
    2 top (j+1,i)-(j+1,i+1), 3 left (j,i)-(j+1,i).
    Coordinates are unwrapped (may equal 2pi at the seam).
    """
    ny, nx = f.shape
    ip, jp = (i + 1) % nx, (j + 1) % ny
    if edge == 0:
        a, b, p0, p1 = f[j, i], f[j, ip], (i, j), (i + 1, j)
    elif edge == 1:
        a, b, p0, p1 = f[j, ip], f[jp, ip], (i + 1, j), (i + 1, j + 1)
    elif edge == 2:
        a, b, p0, p1 = f[jp, i], f[jp, ip], (i, j + 1), (i + 1, j + 1)
    else:
        a, b, p0, p1 = f[j, i], f[jp, i], (i, j), (i, j + 1)
    t = a / (a - b)
    x = (p0[0] + t * (p1[0] - p0[0])) * grid.dx
    y = (p0[1] + t * (p1[1] - p0[1])) * grid.dy
    return (x % TWO_PI, y % TWO_PI)


def _edge_key(i, j, edge, nx, ny):
    # canonical id shared by the two cells adjacent to an edge
    if edge == 0:
        return ("h", i, j)
    if edge == 2:
        return ("h", i, (j + 1) % ny)
    if edge == 3:
        return ("v", i, j)
    return ("v", (i + 1) % nx, j)


def _cell_segments(f, i, j):
    ny, nx = f.shape
    ip, jp = (i + 1) % nx, (j + 1) % ny
    v = (f[j, i], f[j, ip], f[jp, ip], f[jp, i])  # ll, lr, ur, ul
    s = [val > 0 for val in v]
    crossings = []
    # edge order around the cell: bottom(ll-lr), right(lr-ur), top(ul-ur), left(ll-ul)
    pairs = {0: (0, 1), 1: (1, 2), 2: (3, 2), 3: (0, 3)}
    for e, (p, q) in pairs.items():
        if s[p] != s[q]:
            crossings.append(e)
    if len(crossings) == 2:
        return [tuple(crossings)]
    if len(crossings) == 4:
        center = sum(v) / 4.0
        # saddle: connect so that the center's sign region stays connected
        if (center > 0) == s[0]:
            return [(0, 1), (2, 3)]
        return [(0, 3), (1, 2)]
    return []


def marching_squares_periodic(f: np.ndarray, grid: TorusGrid) -> list[np.ndarray]:
    """Closed zero contours of a periodic sampled field, linear interpolation."""
    ny, nx = f.shape
    f = np.where(f == 0.0, np.finfo(float).tiny, f)
    adj: dict = {}
    points: dict = {}
    for j in range(ny):
        for i in range(nx):
            for e0, e1 in _cell_segments(f, i, j):
                k0 = _edge_key(i, j, e0, nx, ny)
                k1 = _edge_key(i, j, e1, nx, ny)
                points.setdefault(k0, _edge_point(i, j, e0, f, grid))
                points.setdefault(k1, _edge_point(i, j, e1, f, grid))
                adj.setdefault(k0, []).append(k1)
                adj.setdefault(k1, []).append(k0)
    comps = []
    seen = set()
    for start in sorted(adj):
        if start in seen:
            continue
        chain = [start]
        seen.add(start)
        prev, cur = None, start
        while True:
            nbrs = [n for n in adj[cur] if n != prev] or adj[cur]
            nxt = nbrs[0]
            if nxt == start:
                break
            if nxt in seen:
                break
            chain.append(nxt)
            seen.add(nxt)
            prev, cur = cur, nxt
        pts = np.array([points[k] for k in chain] + [points[chain[0]]])
        comps.append(pts)
    return comps


def _min_image(d):
    return (d + np.pi) % TWO_PI - np.pi


def extract_zero_curve(w: Weight, transversality: float = 1e-3) -> CurveSample:
    grid = w.grid
    lap = w.lap_phi
    if lap.values.min() >= 0 or lap.values.max() <= 0:
        raise WeightError("weight has no sign change of its Laplacian")
    gx, gy = gradient(lap)
    gnorm = np.hypot(gx.values, gy.values)
    comps = marching_squares_periodic(lap.values, grid)
    if not comps:
        raise WeightError("weight has no sign change of its Laplacian")
    dn, arcs, mids = [], [], []
    floor = transversality * gnorm.max()
    for pts in comps:
        dn_pts = np.hypot(spectral_interpolate(gx.values, grid, pts),
                          spectral_interpolate(gy.values, grid, pts))
        if dn_pts.min() <= floor:
            raise WeightError(
                "transversality d(lap phi) != 0 along the zero curve fails "
                f"(min |grad lap| = {dn_pts.min():.2e})")
        steps = _min_image(np.diff(pts, axis=0))
        seg = np.hypot(steps[:, 0], steps[:, 1])
        midpts = (pts[:-1] + 0.5 * steps) % TWO_PI
        dn_mid = np.hypot(spectral_interpolate(gx.values, grid, midpts),
                          spectral_interpolate(gy.values, grid, midpts))
        dn.append(dn_pts)
        arcs.append(seg)
        mids.append(dn_mid)
    return CurveSample(comps, dn, arcs, mids)


def curve_integral_third_power(c: CurveSample) -> float:
    return float(sum((m ** (1.0 / 3.0) * a).sum()
                     for m, a in zip(c.dn_mid, c.arclength)))


def write_curve_csv(path, c: CurveSample) -> None:
    with Path(path).open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["component", "x", "y", "dn_lap"])
        for ci, (pts, dn) in enumerate(zip(c.components, c.dn_lap)):
            for (x, y), d in zip(pts, dn):
                wr.writerow([ci, repr(float(x)), repr(float(y)), repr(float(d))])
