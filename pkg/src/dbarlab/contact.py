"""Contact sets, free boundary and the Weyl density of an obstacle solution."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .obstacle import ObstacleSolution, default_delta
from .torus_grid import TorusGrid
from .weights import Weight


class ContactError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ContactSets:
    m_plus: np.ndarray
    m_minus: np.ndarray
    band: np.ndarray
    delta: float
    fb_cell_count: int
    grid: TorusGrid

    def fb_area(self) -> float:
        return self.fb_cell_count * self.grid.cell_area


def mixed_cells(label: np.ndarray) -> np.ndarray:
    """Cells (periodic 2x2 node blocks) whose corner labels differ."""
    corners = [label, np.roll(label, -1, 1), np.roll(label, -1, 0),
               np.roll(np.roll(label, -1, 0), -1, 1)]
    mixed = np.zeros(label.shape, dtype=bool)
    for c in corners[1:]:
        mixed |= c != corners[0]
    return mixed


def contact_delta(sol: ObstacleSolution, w: Weight) -> float:
    """Detection margin used when none is given.

    PSOR projects contact nodes exactly onto the obstacle, so a margin of
    ten solver tolerances suffices; the penalized solution only reaches the
    obstacles up to O(eps) and gets the wider quadrature-based margin.
    """
    if sol.method == "psor":
        return max(10.0 * sol.tol, 10.0 * sol.residual)
    return default_delta(w, sol.tol)


def extract_contact_sets(sol: ObstacleSolution, w: Weight,
                         delta: float | None = None) -> ContactSets:
    if delta is None:
        delta = contact_delta(sol, w)
    if delta < sol.residual:
        raise ContactError(f"delta {delta:.3e} below solver residual {sol.residual:.3e}")
    psi = sol.psi.values
    phi = w.phi.values
    m_plus = phi - psi <= delta
    m_minus = psi - (phi - sol.tau) <= delta
    if np.any(m_plus & m_minus):
        raise ContactError(f"contact masks overlap: delta={delta:.3e} too large "
                           f"relative to tau={sol.tau}")
    band = ~(m_plus | m_minus)
    label = m_plus.astype(np.int8) - m_minus.astype(np.int8)
    fb = int(mixed_cells(label).sum())
    return ContactSets(m_plus, m_minus, band, float(delta), fb, w.grid)


def contact_volumes(cs: ContactSets, w: Weight) -> tuple[float, float]:
    lap = w.lap_phi.values
    da = w.grid.cell_area
    return (float(lap[cs.m_plus].sum() * da), float(lap[cs.m_minus].sum() * da))


def fd_laplacian(values: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """Periodic 5-point Laplacian, the operator the PSOR solution satisfies."""
    v = values
    return ((np.roll(v, 1, 1) - 2 * v + np.roll(v, -1, 1)) / grid.dx**2
            + (np.roll(v, 1, 0) - 2 * v + np.roll(v, -1, 0)) / grid.dy**2)


def flux_volumes(sol: ObstacleSolution, w: Weight) -> tuple[float, float]:
    """V_+ and V_- from the discrete Laplacian of psi itself.

    The solution is harmonic on the band and equals an obstacle on each
    contact set, so the positive and negative parts of its Laplacian measure
    the two contact volumes with sub-cell resolution of the free boundary.
    """
    lp = fd_laplacian(sol.psi.values, w.grid)
    da = w.grid.cell_area
    return (float(np.maximum(lp, 0.0).sum() * da), float(np.minimum(lp, 0.0).sum() * da))


def fd_positive_volume(w: Weight) -> float:
    """Integral of (lap phi)^+ with the 5-point Laplacian, the counterpart of
    ``flux_volumes`` for the full positive region."""
    lp = fd_laplacian(w.phi.values, w.grid)
    return float(np.maximum(lp, 0.0).sum() * w.grid.cell_area)


def balance_bound(cs: ContactSets, w: Weight, quad_tol: float = 1e-8) -> float:
    lap_max = float(np.abs(w.lap_phi.values).max())
    return cs.fb_area() * lap_max + quad_tol


# -- structure --------------------------------------------------------------

@dataclass(frozen=True)
class StructureReport:
    sign_ok: bool
    min_lap_on_plus: float
    max_lap_on_minus: float
    separation_ok: bool
    separation_margin: float
    volume_ok: bool
    frac_plus: float
    frac_minus: float
    fb_area: float
    sign_tol: float

    @property
    def passed(self) -> bool:
        return self.sign_ok and self.separation_ok and self.volume_ok

    def to_json(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


def sign_tolerance(w: Weight) -> float:
    # gap between the spectral and 5-point Laplacians, O(dx^2) times phi's scale
    g = w.grid
    return max(g.dx, g.dy) ** 2 * float(np.abs(w.lap_phi.values).max())


def assert_structure(cs: ContactSets, w: Weight, sign_tol: float | None = None,
                     min_fraction: float = 0.01) -> StructureReport:
    """Sign condition, separation from {lap phi = 0} and positive volume on
    one grid.  Free-boundary nullity needs several grids, see
    ``refinement_study``."""
    lap = w.lap_phi.values
    tol = sign_tolerance(w) if sign_tol is None else sign_tol
    lp_plus = lap[cs.m_plus]
    lp_minus = lap[cs.m_minus]
    min_plus = float(lp_plus.min()) if lp_plus.size else float("inf")
    max_minus = float(lp_minus.max()) if lp_minus.size else float("-inf")
    sign_ok = min_plus > -tol and max_minus < tol
    margin = min(min_plus, -max_minus)
    n = cs.m_plus.size
    fp = float(cs.m_plus.sum()) / n
    fm = float(cs.m_minus.sum()) / n
    return StructureReport(
        sign_ok=bool(sign_ok), min_lap_on_plus=min_plus, max_lap_on_minus=max_minus,
        separation_ok=bool(margin > 0), separation_margin=float(margin),
        volume_ok=bool(fp >= min_fraction and fm >= min_fraction),
        frac_plus=fp, frac_minus=fm, fb_area=cs.fb_area(), sign_tol=float(tol))


@dataclass(frozen=True)
class RefinementReport:
    sizes: tuple
    reports: tuple
    fb_areas: tuple
    fb_ratios: tuple
    margins: tuple
    max_second_difference: tuple

    @property
    def fb_nullity_ok(self) -> bool:
        # linear decay: each halving of dx at least reduces the area by 1/1.5
        return all(r <= 1 / 1.5 for r in self.fb_ratios)

    @property
    def margin_stable(self) -> bool:
        m = self.margins
        return all(v > 0 for v in m) and max(m) <= 4 * min(m)

    @property
    def passed(self) -> bool:
        return self.fb_nullity_ok and self.margin_stable and all(r.passed for r in self.reports)

    def to_json(self) -> dict:
        return {"sizes": list(self.sizes), "reports": [r.to_json() for r in self.reports],
                "fb_areas": list(self.fb_areas), "fb_ratios": list(self.fb_ratios),
                "margins": list(self.margins),
                "max_second_difference": list(self.max_second_difference),
                "fb_nullity_ok": self.fb_nullity_ok, "margin_stable": self.margin_stable,
                "passed": self.passed}


def max_second_difference(psi: np.ndarray, grid: TorusGrid) -> float:
    """Largest centred second difference quotient along either axis."""
    dxx = (np.roll(psi, 1, 1) - 2 * psi + np.roll(psi, -1, 1)) / grid.dx**2
    dyy = (np.roll(psi, 1, 0) - 2 * psi + np.roll(psi, -1, 0)) / grid.dy**2
    return float(max(np.abs(dxx).max(), np.abs(dyy).max()))


def refinement_study(weight_factory, tau_of, sizes=(32, 64, 128), solver=None) -> RefinementReport:
    """Run solve + extraction on each grid size.

    ``weight_factory(n)`` builds the weight on an n-by-n grid, ``tau_of(w)``
    returns tau for that weight and ``solver(w, tau)`` defaults to PSOR.
    """
    from .obstacle import solve_psor

    solver = solver or solve_psor
    reports, areas, margins, d2 = [], [], [], []
    for n in sizes:
        w = weight_factory(n)
        sol = solver(w, tau_of(w))
        cs = extract_contact_sets(sol, w)
        rep = assert_structure(cs, w)
        reports.append(rep)
        areas.append(cs.fb_area())
        margins.append(rep.separation_margin)
        d2.append(max_second_difference(sol.psi.values, w.grid))
    ratios = tuple(b / a for a, b in zip(areas, areas[1:]))
    return RefinementReport(tuple(sizes), tuple(reports), tuple(areas), ratios,
                            tuple(margins), tuple(d2))


# -- export -----------------------------------------------------------------

def write_mask_csv(path, mask: np.ndarray, grid: TorusGrid) -> None:
    with Path(path).open("w") as fh:
        fh.write(f"# nx={grid.nx} ny={grid.ny}\n")
        for row in np.asarray(mask, dtype=bool):
            fh.write(",".join("1" if v else "0" for v in row) + "\n")


def run_length(mask: np.ndarray) -> dict:
    """Row-major run-length code: value of the first run, then run lengths."""
    flat = np.asarray(mask, dtype=bool).ravel()
    edges = np.flatnonzero(np.diff(flat.astype(np.int8))) + 1
    bounds = np.concatenate(([0], edges, [flat.size]))
    return {"shape": list(mask.shape), "first": int(flat[0]),
            "runs": np.diff(bounds).astype(int).tolist()}


def decode_run_length(d: dict) -> np.ndarray:
    vals = []
    v = bool(d["first"])
    for r in d["runs"]:
        vals.extend([v] * r)
        v = not v
    return np.array(vals, dtype=bool).reshape(d["shape"])


def contacts_json(cs: ContactSets, w: Weight, sol: ObstacleSolution) -> dict:
    vp, vm = contact_volumes(cs, w)
    fp, fm = flux_volumes(sol, w)
    return {"tau": sol.tau, "delta": cs.delta, "fb_cell_count": cs.fb_cell_count,
            "v_plus": vp, "v_minus": vm, "v_plus_flux": fp, "v_minus_flux": fm,
            "m_plus": run_length(cs.m_plus), "m_minus": run_length(cs.m_minus)}


def write_contacts(out_dir, cs: ContactSets, w: Weight, sol: ObstacleSolution,
                   report: StructureReport | None = None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_mask_csv(out / "m_plus.csv", cs.m_plus, cs.grid)
    write_mask_csv(out / "m_minus.csv", cs.m_minus, cs.grid)
    d = contacts_json(cs, w, sol)
    if report is not None:
        d["structure"] = report.to_json()
    (out / "contacts.json").write_text(json.dumps(d, indent=2) + "\n")

