"""Experiment campaigns: Weyl counts, large tau, thin band, decay of states.

Every per-h spectral computation is an independent job; with ``workers > 1``
jobs run in a process pool and are merged in input order, so reports do not
depend on the worker count.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .contact import (ContactSets, extract_contact_sets, fd_positive_volume,
                      flux_volumes)
from .dbar_op import (DENSE_CAP, PrecisionError, SpectrumError, SpectrumResult,
                      _spectral_norm, assemble, check_precision, count_below,
                      lowest_singular_triplets, threshold_flag)
from .obstacle import ObstacleError, solve_psor
from .oracle import oracle_for_weight
from .torus_grid import TorusGrid
from .weights import Weight, curve_integral_third_power, extract_zero_curve

THIN_BAND_COEFF = 0.5 * 1.5 ** (2.0 / 3.0)


class RegimeError(ValueError):
    pass


# -- low-lying spectrum jobs ---------------------------------------------

@dataclass(frozen=True, eq=False)
class LowModes:
    """The ``k`` smallest singular values of P with right singular vectors."""
    h: float
    svals: np.ndarray
    vectors: np.ndarray
    norm: float

    @property
    def k(self) -> int:
        return self.svals.size

    def spectrum(self) -> SpectrumResult:
        dim = self.vectors.shape[0]
        valid = math.inf if self.k >= dim else float(self.svals[-1])
        return SpectrumResult(self.h, tuple(self.svals), valid_below=valid, norm=self.norm)


def low_modes(w: Weight, h: float, k: int) -> LowModes:
    m = assemble(w, h)
    if m.dim > DENSE_CAP:
        raise SpectrumError(f"dense cap: dim {m.dim} exceeds {DENSE_CAP}")
    s, v = lowest_singular_triplets(m, k)
    return LowModes(float(h), s, v, _spectral_norm(m.entries))


def weight_key(w: Weight) -> str:
    digest = hashlib.sha1(np.ascontiguousarray(w.phi.values).tobytes()).hexdigest()[:16]
    return f"{w.name}:{w.grid.nx}x{w.grid.ny}:{digest}"


class ModeCache:
    """In-memory cache of ``LowModes`` keyed by weight and h; an entry with
    more modes serves any smaller request."""

    def __init__(self):
        self._store: dict = {}

    def get(self, w: Weight, h: float, k: int) -> LowModes | None:
        hit = self._store.get((weight_key(w), float(h)))
        return hit if hit is not None and hit.k >= min(k, hit.vectors.shape[0]) else None

    def put(self, w: Weight, lm: LowModes) -> None:
        key = (weight_key(w), lm.h)
        old = self._store.get(key)
        if old is None or lm.k > old.k:
            self._store[key] = lm

    def __len__(self):
        return len(self._store)


def _low_modes_job(args):
    w, h, k = args
    return low_modes(w, h, k)


def collect_low_modes(w: Weight, h_list, k: int, workers: int = 1,
                      cache: ModeCache | None = None) -> list[LowModes]:
    """``LowModes`` for every h, computed as independent jobs in input order."""
    todo = [h for h in h_list if cache is None or cache.get(w, h, k) is None]
    jobs = [(w, float(h), k) for h in todo]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            done = list(ex.map(_low_modes_job, jobs))
    else:
        done = [_low_modes_job(j) for j in jobs]
    fresh = dict(zip(todo, done))
    out = []
    for h in h_list:
        lm = fresh.get(h) or cache.get(w, h, k)
        if cache is not None and h in fresh:
            cache.put(w, lm)
        out.append(lm)
    return out


def default_mode_count(w: Weight, tau: float, h: float) -> int:
    """Enough modes to cover the expected count with a wide margin."""
    est = w.grid.cell_area * float(np.maximum(w.lap_phi.values, 0).sum()) / (2 * math.pi * h)
    return int(min(w.grid.size, max(64, 2 * math.ceil(est) + 16)))


# -- Weyl ---------------------------------------------------------------

@dataclass(frozen=True)
class WeylReport:
    h: float
    tau: float
    n_observed: int
    weyl_prediction: float
    ratio: float
    flags: tuple = ()
    status: str = "ok"
    n_oracle: int | None = None
    pred_eroded: float | None = None
    pred_dilated: float | None = None
    weight: str = ""

    def to_json(self) -> dict:
        d = asdict(self)
        d["flags"] = list(self.flags)
        return d


def _periodic_morph(mask: np.ndarray, op) -> np.ndarray:
    st = ndimage.generate_binary_structure(2, 1)
    ny, nx = mask.shape
    big = op(np.tile(mask, (3, 3)), structure=st)
    return big[ny:2 * ny, nx:2 * nx]


def sandwich_volumes(cs: ContactSets, w: Weight) -> tuple[float, float]:
    """Weyl volumes of the one-cell erosion and dilation of M_+."""
    lap = w.lap_phi.values
    da = w.grid.cell_area
    er = _periodic_morph(cs.m_plus, ndimage.binary_erosion)
    di = _periodic_morph(cs.m_plus, ndimage.binary_dilation)
    return float(lap[er].sum() * da), float(lap[di].sum() * da)


def run_weyl(w: Weight, tau: float, h_list, grid: TorusGrid | None = None,
             workers: int = 1, cache: ModeCache | None = None,
             use_oracle: bool = True, n_modes: int | None = None):
    """Observed count against V_+(psi)/(2 pi h) for each h.

    psi does not depend on h and is solved once.  For tau at or above the
    oscillation the request is handed to ``large_tau_check``.
    """
    if grid is not None and grid != w.grid:
        raise ValueError("weight lives on a different grid")
    if tau >= w.osc:
        return large_tau_check(w, tau, h_list, workers=workers, cache=cache)
    sol = solve_psor(w, tau)
    cs = extract_contact_sets(sol, w)
    v_plus, _ = flux_volumes(sol, w)
    v_er, v_di = sandwich_volumes(cs, w)
    oracle_ok = use_oracle and w.depends_on_y_only

    ok_h, reports = [], {}
    for h in h_list:
        try:
            check_precision(tau, h)
            ok_h.append(h)
        except PrecisionError as exc:
            reports[h] = WeylReport(h, tau, -1, v_plus / (2 * math.pi * h), math.nan,
                                    (str(exc),), "precision", weight=w.name)
    k = n_modes or max(default_mode_count(w, tau, h) for h in ok_h) if ok_h else 0
    modes = collect_low_modes(w, ok_h, k, workers, cache) if ok_h else []
    for h, lm in zip(ok_h, modes):
        thr = math.exp(-tau / h)
        s = lm.spectrum()
        pred = v_plus / (2 * math.pi * h)
        try:
            n = count_below(s, thr)
            flag = threshold_flag(s, thr)
        except SpectrumError as exc:
            reports[h] = WeylReport(h, tau, -1, pred, math.nan, (str(exc),), "spectrum",
                                    weight=w.name)
            continue
        flags = (flag,) if flag else ()
        n_or = None
        if oracle_ok:
            n_or = count_below(oracle_for_weight(w, h), thr)
            if n_or != n:
                flags += (f"oracle count {n_or} != {n}",)
        reports[h] = WeylReport(h, tau, n, pred, n / pred, flags, "ok", n_or,
                                v_er / (2 * math.pi * h), v_di / (2 * math.pi * h), w.name)
    return [reports[h] for h in h_list]


def ratio_trend_ok(reports) -> bool:
    """|ratio - 1| non-increasing along the h-list."""
    d = [abs(r.ratio - 1) for r in reports]
    return all(b <= a for a, b in zip(d, d[1:]))


# -- large tau ------------------------------------------------------------

@dataclass(frozen=True)
class LargeTauReport:
    weight: str
    tau: float
    osc: float
    h_list: tuple
    counts: tuple
    second_svals: tuple
    thresholds: tuple
    flags: tuple = ()

    @property
    def passed(self) -> bool:
        return all(c == 1 for c in self.counts)

    def to_json(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        for key in ("h_list", "counts", "second_svals", "thresholds", "flags"):
            d[key] = list(d[key])
        return d


def large_tau_check(w: Weight, tau: float, h_list, workers: int = 1,
                    cache: ModeCache | None = None, n_modes: int = 8) -> LargeTauReport:
    if not tau > w.osc:
        raise RegimeError(f"large-tau check needs tau > osc = {w.osc:.6g} strictly "
                          f"(got tau = {tau})")
    for h in h_list:
        check_precision(tau, h)
    modes = collect_low_modes(w, list(h_list), n_modes, workers, cache)
    counts, second, thrs, flags = [], [], [], []
    for h, lm in zip(h_list, modes):
        thr = math.exp(-tau / h)
        s = lm.spectrum()
        counts.append(count_below(s, thr))
        f = threshold_flag(s, thr)
        if f:
            flags.append(f)
        second.append(float(lm.svals[1]))
        thrs.append(thr)
    return LargeTauReport(w.name, float(tau), float(w.osc), tuple(float(h) for h in h_list),
                          tuple(counts), tuple(second), tuple(thrs), tuple(flags))


# -- thin band ------------------------------------------------------------

@dataclass(frozen=True)
class ThinBandReport:
    tau_list: tuple
    deficit: tuple
    predicted: tuple
    fitted_exponent: float
    fitted_coeff_ratio: float
    curve_integral: float
    half_width: tuple = ()
    half_width_predicted: tuple = ()
    dropped: tuple = ()
    flags: tuple = ()
    weight: str = ""

    def to_json(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d


def band_half_width(cs: ContactSets, curve_length: float) -> float:
    """Band area over twice the length of the zero curve of lap phi."""
    return float(cs.band.sum() * cs.grid.cell_area / (2.0 * curve_length))


def _check_tau_list(tau_list, osc):
    t = np.asarray(tau_list, dtype=float)
    if t.size < 5:
        raise ValueError("thin band needs at least 5 values of tau")
    if np.any(t <= 0) or np.any(t > 0.2 * osc * (1 + 1e-12)):
        raise ValueError(f"tau values must lie in (0, 0.2*osc] = (0, {0.2 * osc:.6g}]")
    steps = np.diff(np.log(np.sort(t)))
    if np.any(steps <= 0) or steps.max() > 1.05 * steps.min():
        raise ValueError("tau values must be log-spaced")
    return t


def thin_band(w: Weight, tau_list, grid: TorusGrid | None = None) -> ThinBandReport:
    if grid is not None and grid != w.grid:
        raise ValueError("weight lives on a different grid")
    taus = _check_tau_list(tau_list, w.osc)
    curve = extract_zero_curve(w)
    integral = curve_integral_third_power(curve)
    length = curve.total_length()
    dn = np.concatenate(curve.dn_mid)
    arcs = np.concatenate(curve.arclength)
    vol = fd_positive_volume(w)
    spacing = max(w.grid.dx, w.grid.dy)
    kept, deficits, preds, hw, hw_pred, dropped, flags = [], [], [], [], [], [], []
    if curve.n_components > 1:
        flags.append(f"zero curve has {curve.n_components} components; curve integral "
                     "summed over components (extension beyond the connected case)")
    for tau in taus:
        pred_hw = float(np.sum(arcs * (1.5 * tau / dn) ** (1 / 3)) / arcs.sum())
        sol = solve_psor(w, float(tau))
        cs = extract_contact_sets(sol, w)
        if pred_hw < 2 * spacing or not cs.band.any():
            dropped.append(float(tau))
            flags.append(f"tau={tau:.4g}: band under-resolved (half-width "
                         f"{pred_hw:.3g} vs grid {spacing:.3g}); dropped")
            continue
        v_plus, _ = flux_volumes(sol, w)
        kept.append(float(tau))
        deficits.append(vol - v_plus)
        preds.append(float(THIN_BAND_COEFF * integral * tau ** (2 / 3)))
        hw.append(band_half_width(cs, length))
        hw_pred.append(pred_hw)
    if len(kept) < 2:
        raise ObstacleError("fewer than two resolved tau values; refine the grid")
    d = np.asarray(deficits)
    if np.any(d <= 0):
        flags.append("non-positive volume deficit")
    exponent = float(np.polyfit(np.log(kept), np.log(np.abs(d)), 1)[0])
    ratio = float(np.exp(np.mean(np.log(np.abs(d) / np.asarray(preds)))))
    return ThinBandReport(tuple(kept), tuple(deficits), tuple(preds), exponent, ratio,
                          integral, tuple(hw), tuple(hw_pred), tuple(dropped),
                          tuple(flags), w.name)


# -- decay of singular states ---------------------------------------------

def periodic_distance(mask: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """Euclidean distance on the torus from every node to the nearest node of
    ``mask``."""
    if not mask.any():
        return np.full(mask.shape, np.inf)
    ny, nx = mask.shape
    big = ndimage.distance_transform_edt(np.tile(~mask, (3, 3)),
                                         sampling=(grid.dy, grid.dx))
    return big[ny:2 * ny, nx:2 * nx]


def outside_mass(states: np.ndarray, dist: np.ndarray, radius: float) -> np.ndarray:
    """l2 mass of each (normalized) state outside the radius neighbourhood."""
    outside = dist > radius
    return (np.abs(states) ** 2 * outside[None]).sum(axis=(1, 2))


@dataclass(frozen=True)
class DecayReport:
    tau: float
    radius: float
    h_list: tuple
    n_states: tuple
    max_outside: tuple
    slope: float
    slope_doubled: float
    flags: tuple = ()
    weight: str = ""

    @property
    def decaying(self) -> bool:
        return self.slope <= -0.1

    @property
    def monotone_in_radius(self) -> bool:
        return abs(self.slope_doubled) >= abs(self.slope)

    def to_json(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        d["decaying"] = self.decaying
        d["monotone_in_radius"] = self.monotone_in_radius
        return d


def _fit_slope(h, m):
    h = np.asarray(h, float)
    m = np.asarray(m, float)
    if h.size < 2:
        return math.nan
    return float(np.polyfit(1.0 / h, np.log(m), 1)[0])


def decay_experiment(w: Weight, tau: float, h_list, neighborhood_radius: float,
                     workers: int = 1, cache: ModeCache | None = None,
                     n_modes: int | None = None) -> DecayReport:
    """Tail mass of the singular states below threshold away from M_+(psi).

    State 0 is the kernel exp(-phi/h), which concentrates at the minimum of
    phi rather than on M_+(psi), and is left out of the fit.
    """
    if not tau < w.osc:
        raise RegimeError("decay experiment needs tau < osc")
    for h in h_list:
        check_precision(tau, h)
    sol = solve_psor(w, tau)
    cs = extract_contact_sets(sol, w)
    dist = periodic_distance(cs.m_plus, w.grid)
    k = n_modes or max(default_mode_count(w, tau, h) for h in h_list)
    modes = collect_low_modes(w, list(h_list), k, workers, cache)
    kept, counts, worst, worst2, flags = [], [], [], [], []
    shape = w.grid.shape
    for h, lm in zip(h_list, modes):
        thr = math.exp(-tau / h)
        n = count_below(lm.spectrum(), thr)
        counts.append(n)
        if n < 2:
            flags.append(f"h={h}: no non-kernel states below threshold; skipped")
            continue
        states = lm.vectors[:, 1:n].T.reshape(n - 1, *shape)
        states = states / np.sqrt((np.abs(states) ** 2).sum(axis=(1, 2)))[:, None, None]
        kept.append(float(h))
        worst.append(float(outside_mass(states, dist, neighborhood_radius).max()))
        worst2.append(float(outside_mass(states, dist, 2 * neighborhood_radius).max()))
    return DecayReport(float(tau), float(neighborhood_radius), tuple(kept), tuple(counts),
                       tuple(worst), _fit_slope(kept, worst), _fit_slope(kept, worst2),
                       tuple(flags), w.name)


# -- outputs ------------------------------------------------------------

WEYL_COLUMNS = ("weight", "h", "tau", "n_observed", "weyl_prediction", "ratio",
                "n_oracle", "pred_eroded", "pred_dilated", "status", "flags")
THIN_BAND_COLUMNS = ("weight", "tau", "deficit", "predicted", "ratio", "half_width",
                     "half_width_predicted")
DECAY_COLUMNS = ("weight", "h", "tau", "radius", "n_states", "max_outside_mass")
LARGE_TAU_COLUMNS = ("weight", "h", "tau", "threshold", "n_observed", "second_sval")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return "; ".join(str(x) for x in v)
    return str(v)


def write_csv(path, columns, rows) -> None:
    with Path(path).open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(columns)
        for r in rows:
            wr.writerow([_fmt(r.get(c)) for c in columns])


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=float) + "\n")


def write_weyl(out_dir, reports) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "weyl.json", [r.to_json() for r in reports])
    write_csv(out / "weyl.csv", WEYL_COLUMNS, [r.to_json() for r in reports])


def write_large_tau(out_dir, rep: LargeTauReport) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "large_tau.json", rep.to_json())
    rows = [{"weight": rep.weight, "h": h, "tau": rep.tau, "threshold": t,
             "n_observed": n, "second_sval": s}
            for h, t, n, s in zip(rep.h_list, rep.thresholds, rep.counts, rep.second_svals)]
    write_csv(out / "large_tau.csv", LARGE_TAU_COLUMNS, rows)


def write_thin_band(out_dir, rep: ThinBandReport) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "thin_band.json", rep.to_json())
    rows = [{"weight": rep.weight, "tau": t, "deficit": d, "predicted": p, "ratio": d / p,
             "half_width": hw, "half_width_predicted": hp}
            for t, d, p, hw, hp in zip(rep.tau_list, rep.deficit, rep.predicted,
                                       rep.half_width, rep.half_width_predicted)]
    write_csv(out / "thin_band.csv", THIN_BAND_COLUMNS, rows)


def write_decay(out_dir, rep: DecayReport) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "decay.json", rep.to_json())
    n_by_h = dict(zip(rep.h_list, [c for c in rep.n_states if c >= 2]))
    rows = [{"weight": rep.weight, "h": h, "tau": rep.tau, "radius": rep.radius,
             "n_states": n_by_h.get(h), "max_outside_mass": m}
            for h, m in zip(rep.h_list, rep.max_outside)]
    write_csv(out / "decay.csv", DECAY_COLUMNS, rows)
