import json
import math

import numpy as np
import pytest

from dbarlab.contact import extract_contact_sets, flux_volumes
from dbarlab.dbar_op import PrecisionError, count_below
from dbarlab.harness import (
    DECAY_COLUMNS, WEYL_COLUMNS, LargeTauReport, ModeCache, RegimeError,
    collect_low_modes, decay_experiment, large_tau_check, outside_mass,
    periodic_distance, ratio_trend_ok, run_weyl, sandwich_volumes, thin_band,
    write_decay, write_weyl,
)
from dbarlab.obstacle import solve_psor
from dbarlab.oracle import oracle_for_weight
from dbarlab.torus_grid import make_grid
from dbarlab.weights import weight_from_catalog


def test_weyl_matches_oracle_on_small_grid(siny32):
    reps = run_weyl(siny32, 0.5, [0.2, 0.125])
    assert [r.status for r in reps] == ["ok", "ok"]
    for r in reps:
        assert r.n_observed == r.n_oracle
        assert not any("oracle" in f for f in r.flags)
        assert r.pred_eroded <= r.pred_dilated


def test_weyl_routes_large_tau(siny32):
    rep = run_weyl(siny32, 2.5, [0.2])
    assert isinstance(rep, LargeTauReport) and rep.counts == (1,)


def test_weyl_precision_status(siny32):
    reps = run_weyl(siny32, 1.8, [0.2, 0.05])
    assert reps[1].status == "precision" and reps[1].n_observed == -1
    assert reps[0].status == "ok"


def test_large_tau_boundary_rejected(siny32):
    with pytest.raises(RegimeError, match="strictly"):
        large_tau_check(siny32, siny32.osc, [0.2])


def test_large_tau_precision_guard(siny32):
    with pytest.raises(PrecisionError):
        large_tau_check(siny32, 2.5, [0.05])


def test_ratio_trend():
    class R:
        def __init__(self, r):
            self.ratio = r
    assert ratio_trend_ok([R(1.5), R(1.2), R(0.9)])
    assert not ratio_trend_ok([R(1.1), R(1.3)])


def test_sandwich_ordering(siny32):
    sol = solve_psor(siny32, 0.5)
    cs = extract_contact_sets(sol, siny32)
    er, di = sandwich_volumes(cs, siny32)
    assert er < di
    # the two masks differ by about one cell ring around the free boundary
    lap_max = np.abs(siny32.lap_phi.values).max()
    assert di - er <= 2.5 * cs.fb_area() * lap_max


@pytest.mark.parametrize("taus, msg", [
    ([0.02, 0.04, 0.08, 0.16], "at least 5"),
    ([0.02, 0.04, 0.08, 0.16, 0.5], "0.2"),
    ([0.02, 0.03, 0.08, 0.1, 0.2], "log-spaced"),
])
def test_thin_band_validates_tau_list(siny32, taus, msg):
    with pytest.raises(ValueError, match=msg):
        thin_band(siny32, taus)


def test_thin_band_drops_under_resolved(siny32):
    rep = thin_band(siny32, np.geomspace(1e-4, 0.4, 5))
    assert rep.dropped and rep.dropped[0] == pytest.approx(1e-4)
    assert all("under-resolved" in f for f in rep.flags if "tau=" in f)
    assert any("2 components" in f for f in rep.flags)
    assert all(d > 0 for d in rep.deficit)


def test_thin_band_predicted_formula(siny32):
    rep = thin_band(siny32, np.geomspace(0.05, 0.4, 5))
    # curve integral 4 pi for sin y, coefficient about 8.231
    assert rep.curve_integral == pytest.approx(4 * np.pi, rel=1e-3)
    for t, p in zip(rep.tau_list, rep.predicted):
        assert p == pytest.approx(8.231 * t ** (2 / 3), rel=1e-3)


def test_periodic_distance_wraps():
    g = make_grid(16, 16)
    mask = np.zeros(g.shape, dtype=bool)
    mask[0, 0] = True
    d = periodic_distance(mask, g)
    assert d[0, 0] == 0
    assert d[0, 15] == pytest.approx(g.dx)
    assert d[15, 15] == pytest.approx(math.hypot(g.dx, g.dy))
    assert d.max() == pytest.approx(math.hypot(8 * g.dx, 8 * g.dy))
    assert np.isinf(periodic_distance(np.zeros(g.shape, bool), g)).all()


def test_outside_mass_bounds(rng):
    g = make_grid(16, 16)
    dist = rng.random(g.shape)
    st = rng.standard_normal((3, *g.shape))
    st /= np.sqrt((st**2).sum(axis=(1, 2)))[:, None, None]
    m1 = outside_mass(st, dist, 0.2)
    m2 = outside_mass(st, dist, 0.6)
    assert np.all((0 <= m2) & (m2 <= m1) & (m1 <= 1 + 1e-12))


def test_decay_small_grid(siny32):
    rep = decay_experiment(siny32, 0.5, [0.2, 0.125], 0.5)
    assert rep.h_list == (0.2, 0.125)
    assert rep.n_states[0] >= 2
    assert all(0 <= m <= 1 for m in rep.max_outside)
    with pytest.raises(RegimeError):
        decay_experiment(siny32, 2.5, [0.2], 0.5)


def test_cache_reuse(siny32):
    cache = ModeCache()
    a = collect_low_modes(siny32, [0.2], 12, cache=cache)[0]
    b = collect_low_modes(siny32, [0.2], 8, cache=cache)[0]
    assert a is b and len(cache) == 1


def test_workers_do_not_change_results(siny32):
    one = collect_low_modes(siny32, [0.2, 0.15], 8, workers=1)
    two = collect_low_modes(siny32, [0.2, 0.15], 8, workers=2)
    for a, b in zip(one, two):
        assert a.h == b.h
        assert np.array_equal(a.svals, b.svals)


def test_deterministic_outputs(siny32, tmp_path):
    for d in ("a", "b"):
        write_weyl(tmp_path / d, run_weyl(siny32, 0.5, [0.2]))
        write_decay(tmp_path / d, decay_experiment(siny32, 0.5, [0.2, 0.15], 0.5))
    for name in ("weyl.csv", "weyl.json", "decay.csv", "decay.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    head = (tmp_path / "a" / "weyl.csv").read_text().splitlines()[0]
    assert head == ",".join(WEYL_COLUMNS)
    assert (tmp_path / "a" / "decay.csv").read_text().splitlines()[0] == ",".join(DECAY_COLUMNS)
    json.loads((tmp_path / "a" / "weyl.json").read_text())


@pytest.mark.slow
@pytest.mark.parametrize("name, params, tau_frac", [
    ("siny", {}, 0.25),
    ("bump", {"amplitude": 3.0}, 0.3),
])
def test_sandwich_window_at_finest_h(name, params, tau_frac, mode_cache):
    w = weight_from_catalog(name, params, make_grid(64, 64))
    tau = tau_frac * w.osc
    h = 0.08
    rep, = run_weyl(w, tau, [h], cache=mode_cache)
    assert rep.status == "ok"
    assert 0.7 <= rep.ratio <= 1.3
    sol = solve_psor(w, tau)
    cs = extract_contact_sets(sol, w)
    lap_max = np.abs(w.lap_phi.values).max()
    gap = rep.pred_dilated - rep.pred_eroded
    assert 0 < gap <= 2.5 * cs.fb_area() * lap_max / (2 * math.pi * h)


def test_small_tau_limit(siny64):
    # tau -> 0: V_+ -> 4 pi, so the prediction approaches 2/h and the count
    # is expected within 2 of it.  The count comes from the oracle with enough
    # modes to cover the threshold, which is exact for sin y.
    h, tau = 0.1, 0.05
    thr = math.exp(-tau / h)
    v_plus, _ = flux_volumes(solve_psor(siny64, tau), siny64)
    assert v_plus / (2 * math.pi * h) == pytest.approx(2 / h, rel=0.1)
    orc = oracle_for_weight(siny64, h, k_max=40)
    assert orc.valid_below > thr
    n = count_below(orc, thr)
    assert abs(n - round(2 / h)) <= 2, f"count {n} at threshold {thr:.3f}"
