"""Acceptance suite: one test per criterion, each prints a PASS/FAIL line.

Spectra at 64x64 are shared through the session ``mode_cache`` so the Weyl,
oracle and decay criteria reuse the same singular triplets.
"""
import math
import time
from dataclasses import replace

import numpy as np
import pytest

from dbarlab.contact import (balance_bound, extract_contact_sets, flux_volumes,
                             refinement_study)
from dbarlab.dbar_op import assemble, singular_values
from dbarlab.harness import decay_experiment, large_tau_check, ratio_trend_ok, run_weyl, thin_band
from dbarlab.obstacle import default_penalty, solve_penalized, solve_psor
from dbarlab.torus_grid import ComplexField, make_grid
from dbarlab.weights import weight_from_catalog

pytestmark = pytest.mark.acceptance


def verdict(capsys, label, ok, detail):
    with capsys.disabled():
        print(f"\n{label}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def siny(n):
    return weight_from_catalog("siny", {}, make_grid(n, n))


def bump(n):
    return weight_from_catalog("bump", {}, make_grid(n, n))


def test_ac01_flat_spectrum(capsys):
    t0 = time.perf_counter()
    g = make_grid(16, 16)
    w = weight_from_catalog("siny", {}, g)
    w = replace(w, dbar_phi=ComplexField(g, np.zeros(g.shape)))
    h = 0.1
    s = singular_values(assemble(w, h)).array
    k = np.fft.fftfreq(16, 1 / 16)
    K, L = np.meshgrid(k, k)
    ref = np.sort((h / 2) * np.hypot(K, L).ravel())
    nz = ref > 0
    rel = float(np.max(np.abs(s[nz] - ref[nz]) / ref[nz]))
    zero = float(np.abs(s[~nz]).max())
    dt = time.perf_counter() - t0
    ok = rel <= 1e-10 and zero <= 1e-10 * h and dt < 5
    verdict(capsys, "AC1 flat spectrum", ok, f"max rel err {rel:.2e}, zero mode {zero:.1e}, {dt:.2f}s")


def test_ac02_large_tau_single_value(capsys, siny64, mode_cache):
    t0 = time.perf_counter()
    rep = large_tau_check(siny64, 2.5, [0.2, 0.15, 0.12], cache=mode_cache)
    dt = time.perf_counter() - t0
    ok = rep.counts == (1, 1, 1) and dt < 180
    verdict(capsys, "AC2 large tau", ok, f"counts {rep.counts}, {dt:.1f}s")


def test_ac03_critical_case(capsys, siny64, bump64):
    errs = {}
    for w in (siny64, bump64):
        sol = solve_psor(w, w.osc, tol=1e-10)
        errs[w.name] = (float(np.abs(sol.psi.values - w.phi.values.min()).max()), sol.tol)
    ok = all(e <= 10 * tol for e, tol in errs.values())
    verdict(capsys, "AC3 critical case", ok,
            ", ".join(f"{k} {e:.1e}" for k, (e, _) in errs.items()))


def test_ac04_solver_agreement(capsys, siny64):
    eps = 0.02
    a = solve_psor(siny64, 0.5)
    b = solve_penalized(siny64, 0.5, default_penalty(siny64))
    d = float(np.abs(a.psi.values - b.psi.values).max())
    bound = max(1e-3, 10 * eps * float(np.abs(siny64.lap_phi.values).max()))
    verdict(capsys, "AC4 PSOR vs penalized", d <= bound, f"sup dist {d:.2e} <= {bound:.2e}")


def test_ac05_balance_identity(capsys, siny64, bump64):
    worst = -math.inf
    cases = [(siny64, t) for t in (0.3, 0.5, 1.0, 1.9)] + \
            [(bump64, f * bump64.osc) for f in (0.3, 0.6)]
    for w, tau in cases:
        for sol in (solve_psor(w, tau), solve_penalized(w, tau)):
            cs = extract_contact_sets(sol, w)
            vp, vm = flux_volumes(sol, w)
            worst = max(worst, abs(vp + vm) - balance_bound(cs, w))
    verdict(capsys, "AC5 balance identity", worst <= 0,
            f"worst |V+ + V-| - bound = {worst:.2e} over {2 * len(cases)} solutions")


def test_ac06_structure(capsys):
    lines, ok = [], True
    for name, factory, taus in (("siny", siny, (0.3, 0.5, 1.0, 1.9)),
                                ("bump", bump, (0.3, 0.6))):
        for t in taus:
            tau_of = (lambda w, t=t: t) if name == "siny" else (lambda w, t=t: t * w.osc)
            rep = refinement_study(factory, tau_of)
            ok &= rep.passed
            lines.append(f"{name} {t}: fb ratios "
                         + "/".join(f"{r:.2f}" for r in rep.fb_ratios)
                         + (" ok" if rep.passed else " FAILED"))
    verdict(capsys, "AC6 structure", ok, "; ".join(lines))


def test_ac07_weyl(capsys, siny64, mode_cache):
    t0 = time.perf_counter()
    reps = run_weyl(siny64, 0.5, [0.2, 0.125, 0.08], cache=mode_cache)
    dt = time.perf_counter() - t0
    final = reps[-1].ratio
    oracle = all(r.n_observed == r.n_oracle for r in reps)
    ok = (all(r.status == "ok" for r in reps) and 0.7 <= final <= 1.3
          and ratio_trend_ok(reps) and oracle and dt < 600)
    detail = ", ".join(f"h={r.h}: N={r.n_observed} ratio {r.ratio:.3f}" for r in reps)
    verdict(capsys, "AC7 Weyl", ok, f"{detail}; oracle equal {oracle}; {dt:.0f}s")


def test_ac08_thin_band(capsys):
    t0 = time.perf_counter()
    ws = siny(128)
    rs = thin_band(ws, np.geomspace(0.02, 0.2, 6))
    wb = bump(128)
    rb = thin_band(wb, np.geomspace(0.01, 0.2, 6) * wb.osc)
    dt = time.perf_counter() - t0
    ok = (abs(rs.fitted_exponent - 2 / 3) <= 0.05 and 0.85 <= rs.fitted_coeff_ratio <= 1.15
          and abs(rb.fitted_exponent - 2 / 3) <= 0.05 and 0.8 <= rb.fitted_coeff_ratio <= 1.2
          and len(rs.tau_list) >= 5 and len(rb.tau_list) >= 5 and dt < 900)
    verdict(capsys, "AC8 thin band", ok,
            f"siny exp {rs.fitted_exponent:.4f} ratio {rs.fitted_coeff_ratio:.3f}; "
            f"bump exp {rb.fitted_exponent:.4f} ratio {rb.fitted_coeff_ratio:.3f}; {dt:.0f}s")


def test_ac09_decay(capsys, siny64, mode_cache):
    rep = decay_experiment(siny64, 0.5, [0.2, 0.125, 0.1, 0.08], 0.5, cache=mode_cache)
    ok = rep.slope <= -0.1 and len(rep.h_list) == 4
    masses = ", ".join(f"{m:.3f}" for m in rep.max_outside)
    verdict(capsys, "AC9 decay", ok, f"slope {rep.slope:.3f} (max outside mass {masses})")


def test_ac10_c11_proxy(capsys):
    rep = refinement_study(siny, lambda w: 0.5)
    d2 = rep.max_second_difference
    growth = [b / a for a, b in zip(d2, d2[1:])]
    ok = all(g <= 1.2 for g in growth)
    verdict(capsys, "AC10 C^{1,1} proxy", ok,
            "max d2 " + ", ".join(f"{v:.4f}" for v in d2)
            + "; growth " + ", ".join(f"{g:.4f}" for g in growth))
