"""``dbarlab`` command line.

Exit status: 0 on success, 2 when a run completes but its check fails,
1 on errors such as a bad config key or a precision refusal.
"""
from __future__ import annotations

import argparse
import json
import math
import platform
import sys
import time
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import harness as H
from .config import (KNOWN_KEYS, OUTPUT_ENV, TASKS, ConfigError, RunConfig,
                     apply_pairs, check_complete, load_config, parse_set)
from .contact import assert_structure, extract_contact_sets, write_contacts
from .dbar_op import (DENSE_CAP, MAX_TAU_OVER_H, PrecisionError, SpectrumError,
                      assemble, check_precision, count_below, singular_values,
                      threshold_flag, write_spectrum_csv, write_spectrum_json)
from .obstacle import (ObstacleError, default_penalty, solve_penalized, solve_psor)
from .oracle import (OracleError, lift_to_grid, oracle_for_weight, oracle_obstacle_1d,
                     solve_obstacle_1d, write_obstacle_1d_csv, y_profile)
from .torus_grid import GridError, make_grid, write_field_csv
from .weights import WeightError, weight_from_catalog

EXIT_OK, EXIT_ERROR, EXIT_CHECK = 0, 1, 2
SPECTRAL_TASKS = ("spectrum", "weyl", "large-tau", "decay", "oracle-compare")


# -- helpers --------------------------------------------------------------

def build_weight(cfg: RunConfig):
    return weight_from_catalog(cfg.weight.name, cfg.weight.params, make_grid(cfg.nx, cfg.ny))


def resolve_tau(cfg: RunConfig, osc: float) -> float | None:
    if cfg.tau is None:
        return None
    return cfg.tau * osc if cfg.tau_scale == "osc" else cfg.tau


def resolve_tau_list(cfg: RunConfig, osc: float) -> tuple:
    s = osc if cfg.tau_scale == "osc" else 1.0
    return tuple(t * s for t in cfg.tau_list)


def solve(cfg: RunConfig, w, tau: float):
    if cfg.method == "penalized":
        pp = default_penalty(w)
        pp = replace(pp, epsilon=cfg.eps_min,
                     schedule=tuple(e for e in pp.schedule if e > cfg.eps_min) + (cfg.eps_min,))
        return solve_penalized(w, tau, pp, tol=min(cfg.tol * 10, 1e-9))
    return solve_psor(w, tau, omega=cfg.omega, tol=cfg.tol)


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# -- tasks: each writes artifacts into ``out`` and returns (summary, ok) ----

def task_obstacle(cfg, w, out):
    tau = resolve_tau(cfg, w.osc)
    sol = solve(cfg, w, tau)
    write_field_csv(out / "psi.csv", sol.psi.values, w.grid)
    _dump(out / "obstacle.json", sol.sidecar())
    return sol.sidecar(), True


def task_contacts(cfg, w, out):
    tau = resolve_tau(cfg, w.osc)
    sol = solve(cfg, w, tau)
    cs = extract_contact_sets(sol, w)
    rep = assert_structure(cs, w)
    write_contacts(out, cs, w, sol, rep)
    return {"tau": tau, "fb_cell_count": cs.fb_cell_count, "structure": rep.passed}, rep.passed


def task_spectrum(cfg, w, out):
    tau = resolve_tau(cfg, w.osc)
    summary = []
    for h in cfg.h_list:
        if tau is not None:
            check_precision(tau, h)
        m = assemble(w, h)
        s = singular_values(m, n_lowest=cfg.n_modes)
        if tau is not None:
            s = s.with_count(math.exp(-tau / h))
        tag = f"h{h:g}"
        write_spectrum_json(out / f"spectrum_{tag}.json", s)
        write_spectrum_csv(out / f"spectrum_{tag}.csv", s)
        summary.append({"h": h, "n_svals": len(s.svals),
                        "counts": {repr(k): v for k, v in s.n_below.items()}})
    return summary, True


def task_weyl(cfg, w, out):
    tau = resolve_tau(cfg, w.osc)
    res = H.run_weyl(w, tau, list(cfg.h_list), workers=cfg.workers, n_modes=cfg.n_modes)
    if isinstance(res, H.LargeTauReport):
        H.write_large_tau(out, res)
        return res.to_json(), res.passed
    H.write_weyl(out, res)
    ok = all(r.status == "ok" for r in res)
    return [{"h": r.h, "n": r.n_observed, "ratio": r.ratio} for r in res], ok


def task_large_tau(cfg, w, out):
    tau = resolve_tau(cfg, w.osc)
    rep = H.large_tau_check(w, tau, list(cfg.h_list), workers=cfg.workers)
    H.write_large_tau(out, rep)
    return {"counts": list(rep.counts), "passed": rep.passed}, rep.passed


def task_thin_band(cfg, w, out):
    rep = H.thin_band(w, resolve_tau_list(cfg, w.osc))
    H.write_thin_band(out, rep)
    return {"fitted_exponent": rep.fitted_exponent,
            "fitted_coeff_ratio": rep.fitted_coeff_ratio}, True


def task_decay(cfg, w, out):
    tau = resolve_tau(cfg, w.osc)
    rep = H.decay_experiment(w, tau, list(cfg.h_list), cfg.radius,
                             workers=cfg.workers, n_modes=cfg.n_modes)
    H.write_decay(out, rep)
    return {"slope": rep.slope, "decaying": rep.decaying}, rep.decaying


def task_oracle_compare(cfg, w, out, n_compare: int = 50):
    tau = resolve_tau(cfg, w.osc)
    prof = y_profile(w)
    fine = oracle_obstacle_1d(prof, tau)
    write_obstacle_1d_csv(out / "psi_1d.csv", fine)
    sol = solve(cfg, w, tau)
    matched = lift_to_grid(solve_obstacle_1d(prof, tau), w.grid)
    dist_matched = float(np.abs(sol.psi.values - matched).max())
    dist_fine = float(np.abs(sol.psi.values - lift_to_grid(fine, w.grid)).max())
    ok = dist_matched <= 1e-4
    k = max(n_compare, cfg.n_modes or H.default_mode_count(w, tau, min(cfg.h_list)))
    modes = H.collect_low_modes(w, list(cfg.h_list), k, cfg.workers)
    rows = []
    for h, lm in zip(cfg.h_list, modes):
        thr = math.exp(-tau / h)
        s2 = lm.spectrum()
        so = oracle_for_weight(w, h)
        a = s2.array[:n_compare]
        b = so.array[:n_compare]
        # relative agreement, with an absolute floor for values at round-off level
        floor = 1e-12 * s2.norm
        diff = np.abs(a - b)
        above = np.abs(b) > floor
        rel = float(np.max(diff[above] / np.abs(b[above]), initial=0.0))
        close = bool(np.all(diff <= np.maximum(1e-8 * np.abs(b), floor)))
        n2, no = count_below(s2, thr), count_below(so, thr)
        same = n2 == no and close
        ok &= same
        rows.append({"h": h, "n_2d": n2, "n_oracle": no, "max_rel_diff": rel,
                     "max_abs_diff": float(diff.max()), "abs_floor": floor,
                     "flag": threshold_flag(s2, thr), "agree": same})
    report = {"tau": tau, "psi_sup_distance_matched": dist_matched,
              "psi_sup_distance_fine": dist_fine, "rows": rows,
              "n_compare": n_compare}
    _dump(out / "oracle_compare.json", report)
    return report, ok


TASK_FUNCS = {
    "obstacle": task_obstacle, "contacts": task_contacts, "spectrum": task_spectrum,
    "weyl": task_weyl, "thin-band": task_thin_band, "large-tau": task_large_tau,
    "decay": task_decay, "oracle-compare": task_oracle_compare,
}


def run(cfg: RunConfig) -> int:
    """Execute one task; artifacts go to ``<output_dir>/<task>``."""
    check_complete(cfg)
    w = build_weight(cfg)
    tau = resolve_tau(cfg, w.osc)
    if tau is not None and cfg.task in SPECTRAL_TASKS:
        for h in cfg.h_list:
            check_precision(tau, h)
    out = cfg.out_dir() / cfg.task
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    summary, ok = TASK_FUNCS[cfg.task](cfg, w, out)
    elapsed = time.perf_counter() - t0
    manifest = {
        "config": cfg.echo(),
        "versions": {"dbarlab": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "timings": {"total_seconds": elapsed},
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "weight": {"name": w.name, "osc": w.osc},
        "summary": summary,
        "passed": bool(ok),
    }
    _dump(out / "manifest.json", json.loads(json.dumps(manifest, default=_json_default)))
    print(json.dumps({"task": cfg.task, "output": str(out), "passed": bool(ok)}))
    return EXIT_OK if ok else EXIT_CHECK


def _json_default(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.bool_):
        return bool(v)
    return str(v)


# -- validate ---------------------------------------------------------------

def validate(cfg: RunConfig) -> list[str]:
    """Dry-run diagnostics; never raises for content problems."""
    msgs = []
    try:
        check_complete(cfg)
    except ConfigError as exc:
        return [f"config: {exc}"]
    try:
        w = build_weight(cfg)
    except (WeightError, GridError) as exc:
        return [f"weight: {exc}"]
    tau = resolve_tau(cfg, w.osc)
    dim = cfg.nx * cfg.ny
    spectral = cfg.task in SPECTRAL_TASKS
    if spectral and dim > DENSE_CAP:
        msgs.append(f"dense cap: grid {cfg.nx}x{cfg.ny} gives dim {dim} > {DENSE_CAP}")
    if tau is not None and spectral:
        for h in cfg.h_list:
            try:
                check_precision(tau, h)
            except PrecisionError as exc:
                msgs.append(str(exc))
    if tau is not None:
        if cfg.task == "weyl" and tau >= w.osc:
            msgs.append(f"route: tau >= osc = {w.osc:.6g}, weyl runs as large-tau")
        if cfg.task == "large-tau" and not tau > w.osc:
            msgs.append(f"regime: large-tau needs tau > osc = {w.osc:.6g}")
        if cfg.task in ("obstacle", "contacts", "decay", "oracle-compare") and tau > w.osc:
            msgs.append(f"regime: tau > osc = {w.osc:.6g} is the non-uniqueness regime")
    n_jobs = len(cfg.h_list) if spectral else max(1, len(cfg.tau_list))
    per_job = 4 * 16 * dim * dim if spectral else 64 * dim
    peak = per_job * min(cfg.workers, n_jobs)
    msgs.append(f"plan: {n_jobs} jobs, est. memory {peak / 2**20:.1f} MiB "
                f"({cfg.workers} worker(s), task {cfg.task}, weight {w.name}, "
                f"osc {w.osc:.6g})")
    return msgs


# -- argument parsing ---------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help=f"override a config key (known keys: {', '.join(KNOWN_KEYS)})")
    p.add_argument("--weight", help="catalog weight: siny, bump, custom-poisson")
    p.add_argument("--nx", type=int)
    p.add_argument("--ny", type=int)
    p.add_argument("--tau", type=float)
    p.add_argument("--tau-scale", choices=("abs", "osc"),
                   help="'osc' reads tau values as multiples of osc(phi)")
    p.add_argument("--h", dest="h_list", help="comma-separated list of h")
    p.add_argument("--tau-list", help="comma-separated list of tau")
    p.add_argument("--radius", type=float)
    p.add_argument("--method", choices=("psor", "penalized"))
    p.add_argument("--n-modes", type=int, help="number of lowest singular values")
    p.add_argument("--workers", type=int)
    p.add_argument("--output-dir", help=f"output root (default: ${OUTPUT_ENV} or ./runs)")


_FLAG_KEYS = {"weight": "weight.name", "nx": "grid.nx", "ny": "grid.ny", "tau": "tau",
              "tau_scale": "tau.scale", "h_list": "h_list", "tau_list": "tau_list",
              "radius": "radius", "method": "solver.method", "n_modes": "n_modes",
              "workers": "workers", "output_dir": "output_dir"}


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dbarlab",
        description="Exponentially small singular values of h dbar + dbar(phi) on the "
                    "torus and the double obstacle problem behind their count. "
                    f"Counts below exp(-tau/h) are refused when tau/h > {MAX_TAU_OVER_H:g} "
                    "(double precision floor).")
    sub = parser.add_subparsers(dest="command", required=True)
    for t in TASKS:
        _common(sub.add_parser(t, help=f"run the {t} task"))
    v = sub.add_parser("validate", help="dry run: check caps, precision and regime")
    _common(v)
    v.add_argument("--task", choices=TASKS, help="task to validate (default: config's)")
    return parser


def config_from_args(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        cfg = load_config(args.config, cfg)
    pairs = []
    for attr, key in _FLAG_KEYS.items():
        val = getattr(args, attr, None)
        if val is not None:
            pairs.append((key, str(val), ""))
    cfg = apply_pairs(cfg, pairs, "flag")
    cfg = apply_pairs(cfg, parse_set(args.set), "--set")
    task = args.command if args.command != "validate" else (args.task or cfg.task)
    return replace(cfg, task=task)


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        if args.command == "validate":
            for m in validate(cfg):
                print(m)
            return EXIT_OK
        return run(cfg)
    except (ConfigError, PrecisionError, SpectrumError, ObstacleError, OracleError,
            WeightError, GridError, H.RegimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
