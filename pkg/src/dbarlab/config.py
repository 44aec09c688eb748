"""Run configuration: a flat ``key = value`` file with dotted keys.

Example::

    task = weyl
    weight.name = siny
    grid.nx = 64
    grid.ny = 64
    tau = 0.5
    h_list = 0.2, 0.125, 0.08

Keys starting with ``weight.`` other than ``weight.name`` are weight
parameters.  Lines may carry ``#`` comments.
"""
from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

TASKS = ("obstacle", "contacts", "spectrum", "weyl", "thin-band", "large-tau",
         "decay", "oracle-compare")
OUTPUT_ENV = "DBARLAB_OUTPUT_DIR"


class ConfigError(ValueError):
    pass


def _floats(text: str) -> tuple:
    return tuple(float(t) for t in text.replace(";", ",").split(",") if t.strip())


@dataclass(frozen=True)
class WeightSpec:
    name: str = "siny"
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class RunConfig:
    task: str = ""
    weight: WeightSpec = field(default_factory=WeightSpec)
    nx: int = 64
    ny: int = 64
    tau: float | None = None
    tau_scale: str = "abs"  # "abs" or "osc": tau values are multiples of osc
    h_list: tuple = ()
    tau_list: tuple = ()
    radius: float = 0.5
    method: str = "psor"
    tol: float = 1e-10
    omega: float = 1.8
    eps_min: float = 0.02
    n_modes: int | None = None
    output_dir: str = ""
    workers: int = 1

    def out_dir(self) -> Path:
        base = self.output_dir or os.environ.get(OUTPUT_ENV) or "runs"
        return Path(base)

    def echo(self) -> dict:
        d = asdict(self)
        d["h_list"] = list(self.h_list)
        d["tau_list"] = list(self.tau_list)
        return d


# key -> (RunConfig field, converter)
_SCALARS = {
    "task": ("task", str),
    "grid.nx": ("nx", int),
    "grid.ny": ("ny", int),
    "tau": ("tau", float),
    "tau.scale": ("tau_scale", str),
    "h": ("h_list", _floats),
    "h_list": ("h_list", _floats),
    "tau_list": ("tau_list", _floats),
    "radius": ("radius", float),
    "solver.method": ("method", str),
    "solver.tol": ("tol", float),
    "solver.omega": ("omega", float),
    "solver.eps_min": ("eps_min", float),
    "n_modes": ("n_modes", int),
    "output_dir": ("output_dir", str),
    "workers": ("workers", int),
}
KNOWN_KEYS = tuple(_SCALARS) + ("weight.name", "weight.<param>")


def _weight_value(text: str):
    try:
        return float(text)
    except ValueError:
        return text


def apply_pairs(cfg: RunConfig, pairs, source: str = "--set") -> RunConfig:
    """Apply ``(key, value, location)`` triples to ``cfg``."""
    updates = {}
    wname = cfg.weight.name
    wparams = dict(cfg.weight.params)
    for key, value, where in pairs:
        key = key.strip()
        value = value.strip()
        if key == "weight.name":
            wname = value
        elif key.startswith("weight."):
            wparams[key[len("weight."):]] = _weight_value(value)
        elif key in _SCALARS:
            name, conv = _SCALARS[key]
            try:
                updates[name] = conv(value)
            except ValueError as exc:
                raise ConfigError(f"{source}{where}: bad value for key '{key}': "
                                  f"{value!r} ({exc})") from None
        else:
            raise ConfigError(f"{source}{where}: unknown key '{key}'")
    return replace(cfg, weight=WeightSpec(wname, wparams), **updates)


def parse_pairs(lines, source: str):
    out = []
    for i, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{i}: expected 'key = value', got {raw.strip()!r}")
        key, value = line.split("=", 1)
        if not key.strip():
            raise ConfigError(f"{source}:{i}: empty key")
        out.append((key, value, f":{i}"))
    return out


def load_config(path, base: RunConfig | None = None) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from None
    return apply_pairs(base or RunConfig(), parse_pairs(text.splitlines(), str(p)), str(p))


def parse_set(items) -> list:
    out = []
    for item in items:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out.append((k, v, ""))
    return out


_REQUIRED = {
    "obstacle": ("tau",),
    "contacts": ("tau",),
    "spectrum": ("h_list",),
    "weyl": ("tau", "h_list"),
    "thin-band": ("tau_list",),
    "large-tau": ("tau", "h_list"),
    "decay": ("tau", "h_list"),
    "oracle-compare": ("tau", "h_list"),
}
_KEY_NAME = {"tau": "tau", "h_list": "h_list", "tau_list": "tau_list"}


def check_complete(cfg: RunConfig) -> None:
    if cfg.task not in TASKS:
        raise ConfigError(f"key 'task': unknown task {cfg.task!r}; choose from {', '.join(TASKS)}")
    for name in _REQUIRED[cfg.task]:
        value = getattr(cfg, name)
        if value is None or value == ():
            raise ConfigError(f"missing required key '{_KEY_NAME[name]}' for task {cfg.task}")
    if cfg.method not in ("psor", "penalized"):
        raise ConfigError(f"key 'solver.method': expected psor or penalized, got {cfg.method!r}")
    if cfg.tau_scale not in ("abs", "osc"):
        raise ConfigError(f"key 'tau.scale': expected abs or osc, got {cfg.tau_scale!r}")
    if cfg.workers < 1:
        raise ConfigError("key 'workers' must be >= 1")
    if any(h <= 0 for h in cfg.h_list):
        raise ConfigError("key 'h_list': values must be positive")
