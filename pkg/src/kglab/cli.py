"""Command line front end: config parsing, runs, audits and parameter sweeps.

Config documents are flat ``key = value`` text with dotted namespaces::

    damping.shape = exterior-plateau
    damping.lambda0 = 0.5
    damping.lambda1 = 1.0
    damping.R = 2.0
    data.family = gaussian
    data.amplitude = 0.05
    time.T = 20

Blank lines and ``#`` comments are ignored.  Outputs are CSV files with
round-trip float precision and JSON summaries with sorted keys, so identical
inputs give byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .audit import (
    energy_identity_residual,
    fit_decay,
    morawetz_report,
    multiplier_terms,
    observation_report,
)
from .classifier import classify
from .core import (
    DataSpec,
    Radii,
    RunConfig,
    ValidationError,
    make_damping,
    make_grid,
    zero_damping,
)
from .evolution import StepperConfig, Trajectory, init_state, required_domain, run, support_radius
from .functionals import build_cutoff
from .ground_state import GroundState, load_ground_state, save_ground_state, shoot_ground_state, verify_ground_state

SWEEP_CAP = 256
T0_DEFAULT = 10.0

# key -> (type, default); REQUIRED marks keys without a default
REQUIRED = object()
_BOOL = "bool"
_LIST = "list"
SCHEMA = {
    "grid.dr": (float, 0.01),
    "grid.r_max": (float, None),
    "grid.margin": (float, 2.0),
    "damping.shape": (str, REQUIRED),
    "damping.lambda0": (float, None),
    "damping.lambda1": (float, None),
    "damping.R": (float, None),
    "damping.width": (float, None),
    "data.family": (str, REQUIRED),
    "data.amplitude": (float, REQUIRED),
    "data.sigma": (float, 1.0),
    "time.T": (float, REQUIRED),
    "time.dt": (float, None),
    "time.cadence": (int, 10),
    "run.m_blow": (float, 1e3),
    "run.linear": (_BOOL, False),
    "audit.R": (float, None),
    "audit.r1": (float, None),
    "audit.r2": (float, None),
    "audit.T_list": (_LIST, None),
    "audit.fit_start": (float, 5.0),
    "ground_state.r_max": (float, 20.0),
    "ground_state.n": (int, 2001),
    "ground_state.tol": (float, 1e-8),
    "ground_state.cache_dir": (str, ".kglab-cache"),
    "sweep.amplitude": (_LIST, None),
    "sweep.lambda0": (_LIST, None),
    "sweep.lambda1": (_LIST, None),
    "sweep.R": (_LIST, None),
    "sweep.shape": (_LIST, None),
    "sweep.dt": (_LIST, None),
    "sweep.cap": (int, SWEEP_CAP),
}
SWEEP_AXES = {
    "sweep.amplitude": ("data.amplitude", float),
    "sweep.lambda0": ("damping.lambda0", float),
    "sweep.lambda1": ("damping.lambda1", float),
    "sweep.R": ("damping.R", float),
    "sweep.shape": ("damping.shape", str),
    "sweep.dt": ("time.dt", float),
}


class ConfigError(ValidationError):
    """A config document is malformed; the message names the offending key."""


# --------------------------------------------------------------------------
# parsing


def read_document(text: str) -> dict:
    """Split a key = value document into a raw string mapping."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r} (line {lineno})")
        if key in raw:
            raise ConfigError(f"duplicate key {key!r} (line {lineno})")
        raw[key] = value
    return raw


def _convert(key: str, value: str):
    kind = SCHEMA[key][0]
    try:
        if kind is _BOOL:
            low = value.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(value)
            return low in ("true", "1", "yes")
        if kind is _LIST:
            return [v.strip() for v in value.split(",") if v.strip()]
        return kind(value)
    except ValueError:
        raise ConfigError(f"key {key!r}: cannot parse {value!r} as {getattr(kind, '__name__', kind)}") from None


def resolve(raw: dict) -> dict:
    """Typed values for every schema key, defaults filled in."""
    out = {}
    for key, (_, default) in SCHEMA.items():
        if key in raw:
            out[key] = _convert(key, raw[key])
        elif default is REQUIRED:
            raise ConfigError(f"missing required key {key!r}")
        else:
            out[key] = default
    shape = out["damping.shape"]
    if shape != "none":
        for key in ("damping.lambda0", "damping.lambda1", "damping.R"):
            if out[key] is None:
                raise ConfigError(f"missing required key {key!r} for damping shape {shape!r}")
    return out


@dataclass(frozen=True)
class Settings:
    """Everything in a document besides the run itself."""

    fit_start: float
    T_list: tuple
    gs_r_max: float
    gs_n: int
    gs_tol: float
    cache_dir: str


@dataclass(frozen=True)
class SweepSpec:
    base: RunConfig
    axes: dict
    raw: dict = field(repr=False)
    cap: int = SWEEP_CAP

    def documents(self) -> list[dict]:
        names = sorted(self.axes)
        docs = []
        for combo in itertools.product(*(self.axes[n] for n in names)):
            doc = {k: v for k, v in self.raw.items() if not k.startswith("sweep.")}
            for name, value in zip(names, combo):
                doc[SWEEP_AXES[name][0]] = value
            docs.append(doc)
        return docs

    def configs(self, ground_state=None) -> list[RunConfig]:
        return [build_run_config(resolve(d), ground_state) for d in self.documents()]


def parse_settings(values: dict) -> Settings:
    T = values["time.T"]
    if values["audit.T_list"] is not None:
        T_list = tuple(_float_item("audit.T_list", x) for x in values["audit.T_list"])
    else:
        T_list = tuple(k * T0_DEFAULT for k in (1, 2, 3) if k * T0_DEFAULT <= T)
    return Settings(
        fit_start=values["audit.fit_start"],
        T_list=T_list,
        gs_r_max=values["ground_state.r_max"],
        gs_n=values["ground_state.n"],
        gs_tol=values["ground_state.tol"],
        cache_dir=values["ground_state.cache_dir"],
    )


def _float_item(key, x):
    try:
        return float(x)
    except ValueError:
        raise ConfigError(f"key {key!r}: cannot parse {x!r} as float") from None


def build_run_config(values: dict, ground_state=None) -> RunConfig:
    data = DataSpec(values["data.family"], values["data.amplitude"], values["data.sigma"])
    T = values["time.T"]
    dr = values["grid.dr"]
    if not dr > 0:
        raise ConfigError(f"key 'grid.dr': must be positive, got {dr}")
    support = support_radius(data, ground_state)
    shape = values["damping.shape"]
    R = values["damping.R"] or 1.0
    audit_R = values["audit.R"] or R
    if values["grid.r_max"] is None:
        r_max = max(required_domain(support, T, values["grid.margin"]), 4 * audit_R, 2 * support)
        n = int(math.ceil(r_max / dr - 1e-9)) + 1
    else:
        n = int(round(values["grid.r_max"] / dr)) + 1
    grid = make_grid((n - 1) * dr, n)
    if shape == "none":
        damping = zero_damping(grid)
    else:
        damping = make_damping(shape, values["damping.lambda0"], values["damping.lambda1"], R, grid,
                               values["damping.width"])
    dt = values["time.dt"] if values["time.dt"] is not None else 0.5 * dr
    if dt > grid.dr * (1 + 1e-12):
        raise ConfigError(f"key 'time.dt': CFL violated, dt = {dt} exceeds grid.dr = {grid.dr}")
    if T > grid.r_max - support + 1e-12:
        raise ConfigError(
            f"key 'grid.r_max': domain too small, need r_max >= support + T = {support + T:g}"
        )
    radii = Radii(audit_R, values["audit.r1"], values["audit.r2"])
    return RunConfig(grid, damping, data, dt, T, values["run.m_blow"], values["time.cadence"], radii,
                     values["run.linear"], support)


def parse_config(text: str, ground_state=None) -> RunConfig | SweepSpec:
    """Parse a document into a validated RunConfig, or a SweepSpec if any sweep axis is set."""
    raw = read_document(text)
    values = resolve(raw)
    axes = {}
    for key, (_, kind) in SWEEP_AXES.items():
        if values[key] is not None:
            axes[key] = [kind(x) if kind is str else _float_item(key, x) for x in values[key]]
    base = build_run_config(values, ground_state)
    if not axes:
        return base
    size = math.prod(len(v) for v in axes.values())
    if size > values["sweep.cap"]:
        raise ConfigError(f"key 'sweep.cap': sweep has {size} runs, cap is {values['sweep.cap']}")
    spec = SweepSpec(base, axes, raw, values["sweep.cap"])
    spec.configs(ground_state)  # validate every instance up front
    return spec


# --------------------------------------------------------------------------
# ground-state cache


def cache_path(cache_dir, r_max: float, n: int, tol: float) -> Path:
    return Path(cache_dir) / f"ground_state_rmax{r_max!r}_n{n}_tol{tol!r}.txt"


def get_ground_state(settings: Settings) -> GroundState:
    path = cache_path(settings.cache_dir, settings.gs_r_max, settings.gs_n, settings.gs_tol)
    if path.exists():
        return load_ground_state(path)
    gs = shoot_ground_state(make_grid(settings.gs_r_max, settings.gs_n), settings.gs_tol)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(f".tmp{os.getpid()}")
    save_ground_state(gs, tmp)
    os.replace(tmp, path)
    return gs


# --------------------------------------------------------------------------
# output helpers


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n")


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    path.write_text(buf.getvalue())


SAMPLE_COLUMNS = ("t", "E", "E_L", "K", "J", "L4", "kinetic", "grad2", "mass2", "damping_density")


def series_table(series):
    keys = sorted(series.records[0].restricted)
    header = list(SAMPLE_COLUMNS) + ["A_cum", "E_scheme"] + keys
    rows = []
    for i, rec in enumerate(series.records):
        row = [getattr(rec, c) for c in SAMPLE_COLUMNS]
        row += [series.A[i], series.E_scheme[i]] + [rec.restricted[k] for k in keys]
        rows.append(row)
    return header, rows


def _config_dict(cfg: RunConfig) -> dict:
    return {
        "r_max": cfg.grid.r_max, "n": cfg.grid.n, "dr": cfg.grid.dr, "dt": cfg.dt, "T": cfg.T,
        "cadence": cfg.cadence, "m_blow": cfg.m_blow, "linear": cfg.linear,
        "damping": {"shape": cfg.damping.shape, "lambda0": cfg.damping.lambda0,
                    "lambda1": cfg.damping.lambda1, "R": cfg.damping.R, "width": cfg.damping.width},
        "data": {"family": cfg.data.family, "amplitude": cfg.data.amplitude, "sigma": cfg.data.sigma},
        "radii": {"R": cfg.radii.R, "r1": cfg.radii.r1, "r2": cfg.radii.r2},
    }


def simulate(cfg: RunConfig, settings: Settings, gs: GroundState | None):
    """Run one config; returns (series, summary dict)."""
    series = run(cfg, gs)
    final = series.records[-1]
    summary = {
        "version": __version__,
        "config": _config_dict(cfg),
        "outcome": series.outcome,
        "t_star": series.t_star,
        "steps": series.meta["steps"],
        "samples": len(series.times),
        "partial": series.blew_up,
        "epsilon": series.epsilon,
        "final": {"t": final.t, "E": final.E, "E_L": final.E_L, "K": final.K, "J": final.J,
                  "L4": final.L4, "A_cum": float(series.A[-1]), "E_scheme": float(series.E_scheme[-1])},
        "energy_identity_max_relative": energy_identity_residual(series).max_relative,
        "decay_fit": None,
        "observation": None,
    }
    if gs is not None:
        c = classify(init_state(cfg.data, cfg.grid, gs), None, gs.h0, cfg.grid)
        summary["classification"] = {"label": c.label, "E": c.E, "K": c.K, "h0": c.h0, "E_over_h0": c.energy_ratio}
    if not series.blew_up:
        E = series.column("E")
        if settings.fit_start < cfg.T and np.all(E[series.times >= settings.fit_start - 1e-12] > 0):
            try:
                fit = fit_decay(series, (settings.fit_start, None))
                summary["decay_fit"] = {"window": list(fit.window), "rate": fit.rate,
                                        "coefficient": fit.coefficient, "r_squared": fit.r_squared,
                                        "degenerate": fit.degenerate}
            except ValidationError as exc:
                summary["decay_fit"] = {"error": str(exc)}
        T_ok = [T for T in settings.T_list if T <= cfg.T + 1e-12]
        if T_ok:
            try:
                summary["observation"] = observation_report(series, T_ok).as_dict()
            except ValidationError as exc:
                summary["observation"] = {"error": str(exc)}
    return series, summary


def _write_run(out: Path, series, summary) -> None:
    out.mkdir(parents=True, exist_ok=True)
    header, rows = series_table(series)
    write_csv(out / "samples.csv", header, rows)
    write_json(out / "summary.json", summary)


# --------------------------------------------------------------------------
# subcommands


def _load(args):
    text = Path(args.config).read_text()
    values = resolve(read_document(text))
    settings = parse_settings(values)
    gs = get_ground_state(settings)
    parsed = parse_config(text, gs)
    if isinstance(parsed, RunConfig) and (args.dense or args.linear):
        parsed = replace(parsed, cadence=1 if args.dense else parsed.cadence, linear=parsed.linear or args.linear)
    return parsed, settings, gs


def cmd_ground_state(args) -> int:
    if args.config:
        settings = parse_settings(resolve(read_document(Path(args.config).read_text())))
    else:
        settings = Settings(5.0, (), 20.0, 2001, 1e-8, ".kglab-cache")
    gs = get_ground_state(settings)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_ground_state(gs, out / "ground_state.txt")
    report = verify_ground_state(gs)
    report.update(r_max=gs.grid.r_max, n=gs.grid.n, tol=gs.tol, match_radius=gs.match_radius)
    write_json(out / "ground_state.json", report)
    return 0


def cmd_simulate(args) -> int:
    cfg, settings, gs = _load(args)
    if isinstance(cfg, SweepSpec):
        raise ConfigError("config defines sweep axes; use the sweep subcommand")
    series, summary = simulate(cfg, settings, gs)
    _write_run(Path(args.out), series, summary)
    return 0


def cmd_classify(args) -> int:
    cfg, _, gs = _load(args)
    if isinstance(cfg, SweepSpec):
        cfg = cfg.base
    c = classify(init_state(cfg.data, cfg.grid, gs), None, gs.h0, cfg.grid)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "classification.json",
               {"label": c.label, "E": c.E, "K": c.K, "h0": c.h0, "E_over_h0": c.energy_ratio,
                "data": _config_dict(cfg)["data"]})
    return 0


def cmd_audit(args) -> int:
    cfg, settings, gs = _load(args)
    if isinstance(cfg, SweepSpec):
        raise ConfigError("config defines sweep axes; use the sweep subcommand")
    out = Path(args.out)
    series, summary = simulate(cfg, settings, gs)
    _write_run(out, series, summary)
    res = energy_identity_residual(series)
    write_csv(out / "energy_identity.csv", ["t", "residual"], zip(res.times.tolist(), res.residual.tolist()))
    audit = {"energy_identity_max_relative": res.max_relative, "partial": res.partial}
    if series.blew_up:
        audit["morawetz"] = {"error": "run blew up; estimates need a global solution"}
        audit["multiplier"] = None
    else:
        audit["morawetz"] = morawetz_report(series).as_dict()
        phi = build_cutoff("phi", cfg.radii, cfg.grid)
        psi = build_cutoff("psi", cfg.radii, cfg.grid)
        state0 = init_state(cfg.data, cfg.grid, gs)
        stepper = StepperConfig(cfg.dt, cfg.m_blow, not cfg.linear)
        trace = Trajectory(state0, cfg.damping, cfg.grid, stepper, cfg.n_steps)
        ledger = multiplier_terms(trace, phi, cfg.damping, cfg.grid, psi)
        audit["multiplier"] = ledger.as_dict()
        audit["cutoff_constants"] = {"phi": phi.constants, "psi": psi.constants}
    write_json(out / "audit.json", audit)
    return 0


def _sweep_one(job):
    index, doc, settings, out_dir = job
    gs = get_ground_state(settings)
    cfg = build_run_config(resolve(doc), gs)
    series, summary = simulate(cfg, settings, gs)
    run_dir = Path(out_dir) / f"run_{index:03d}"
    _write_run(run_dir, series, summary)
    fit = summary["decay_fit"] or {}
    obs = summary["observation"] or {}
    strong = [e["strong"] for e in obs.get("entries", [])]
    return [
        index, cfg.data.amplitude, cfg.damping.shape, cfg.damping.lambda0, cfg.damping.lambda1,
        cfg.damping.R, cfg.dt, series.outcome, "" if series.t_star is None else series.t_star,
        series.records[0].E, series.records[-1].E, fit.get("rate", ""), fit.get("r_squared", ""),
        max(strong) if strong else "",
    ]


SWEEP_HEADER = ["index", "amplitude", "shape", "lambda0", "lambda1", "R", "dt", "outcome", "t_star",
                "E0", "E_final", "lambda_fit", "r_squared", "max_strong_ratio"]


def cmd_sweep(args) -> int:
    spec, settings, _ = _load(args)
    if not isinstance(spec, SweepSpec):
        raise ConfigError("config defines no sweep.* axes")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(i, doc, settings, str(out)) for i, doc in enumerate(spec.documents())]
    if args.workers <= 1:
        rows = [_sweep_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            rows = list(pool.map(_sweep_one, jobs))
    rows.sort(key=lambda r: r[0])
    write_csv(out / "summary.csv", SWEEP_HEADER, rows)
    return 0


COMMANDS = {
    "ground-state": cmd_ground_state,
    "simulate": cmd_simulate,
    "classify": cmd_classify,
    "audit": cmd_audit,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kglab", description="Radial damped focusing Klein-Gordon lab")
    p.add_argument("--version", action="version", version=f"kglab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=(name != "ground-state"), help="key = value config file")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--workers", type=int, default=1, help="parallel runs for sweep")
        sp.add_argument("--dense", action="store_true", help="sample every step")
        sp.add_argument("--linear", action="store_true", help="switch the cubic term off")
        sp.add_argument("--seed", type=int, default=None, help="reserved; runs are deterministic")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ValidationError, ArithmeticError, RuntimeError, OSError) as exc:
        print(f"kglab {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
