"""Command-line front end.

Every run is described by a JSON config whose keys match the long flags
(``t_obs`` <-> ``--t-obs``); flags given on the command line override the
file.  Exit status is 0 on success, 1 on invalid input and 2 when an exact
computation is over capacity or a photon-number truncation is too coarse.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import atomjump, fisher, qops, seqmeas, trajectory
from ._io import write_csv, write_json
from .errors import CapacityError, JumpMetError, TruncationError, ValidationError

COMMANDS = ("fisher-scan", "fisher-scaling", "markov-test", "atom-stats", "atom-uncertainty", "traj-run")
DEFAULT_FORMAT = {"fisher-scaling": "json", "markov-test": "json"}

# config key -> value type; the flag is the key with '-' for '_'
_FLAGS = {
    "kind": str,
    "phi": float,
    "A": float,
    "b": float,
    "reset_amplitude": float,
    "gamma": float,
    "t_obs": float,
    "n_max": int,
    "dt": float,
    "n_steps": int,
    "dphi": float,
    "grid_axis": str,
    "grid_min": float,
    "grid_max": float,
    "grid_steps": int,
    "grid_scale": str,
    "shots": int,
    "seed": int,
    "method": str,
    "mode": str,
    "out": str,
    "format": str,
    "model_file": str,
}


@dataclass(frozen=True)
class Grid:
    axis: str
    min: float
    max: float
    steps: int
    scale: str = "linear"

    def __post_init__(self):
        if self.steps < 1:
            raise ValidationError("grid.steps: must be >= 1")
        if self.scale not in ("linear", "log"):
            raise ValidationError(f"grid.scale: expected 'linear' or 'log', got {self.scale!r}")
        if self.scale == "log" and not self.min > 0:
            raise ValidationError("grid.min: log grids need a positive minimum")

    def values(self) -> np.ndarray:
        if self.steps == 1:
            return np.array([self.min])
        if self.scale == "log":
            return np.logspace(math.log10(self.min), math.log10(self.max), self.steps)
        return np.linspace(self.min, self.max, self.steps)


@dataclass(frozen=True)
class RunConfig:
    command: str
    output_path: Path
    format: str
    model: qops.ModelSpec | None = None
    atom: atomjump.AtomParams | None = None
    grid: Grid | None = None
    seed: int | None = None
    n_steps: int | None = None
    dphi: float = 1e-5
    shots: int = 1000
    dt: float | None = None
    mode: str | None = None
    method: str = "renewal"


# ---------------------------------------------------------------------------
# model files


def _complex_matrix(raw, dim: int | None, where: str) -> np.ndarray:
    arr = np.asarray(raw, dtype=float)
    if arr.shape[-1:] != (2,):
        raise ValidationError(f"{where}: entries must be [re, im] pairs")
    z = arr[..., 0] + 1j * arr[..., 1]
    if z.ndim == 1:
        side = math.isqrt(z.size)
        if side * side != z.size:
            raise ValidationError(f"{where}: {z.size} entries do not form a square matrix")
        z = z.reshape(side, side)
    if z.ndim != 2 or z.shape[0] != z.shape[1]:
        raise ValidationError(f"{where}: not a square matrix")
    if dim is not None and z.shape[0] != dim:
        raise ValidationError(f"{where}: dimension {z.shape[0]} does not match dim={dim}")
    return z


_PARAM_KEYS = {"A": "A", "b": "b", "reset_amplitude": "reset_amplitude", "Gamma": "Gamma", "gamma": "Gamma", "dt": "dt"}


def model_from_mapping(data: dict) -> qops.ModelSpec:
    """Validate a builtin stanza or a custom-matrix model object."""
    if not isinstance(data, dict):
        raise ValidationError("model: expected a JSON object")
    params = dict(data.get("params") or {})
    for key, name in _PARAM_KEYS.items():
        if key in data:
            params[name] = data[key]
    if "phi" not in data:
        raise ValidationError("phi: missing from model")
    try:
        phi = float(data["phi"])
    except (TypeError, ValueError):
        raise ValidationError(f"phi: not a number: {data['phi']!r}") from None
    if "kraus" in data:
        dim = data.get("dim")
        mats = tuple(_complex_matrix(m, dim, f"kraus[{i}]") for i, m in enumerate(data["kraus"]))
        spec = qops.ModelSpec("custom", phi, params, mats)
    else:
        if "kind" not in data:
            raise ValidationError("kind: missing (or give 'kraus' matrices for a custom model)")
        spec = qops.ModelSpec(str(data["kind"]), phi, params)
    qops.build_model(spec)  # completeness and range checks
    return spec


def parse_model_file(path) -> qops.ModelSpec:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno} (char {exc.pos}): {exc.msg}") from None
    return model_from_mapping(data)


# ---------------------------------------------------------------------------
# config assembly


def _load_config(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno} (char {exc.pos}): {exc.msg}") from None
    except OSError as exc:
        raise ValidationError(f"config: cannot read {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ValidationError("config: top level must be a JSON object")
    return data


def _need(d: dict, key: str, typ=float):
    if d.get(key) is None:
        raise ValidationError(f"{key}: required for command {d.get('command')!r}")
    try:
        return typ(d[key])
    except (TypeError, ValueError):
        raise ValidationError(f"{key}: invalid value {d[key]!r}") from None


def _grid(d: dict, default_axis: str) -> Grid | None:
    g = dict(d.get("grid") or {})
    for k in ("axis", "min", "max", "steps", "scale"):
        if d.get(f"grid_{k}") is not None:
            g[k] = d[f"grid_{k}"]
    if not g:
        return None
    for k in ("min", "max"):
        if k not in g:
            raise ValidationError(f"grid.{k}: required")
    try:
        return Grid(
            str(g.get("axis", default_axis)),
            float(g["min"]),
            float(g["max"]),
            int(g.get("steps", 1)),
            str(g.get("scale", "linear")),
        )
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"grid: {exc}") from None


def _model(d: dict) -> qops.ModelSpec:
    if d.get("model_file"):
        base = parse_model_file(d["model_file"])
        stanza = {"kind": base.kind, "phi": base.phi, "params": dict(base.params)}
        if base.kind == "custom":
            return qops.ModelSpec("custom", float(d.get("phi", base.phi)), dict(base.params), base.custom_matrices)
    else:
        stanza = dict(d.get("model") or {})
    for key in ("kind", "phi", "A", "b", "reset_amplitude", "dt"):
        if d.get(key) is not None:
            stanza[key] = d[key]
    if d.get("gamma") is not None:
        stanza["Gamma"] = d["gamma"]
    if "kraus" not in stanza and "kind" not in stanza:
        raise ValidationError("model: give 'model', 'model_file' or 'kind'")
    return model_from_mapping(stanza)


def _atom(d: dict) -> atomjump.AtomParams:
    return atomjump.AtomParams(
        _need(d, "gamma") if d.get("gamma") is not None else 1.0,  # times in units of 1/gamma
        _need(d, "phi"),
        _need(d, "t_obs"),
        int(d.get("n_max") or atomjump.DEFAULT_N_MAX),
    )


def build_config(d: dict) -> RunConfig:
    command = d.get("command")
    if command not in COMMANDS:
        raise ValidationError(f"command: expected one of {COMMANDS}, got {command!r}")
    if not d.get("out"):
        raise ValidationError("out: output path required")
    fmt_ = d.get("format") or DEFAULT_FORMAT.get(command, "csv")
    if fmt_ not in ("csv", "json"):
        raise ValidationError(f"format: expected 'csv' or 'json', got {fmt_!r}")
    kw = dict(command=command, output_path=Path(d["out"]), format=fmt_)
    if d.get("dphi") is not None:
        kw["dphi"] = float(d["dphi"])
    if d.get("seed") is not None:
        kw["seed"] = int(d["seed"])

    if command in ("fisher-scan", "fisher-scaling", "markov-test"):
        if command == "fisher-scan":
            kw["n_steps"] = _need(d, "n_steps", int)
            kw["grid"] = _grid(d, "phi")
            if kw["grid"] is None:
                raise ValidationError("grid: fisher-scan needs a phi grid")
            if d.get("phi") is None and "phi" not in (d.get("model") or {}):
                d = {**d, "phi": kw["grid"].min}  # the scan sets phi point by point
        elif command == "fisher-scaling":
            kw["grid"] = _grid(d, "n_steps")
            if kw["grid"] is None:
                raise ValidationError("grid: fisher-scaling needs an N range (grid.min, grid.max)")
        else:
            kw["n_steps"] = int(d.get("n_steps") or 3)
        kw["model"] = _model(d)
    elif command in ("atom-stats", "atom-uncertainty"):
        kw["atom"] = _atom(d)
        kw["grid"] = _grid(d, "t_obs")
    else:
        mode = d.get("mode") or ("atom" if d.get("t_obs") is not None else "chain")
        if mode not in ("atom", "chain"):
            raise ValidationError(f"mode: expected 'atom' or 'chain', got {mode!r}")
        kw["mode"] = mode
        kw["shots"] = _need(d, "shots", int) if d.get("shots") is not None else 1000
        kw["seed"] = kw.get("seed", 0)
        kw["method"] = d.get("method") or "renewal"
        if mode == "atom":
            kw["atom"] = _atom(d)
            kw["dt"] = _need(d, "dt")
        else:
            kw["model"] = _model(d)
            kw["n_steps"] = _need(d, "n_steps", int)
    return RunConfig(**kw)


# ---------------------------------------------------------------------------
# commands


def _fisher_scan(cfg: RunConfig) -> str:
    if cfg.grid.axis != "phi":
        raise ValidationError("grid.axis: fisher-scan scans phi")
    rho0 = qops.default_initial_state(cfg.model)
    scan = fisher.scan_phi(cfg.model, rho0, cfg.n_steps, cfg.grid.values(), cfg.dphi)
    if cfg.format == "csv":
        fisher.write_scan_csv(scan, cfg.output_path)
    else:
        write_json(cfg.output_path, {"axis": "phi", "n_steps": cfg.n_steps, "points": [list(p) for p in scan.points]})
    f = scan.fisher
    return f"fisher-scan N={cfg.n_steps} points={len(f)} F_min={f.min():.10g} F_max={f.max():.10g}"


def _fisher_scaling(cfg: RunConfig) -> str:
    lo, hi = int(round(cfg.grid.min)), int(round(cfg.grid.max))
    ns = range(lo, hi + 1)
    rho0 = qops.default_initial_state(cfg.model)
    scan = fisher.scan_steps(cfg.model, rho0, ns, cfg.dphi)
    fit = fisher.fit_quadratic_scaling(scan)
    if cfg.format == "json":
        fisher.write_fit_json(fit, cfg.output_path)
    else:
        fisher.write_scan_csv(scan, cfg.output_path)
    return f"fisher-scaling a={fit.a:.10g} b={fit.b:.10g} c={fit.c:.10g} r_squared={fit.r_squared:.10g}"


def _markov_test(cfg: RunConfig) -> str:
    k = qops.build_model(cfg.model)
    rho0 = qops.default_initial_state(cfg.model)
    report = seqmeas.markov_report(k, rho0)
    if cfg.format == "json":
        write_json(
            cfg.output_path,
            {"markov_gap": report.gap, "worst": list(report.worst), "skipped": [list(s) for s in report.skipped]},
        )
    else:
        seqmeas.write_distribution_csv(seqmeas.enumerate_distribution(k, rho0, cfg.n_steps), cfg.output_path)
    return f"markov-test gap={report.gap:.10g}"


def _sweep_params(cfg: RunConfig):
    axis = cfg.grid.axis
    if axis not in ("phi", "t_obs", "gamma"):
        raise ValidationError(f"grid.axis: atom sweeps take 'phi', 't_obs' or 'gamma', got {axis!r}")
    return [(float(v), cfg.atom.replace(**{axis: float(v)})) for v in cfg.grid.values()]


def _atom_stats(cfg: RunConfig) -> str:
    if cfg.grid is None:
        stats = atomjump.photon_statistics(cfg.atom)
        if cfg.format == "csv":
            atomjump.write_statistics(stats, csv_path=cfg.output_path)
        else:
            atomjump.write_statistics(stats, json_path=cfg.output_path)
        return f"atom-stats nbar={stats.nbar:.10g} variance={stats.variance:.10g}"
    rows = []
    for v, p in _sweep_params(cfg):
        s = atomjump.photon_statistics(p)
        rows.append((v, s.nbar, s.variance, s.truncation_mass))
    header = ["axis_value", "nbar", "variance", "truncation_mass"]
    _write_table(cfg, header, rows)
    return f"atom-stats points={len(rows)} nbar_max={max(r[1] for r in rows):.10g}"


def _atom_uncertainty(cfg: RunConfig) -> str:
    if cfg.grid is None:
        stats = atomjump.photon_statistics(cfg.atom)
        d2 = atomjump.phase_uncertainty(cfg.atom, cfg.dphi)
        if cfg.format == "csv":
            write_csv(cfg.output_path, ["delta_phi_sq"], [(d2,)])
        else:
            write_json(cfg.output_path, atomjump.summary(stats, d2))
        return f"atom-uncertainty delta_phi_sq={d2:.10g}"
    rows = [(v, atomjump.phase_uncertainty(p, cfg.dphi)) for v, p in _sweep_params(cfg)]
    _write_table(cfg, ["axis_value", "delta_phi_sq"], rows)
    return f"atom-uncertainty points={len(rows)} delta_phi_sq_min={min(r[1] for r in rows):.10g}"


def _write_table(cfg: RunConfig, header, rows) -> None:
    if cfg.format == "csv":
        write_csv(cfg.output_path, header, rows)
    else:
        write_json(cfg.output_path, {"axis": cfg.grid.axis, "columns": header, "rows": [list(r) for r in rows]})


def _traj_run(cfg: RunConfig) -> str:
    if cfg.mode == "atom":
        records = trajectory.simulate_atom_trajectories(cfg.atom, cfg.dt, cfg.seed, cfg.shots, cfg.method)
    else:
        k = qops.build_model(cfg.model)
        rho0 = qops.default_initial_state(cfg.model)
        records = trajectory.simulate_kraus_chains(k, rho0, cfg.n_steps, cfg.seed, cfg.shots)
    hist = trajectory.histogram_counts(records)
    if cfg.format == "csv":
        trajectory.write_records_csv(records, cfg.output_path)
    else:
        write_json(
            cfg.output_path,
            {
                "shots": hist.shots,
                "seed": cfg.seed,
                "bins": {str(n): c for n, c in hist.bins.items()},
                "mean": hist.mean(),
            },
        )
    return f"traj-run mode={cfg.mode} shots={hist.shots} mean_count={hist.mean():.10g}"


_RUNNERS = {
    "fisher-scan": _fisher_scan,
    "fisher-scaling": _fisher_scaling,
    "markov-test": _markov_test,
    "atom-stats": _atom_stats,
    "atom-uncertainty": _atom_uncertainty,
    "traj-run": _traj_run,
}


def run(config: RunConfig) -> str:
    """Execute one command, write its artifact and return the summary line."""
    return _RUNNERS[config.command](config)


class _Parser(argparse.ArgumentParser):
    # usage errors are invalid input (exit 1); argparse would use 2, which is
    # reserved here for capacity and truncation failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"error: {message}\n")


def _parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="jumpmet", description=__doc__.splitlines()[0])
    ap.add_argument("command", nargs="?", choices=COMMANDS, help="what to compute")
    ap.add_argument("--config", help="JSON config file; flags override its keys")
    for key, typ in _FLAGS.items():
        ap.add_argument("--" + key.replace("_", "-"), dest=key, type=typ, default=None)
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    warnings.formatwarning = lambda message, *_args, **_kw: f"warning: {message}\n"
    try:
        merged = _load_config(args.config) if args.config else {}
        for key in ("command", *_FLAGS):
            val = getattr(args, key)
            if val is not None:
                merged[key] = val
        summary = run(build_config(merged))
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (CapacityError, TruncationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (JumpMetError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
