"""Command-line front end: one subcommand per analysis, CSV + JSON outputs.

Settings come from a preset, then an INI file (--config), then flags;
later sources win. Every CSV starts with '#' comment lines carrying the
full parameter set and the seed, followed by a column-name row.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import (SweepConfig, StepSizeError, adiabatic_projection, efficiency_vs_N, evolve,
                       participation_number, purity_scan, ssp_route)
from .hamiltonian import EigensolverError, ModelParams, basis_for, diagonalize, spectrum_scan
from .otoc import DEFAULT_TIMES, fit_growth, microcanonical_otoc, nearest_eigenstate, thermal_otoc
from .semiclassical import (IntegrationError, LyapunovConfig, SPDivergenceError, chaotic_window, continue_branch,
                            lyapunov, quantum_image)

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_PARTIAL = 0, 1, 2, 3
NUMERICAL_ERRORS = (EigensolverError, SPDivergenceError, IntegrationError, StepSizeError,
                    np.linalg.LinAlgError, FloatingPointError)

COMMANDS = ("spectrum", "lyapunov", "otoc", "purity", "sweep", "efficiency")

_GRID = {"t_start": "0", "t_end": "6.0606", "points": "200"}
PRESETS = {
    "fig1": {"model": {"N": "20", "g_c": "0.1"}, "grid": dict(_GRID)},
    "fig2": {"model": {"N": "20", "g_c": "0.2"}, "grid": dict(_GRID)},
    "fig3a": {"model": {"N": "20", "g_c": "0.2"}, "grid": dict(_GRID),
              "lyapunov": {"t_tildes": "2.5758, 2.7879, 3.0303"}},
    "fig3b": {"model": {"N": "20", "g_c": "0.2"},
              "otoc": {"t_tildes": "2.5758, 2.7879, 3.0303, 2.7273", "nus": "169, 164, 158, 165",
                       "index_base": "1", "t_max": "2000", "points": "4001"}},
    "fig4": {"model": {"N": "20"}, "grid": dict(_GRID), "purity": {"g_values": "0, 0.1, 0.2"}},
    "fig5": {"model": {"N": "20", "g_c": "0.2"}, "sweep": {"rate": "0.003", "projections": "true"}},
    "fig6a": {"model": {}, "efficiency": {"N_list": "1-14", "rates": "0.0606, 0.0152, 0.003, 0.0015"}},
}


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


@dataclass
class RunConfig:
    command: str
    sections: dict = field(default_factory=dict)
    threads: int = 1
    seed: int = 0
    out_dir: Path = Path("out")

    def get(self, section: str, key: str, default=None, required: bool = False) -> str | None:
        val = self.sections.get(section, {}).get(key)
        if val is None or val == "":
            if required:
                raise UsageError(f"missing required field '{key}' in section [{section}]")
            return default
        return val

    def number(self, section: str, key: str, default=None, kind=float, required: bool = False, positive=False):
        raw = self.get(section, key, None, required)
        if raw is None:
            return default
        try:
            val = kind(raw)
        except ValueError:
            raise UsageError(f"field '{key}' in [{section}] must be {kind.__name__}, got {raw!r}") from None
        if positive and not val > 0:
            raise UsageError(f"field '{key}' in [{section}] must be positive, got {raw!r}")
        return val

    def flag(self, section: str, key: str, default: bool = False) -> bool:
        raw = self.get(section, key)
        if raw is None:
            return default
        lowered = raw.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"field '{key}' in [{section}] must be a boolean, got {raw!r}")

    def floats(self, section: str, key: str, default=None, required: bool = False) -> list[float] | None:
        raw = self.get(section, key, None, required)
        if raw is None:
            return default
        try:
            return [float(x) for x in raw.replace(";", ",").split(",") if x.strip()]
        except ValueError:
            raise UsageError(f"field '{key}' in [{section}] must be a comma-separated list of numbers") from None

    def ints(self, section: str, key: str, default=None, required: bool = False) -> list[int] | None:
        raw = self.get(section, key, None, required)
        if raw is None:
            return default
        out = []
        try:
            for part in raw.split(","):
                part = part.strip()
                if not part:
                    continue
                if "-" in part[1:]:
                    lo, hi = part.split("-", 1)
                    out.extend(range(int(lo), int(hi) + 1))
                else:
                    out.append(int(part))
        except ValueError:
            raise UsageError(f"field '{key}' in [{section}] must be integers or ranges like 1-14") from None
        return out

    def model(self, **overrides) -> ModelParams:
        kw = {"N": self.number("model", "N", kind=int, required=True, positive=True)}
        for key in ("K", "delta", "g_c", "t1_tilde", "t2_tilde"):
            val = self.number("model", key)
            if val is not None:
                kw[key] = val
        kw.update(overrides)
        try:
            return ModelParams(**kw)
        except ValueError as exc:
            raise UsageError(str(exc)) from None

    def grid(self) -> np.ndarray:
        lo = self.number("grid", "t_start", 0.0)
        hi = self.number("grid", "t_end", 6.0606)
        n = self.number("grid", "points", 200, kind=int, positive=True)
        if not hi > lo and n > 1:
            raise UsageError("grid requires t_end > t_start")
        return np.linspace(lo, hi, n)


def load_config(args) -> RunConfig:
    sections: dict[str, dict[str, str]] = {}

    def merge(src):
        for sec, kv in src.items():
            sections.setdefault(sec, {}).update({k: str(v) for k, v in kv.items()})

    if args.preset:
        if args.preset not in PRESETS:
            raise UsageError(f"unknown preset {args.preset!r}; choose from {', '.join(PRESETS)}")
        merge(PRESETS[args.preset])
    if args.config:
        parser = configparser.ConfigParser()
        parser.optionxform = str  # keep 'N' upper case
        try:
            with open(args.config) as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        merge({sec: dict(parser[sec]) for sec in parser.sections()})
    for item in args.set or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise UsageError(f"--set expects section.key=value, got {item!r}")
        lhs, value = item.split("=", 1)
        sec, key = lhs.split(".", 1)
        merge({sec: {key: value}})
    for key in ("N", "g_c", "delta", "K"):
        val = getattr(args, key, None)
        if val is not None:
            merge({"model": {key: val}})

    run = sections.get("run", {})
    threads = args.threads if args.threads is not None else int(run.get("threads", 1))
    seed = args.seed if args.seed is not None else int(run.get("seed", 0))
    out_dir = Path(args.out_dir if args.out_dir is not None else run.get("out_dir", "out"))
    if threads < 1:
        raise UsageError("--threads must be at least 1")
    return RunConfig(args.command, sections, threads, seed, out_dir)


# -- output ----------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.12g}"
    return "" if x is None else str(x)


class Writer:
    """Serializes all file output for one run and records what was written."""

    def __init__(self, cfg: RunConfig, params: ModelParams | None):
        self.cfg = cfg
        self.params = params
        self.files: list[str] = []
        cfg.out_dir.mkdir(parents=True, exist_ok=True)

    def header(self) -> list[str]:
        lines = [f"command: {self.cfg.command}", f"version: {__version__}", f"seed: {self.cfg.seed}"]
        if self.params is not None:
            lines.append("model: " + " ".join(f"{k}={_fmt(v)}" for k, v in asdict(self.params).items()))
        for sec in sorted(self.cfg.sections):
            if sec in ("model", "run"):
                continue
            kv = self.cfg.sections[sec]
            lines.append(f"{sec}: " + " ".join(f"{k}={kv[k]}" for k in sorted(kv)))
        return lines

    def csv(self, name: str, columns, rows, extra_header=()):
        path = self.cfg.out_dir / name
        with open(path, "w", newline="") as fh:
            for line in [*self.header(), *extra_header]:
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for row in rows:
                w.writerow([_fmt(x) for x in row])
        self.files.append(name)

    def json(self, name: str, payload):
        path = self.cfg.out_dir / name
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")
        self.files.append(name)


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _finite(x):
    return None if x is None or not math.isfinite(x) else x


# -- commands --------------------------------------------------------------

def cmd_spectrum(cfg: RunConfig, out: Writer) -> dict:
    params = out.params
    grid = cfg.grid()
    slices = spectrum_scan(params, grid, threads=cfg.threads)
    out.csv("spectrum.csv", ("t_tilde", "nu", "energy"),
            ((sl.t_tilde, nu, e) for sl in slices for nu, e in enumerate(sl.energies)))
    if cfg.flag("grid", "eigenvectors"):
        np.savez_compressed(cfg.out_dir / "eigenvectors.npz", t_tilde=grid,
                            energies=np.array([sl.energies for sl in slices]),
                            vectors=np.array([sl.vectors for sl in slices]))
        out.files.append("eigenvectors.npz")
    branch = continue_branch(params, grid)
    out.csv("sp_branch.csv", ("t_tilde", "n_a", "n_b", "n_c", "s_z", "mu", "E_SP"),
            ((s.t_tilde, *s.state.populations, s.mu, s.energy) for s in branch.solutions))
    summary = {"sp_breakpoint": branch.breakpoint, "ssp": branch.is_ssp(params.N)}
    if branch.breakpoint is not None:
        summary["partial"] = f"SP branch stopped at t_tilde={branch.breakpoint}: {branch.error}"
        return summary
    route, _ = ssp_route(params, slices, branch)
    out.csv("route.csv", ("t_tilde", "nu", "energy", "overlap", "ambiguous"),
            ((p.t_tilde, p.index, p.energy, p.overlap, p.ambiguous) for p in route))
    summary["ambiguous_steps"] = sum(p.ambiguous for p in route)
    return summary


def _lyapunov_config(cfg: RunConfig) -> LyapunovConfig:
    try:
        return LyapunovConfig(delta0=cfg.number("lyapunov", "delta0"), xi=cfg.number("lyapunov", "xi", 0.1),
                              M=cfg.number("lyapunov", "M", 10_000, kind=int), h=cfg.number("lyapunov", "h", 1e-3),
                              seed=cfg.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _branch_to(params: ModelParams, grid: np.ndarray, t: float):
    """SP at t reached by continuing the SSP along the grid."""
    pts = np.append(grid[grid < t], t)
    branch = continue_branch(params, pts)
    if branch.breakpoint is not None:
        raise SPDivergenceError(f"SP branch stopped at t_tilde={branch.breakpoint} before {t}", None)
    return branch[-1]


def cmd_lyapunov(cfg: RunConfig, out: Writer) -> dict:
    params = out.params
    grid = cfg.grid()
    lcfg = _lyapunov_config(cfg)
    ts = cfg.floats("lyapunov", "t_tildes", required=True)
    stride = cfg.number("lyapunov", "stride", 1, kind=int, positive=True)

    def one(t):
        return lyapunov(params, t, _branch_to(params, grid, t), lcfg)

    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as pool:
            series = list(pool.map(one, ts))
    else:
        series = [one(t) for t in ts]
    rows = ((s.t_tilde, m, kt, lam) for s in series
            for m, kt, lam in zip(s.m[stride - 1::stride], s.Kt[stride - 1::stride], s.lam[stride - 1::stride]))
    out.csv("lyapunov.csv", ("t_tilde", "m", "Kt", "lambda"), rows)
    summary = {"final": {f"{s.t_tilde:.12g}": s.final for s in series}}
    if cfg.flag("lyapunov", "window"):
        branch = continue_branch(params, grid)
        if branch.breakpoint is not None:
            summary["partial"] = f"SP branch stopped at t_tilde={branch.breakpoint}"
        else:
            w = chaotic_window(params, grid, branch, lcfg)
            summary["window"] = {"t_lo": w.t_lo, "t_hi": w.t_hi, "threshold": w.threshold}
            out.csv("lyapunov_scan.csv", ("t_tilde", "lambda_M"), zip(w.t_grid, w.exponents))
    return summary


def cmd_otoc(cfg: RunConfig, out: Writer) -> dict:
    params = out.params
    ts = cfg.floats("otoc", "t_tildes", required=True)
    base = cfg.number("otoc", "index_base", 0, kind=int)
    nus = cfg.ints("otoc", "nus")
    if nus is not None and len(nus) != len(ts):
        raise UsageError("fields 'nus' and 't_tildes' in [otoc] must have the same length")
    t_max = cfg.number("otoc", "t_max", float(DEFAULT_TIMES[-1]), positive=True)
    n_pts = cfg.number("otoc", "points", DEFAULT_TIMES.size, kind=int, positive=True)
    times = np.linspace(0.0, t_max, n_pts)
    grid = cfg.grid()

    def one(k):
        t = ts[k]
        sl = diagonalize(params, t)
        if nus is not None:
            nu = nus[k] - base
        else:
            sp = _branch_to(params, grid, t)
            nu = nearest_eigenstate(sl, sp.energy, quantum_image(sp.state, basis_for(params)))
        return microcanonical_otoc(params, t, nu, times, sl)

    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as pool:
            series = list(pool.map(one, range(len(ts))))
    else:
        series = [one(k) for k in range(len(ts))]
    out.csv("otoc.csv", ("t_tilde", "nu", "Kt", "O"),
            ((s.t_tilde, s.label, kt, v) for s in series for kt, v in zip(s.times * params.K, s.values)),
            extra_header=[f"nu is 0-based (input index base {base})"])
    fits = []
    for s in series:
        f = fit_growth(s)
        fits.append({"t_tilde": s.t_tilde, "nu": s.label, "growth": not f.empty, "t_start": f.t_start,
                     "t_end": f.t_end, "rate": f.rate, "saturation": f.saturation, "rise_decades": f.rise_decades})
    betas = cfg.floats("otoc", "betas")
    if betas:
        t_th = np.linspace(0.0, cfg.number("otoc", "thermal_t_max", 50.0, positive=True),
                           cfg.number("otoc", "thermal_points", 500, kind=int, positive=True))
        rows = []
        for t in ts:
            sl = diagonalize(params, t)
            for beta in betas:
                th = thermal_otoc(params, t, beta, t_th, sl)
                rows.extend((t, beta, kt, v) for kt, v in zip(th.times * params.K, th.values))
        out.csv("otoc_thermal.csv", ("t_tilde", "beta", "Kt", "O"), rows)
    out.json("otoc_summary.json", {"fits": fits})
    return {"growth": [f["growth"] for f in fits]}


def cmd_purity(cfg: RunConfig, out: Writer) -> dict:
    grid = cfg.grid()
    g_values = cfg.floats("purity", "g_values", [out.params.g_c if out.params else 0.0])
    rows, summary = [], {}
    for g in g_values:
        params = cfg.model(g_c=g)
        slices = spectrum_scan(params, grid, threads=cfg.threads)
        pts = purity_scan(params, slices)
        rows.extend((g, p.t_tilde, p.gamma, p.index, p.overlap, p.ambiguous) for p in pts)
        k = int(np.argmin([p.gamma for p in pts]))
        summary[f"{g:.12g}"] = {"min_gamma": pts[k].gamma, "t_tilde_at_min": pts[k].t_tilde,
                                "ambiguous_steps": sum(p.ambiguous for p in pts)}
    out.csv("purity.csv", ("g_c", "t_tilde", "gamma", "nu", "overlap", "ambiguous"), rows)
    out.json("purity_summary.json", summary)
    return {"min_gamma": {k: v["min_gamma"] for k, v in summary.items()}}


def cmd_sweep(cfg: RunConfig, out: Writer) -> dict:
    params = out.params
    rate = cfg.number("sweep", "rate", required=True, positive=True)
    span = (cfg.number("sweep", "t_start", 0.0), cfg.number("sweep", "t_end", 6.0606))
    try:
        sc = SweepConfig(params, rate, span, store_stride=cfg.number("sweep", "stride", 100, kind=int),
                         dt_tilde=cfg.number("sweep", "dt_tilde", 0.05 * 0.003),
                         method=cfg.get("sweep", "method", "chebyshev"))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    res = evolve(sc, verify=cfg.flag("sweep", "verify"))
    want_proj = cfg.flag("sweep", "projections")
    etas, proj_rows = [], []
    for t, psi in zip(res.t_tildes, res.snapshots):
        if want_proj:
            p = adiabatic_projection(psi, diagonalize(params, t))
            etas.append(participation_number(p))
            proj_rows.extend((t, nu, pv) for nu, pv in enumerate(p))
        else:
            etas.append(math.nan)
    out.csv("sweep.csv", ("Kt", "t_tilde", "n_a", "n_b", "n_c", "s_z", "norm", "eta"),
            ((kt, t, *pops, nrm, eta) for kt, t, pops, nrm, eta
             in zip(res.times, res.t_tildes, res.populations, res.norms, etas)))
    if want_proj:
        out.csv("projections.csv", ("t_tilde", "nu", "p"), proj_rows)
    return {"P": float(res.populations[-1, 2] / params.N), "final_eta": _finite(etas[-1]),
            "max_norm_error": float(np.max(np.abs(res.norms - 1.0)))}


def cmd_efficiency(cfg: RunConfig, out: Writer) -> dict:
    N_list = cfg.ints("efficiency", "N_list", required=True)
    rates = cfg.floats("efficiency", "rates", required=True)
    family = {k: cfg.number("efficiency", k) for k in ("g_sqrtN", "delta_N", "J_N")}
    family = {k: v for k, v in family.items() if v is not None}
    span = (cfg.number("efficiency", "t_start", 0.0), cfg.number("efficiency", "t_end", 6.0606))
    table = efficiency_vs_N(N_list, rates, family, span, cfg.number("efficiency", "dt_tilde", 0.05 * 0.003),
                            threads=cfg.threads)
    out.csv("efficiency.csv", ("N", "rate", "P", "error"), ((c.N, c.rate, c.P, c.error) for c in table.cells))
    summary = {"cells": len(table.cells), "failures": [asdict(c) for c in table.failures]}
    if table.failures:
        summary["partial"] = f"{len(table.failures)} of {len(table.cells)} cells failed"
    return summary


HANDLERS = {"spectrum": cmd_spectrum, "lyapunov": cmd_lyapunov, "otoc": cmd_otoc, "purity": cmd_purity,
            "sweep": cmd_sweep, "efficiency": cmd_efficiency}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cqed-stirap", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    common = _Parser(add_help=False)
    common.add_argument("--config", help="INI file with [model], [grid] and per-command sections")
    common.add_argument("--preset", choices=sorted(PRESETS), help="built-in parameter set for one figure")
    common.add_argument("--out-dir", help="output directory (default ./out)")
    common.add_argument("--threads", type=int, help="worker threads for independent items")
    common.add_argument("--seed", type=int, help="seed for the Lyapunov perturbation direction")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override one config value")
    common.add_argument("--N", dest="N", help="total excitation number")
    common.add_argument("--g-c", dest="g_c", help="JC coupling in units of K")
    common.add_argument("--delta", help="cavity-b detuning in units of K")
    common.add_argument("--K", help="pulse amplitude")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=HANDLERS[name].__doc__ or f"run the {name} analysis")
    return parser


def main(argv=None) -> int:
    start = time.perf_counter()
    try:
        args = build_parser().parse_args(argv)
        cfg = load_config(args)
        params = None if cfg.command == "efficiency" else cfg.model()
        out = Writer(cfg, params)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    status, summary, error = EXIT_OK, {}, None
    try:
        summary = HANDLERS[cfg.command](cfg, out)
        if "partial" in summary:
            status = EXIT_PARTIAL
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NUMERICAL_ERRORS as exc:
        status, error = EXIT_NUMERICAL, f"{type(exc).__name__}: {exc}"
        print(f"numerical failure: {error}", file=sys.stderr)
    manifest = {
        "command": cfg.command, "sections": cfg.sections, "seed": cfg.seed, "threads": cfg.threads,
        "version": __version__, "model": None if out.params is None else asdict(out.params),
        "files": list(out.files), "summary": summary, "error": error, "exit_code": status,
        "wall_time_s": round(time.perf_counter() - start, 3),
    }
    out.json("manifest.json", manifest)
    return status


if __name__ == "__main__":
    sys.exit(main())
