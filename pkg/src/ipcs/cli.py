"""Batch harness: single runs and (s, l) sweeps with CSV and gnuplot output.

Config files hold one ``key = value`` per line with ``#`` comments; command
line flags override file values.  In sweeps, ``scheme``, ``s`` and ``l``
accept comma-separated lists.  Exit codes: 0 success, 2 configuration
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ipcs.grid import build_grid
from ipcs.krylov import SolverConfig
from ipcs.metrics import ErrorReport, convergence_rate, step_errors
from ipcs.mms import manufactured_case
from ipcs.operators import assemble_operator_set
from ipcs.scheme import PressureCorrection, SchemeKind, SolverFailure

log = logging.getLogger("ipcs")

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
MAX_DEFAULT_S = 3

STEP_COLUMNS = (
    "step", "t", "err_l2_pred", "err_h1_pred", "err_l2_end", "err_l2_pres",
    "theta_visc", "theta_conv", "cfl_adv", "mom_iters", "poisson_iters",
)
SUMMARY_COLUMNS = (
    "scheme", "mode", "dim", "s", "l", "nu", "T", "k", "steps",
    "err_l2l2_pred", "err_l2h1_pred", "err_linfl2_pred", "err_l2l2_end", "err_l2l2_pres",
)
RATE_COLUMNS = ("scheme", "s", "l", "err_l2l2", "err_l2h1", "err_pres", "rate_l2l2", "rate_l2h1")
MODES = ("temporal", "spatial")


class ConfigError(ValueError):
    pass


class RunAborted(RuntimeError):
    """A case stopped early; ``errors`` holds the steps completed before ``step``."""

    def __init__(self, step: int, errors: ErrorReport, cause: str):
        super().__init__(f"numerical failure: {cause}")
        self.step = step
        self.errors = errors


def fmt(x) -> str:
    """CSV cell: integers verbatim, floats in scientific notation (10 significant digits)."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.9e}"
    return str(x)


@dataclass(frozen=True)
class RunConfig:
    scheme: SchemeKind = SchemeKind.EXPLICIT_STAR
    mode: str = "temporal"
    dim: int = 3
    nu: float = 1e-3
    s: int = 1
    l: int = 0
    T: float | None = None  # None: mode default
    k: float | None = None  # None: mode default
    c_inv: float = 1.0
    rel_tol: float = 1e-10
    abs_tol: float = 1e-14
    max_iter: int = 5000
    out: str = "results"
    allow_large: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode: expected one of {MODES}, got {self.mode!r}")
        if self.dim not in (2, 3):
            raise ConfigError(f"dim: expected 2 or 3, got {self.dim}")
        if self.s < 0:
            raise ConfigError(f"s: must be >= 0, got {self.s}")
        if self.l < 0:
            raise ConfigError(f"l: must be >= 0, got {self.l}")
        if self.s > MAX_DEFAULT_S and not self.allow_large:
            raise ConfigError(f"s: {self.s} exceeds {MAX_DEFAULT_S}; pass --allow-large")
        if not self.nu > 0:
            raise ConfigError(f"nu: must be positive, got {self.nu}")
        if not self.c_inv > 0:
            raise ConfigError(f"cinv: must be positive, got {self.c_inv}")
        if not (self.time_step > 0 and self.final_time > 0):
            raise ConfigError("T, k: must be positive")
        ratio = self.final_time / self.time_step
        if abs(ratio - round(ratio)) > 1e-9 * max(ratio, 1.0):
            raise ConfigError(f"T/k: {self.final_time!r}/{self.time_step!r} is not an integer")

    @property
    def n(self) -> int:
        """Cells per axis, h = 2^(-s-4)."""
        return 2 ** (self.s + 4)

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def time_step(self) -> float:
        if self.k is not None:
            return self.k
        base = 2.0 ** (-self.l - 7)
        return base if self.mode == "temporal" else 0.1 * base

    @property
    def final_time(self) -> float:
        if self.T is not None:
            return self.T
        return 1.0 if self.mode == "temporal" else 0.1

    @property
    def steps(self) -> int:
        return int(round(self.final_time / self.time_step))

    @property
    def tag(self) -> str:
        return f"{self.mode}_{self.scheme.value}_s{self.s}_l{self.l}"

    def solver_config(self) -> SolverConfig:
        return SolverConfig(rel_tol=self.rel_tol, abs_tol=self.abs_tol, max_iter=self.max_iter)


# ---------------------------------------------------------------- parsing

_CONVERTERS = {
    "scheme": lambda v: SchemeKind(v),
    "mode": str,
    "dim": int,
    "nu": float,
    "s": int,
    "l": int,
    "T": float,
    "k": float,
    "cinv": float,
    "rel_tol": float,
    "abs_tol": float,
    "max_iter": int,
    "out": str,
}
_FIELD = {"cinv": "c_inv"}
LIST_KEYS = ("scheme", "s", "l")


def read_config_file(path) -> dict[str, str]:
    """Raw ``key -> value`` strings from a config file."""
    raw = {}
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _CONVERTERS:
            raise ConfigError(f"{key}: unknown key (line {lineno})")
        raw[key] = value
    return raw


def _convert(key: str, value: str):
    if key not in _CONVERTERS:
        raise ConfigError(f"{key}: unknown key")
    try:
        return _CONVERTERS[key](value.strip())
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r}") from None


def _merge(path, overrides: dict | None) -> dict[str, str]:
    raw = read_config_file(path) if path else {}
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _CONVERTERS:
            raise ConfigError(f"{key}: unknown key")
        raw[key] = str(value)
    return raw


def _build(raw: dict[str, str], allow_large: bool) -> RunConfig:
    kwargs = {_FIELD.get(k, k): _convert(k, v) for k, v in raw.items()}
    return RunConfig(allow_large=allow_large, **kwargs)


def parse_config(path=None, overrides: dict | None = None, allow_large: bool = False) -> RunConfig:
    """Config file plus flag overrides (string values) for a single run."""
    return _build(_merge(path, overrides), allow_large)


def parse_sweep(path=None, overrides: dict | None = None, allow_large: bool = False) -> list[RunConfig]:
    """Expand comma lists of scheme, s and l into configs (scheme, then s, then l order)."""
    raw = _merge(path, overrides)
    lists = {}
    for key in LIST_KEYS:
        default = {"scheme": SchemeKind.EXPLICIT_STAR.value, "s": "1", "l": "0"}[key]
        items = [v.strip() for v in raw.pop(key, default).split(",")]
        if not any(items):
            raise ConfigError(f"{key}: empty level list")
        if not all(items):
            raise ConfigError(f"{key}: empty entry in list")
        lists[key] = [_convert(key, v) for v in items]
    base = _build(raw, allow_large)
    return [
        replace(base, scheme=sch, s=s, l=l)
        for sch in lists["scheme"]
        for s in lists["s"]
        for l in lists["l"]
    ]


# ---------------------------------------------------------------- running


def _write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(x) for x in row])


def run_case(cfg: RunConfig, verbose: bool = False, stream=None) -> ErrorReport:
    """Run one configuration; writes steps_<tag>.csv and summary_<tag>.csv under cfg.out."""
    stream = stream or sys.stderr
    grid = build_grid(cfg.n, cfg.dim)
    ops = assemble_operator_set(grid, cfg.nu)
    case = manufactured_case(cfg.dim, cfg.nu)
    sc = cfg.solver_config()
    solver = PressureCorrection(
        ops, case, cfg.scheme, c_inv=cfg.c_inv, momentum_cfg=sc, poisson_cfg=sc, mass_cfg=sc
    )
    k = cfg.time_step
    state = solver.initialize(k)
    report = ErrorReport(k=k, meta={
        "scheme": cfg.scheme.value, "mode": cfg.mode, "dim": cfg.dim, "s": cfg.s, "l": cfg.l,
        "nu": cfg.nu, "T": cfg.final_time, "k": k, "steps": cfg.steps,
    })
    rows = []
    started = time.perf_counter()
    failure = None
    for _ in range(cfg.steps):
        try:
            # a blowing-up run is reported through SolverFailure, not overflow warnings
            with np.errstate(over="ignore", invalid="ignore"):
                state, diag = solver.advance(state)
        except SolverFailure as exc:
            failure = (exc.step, str(exc))
            break
        errs = step_errors(case, grid, state.u_tilde, state.u, state.p, state.t)
        if not all(math.isfinite(e) for e in errs):
            failure = (state.step, f"step {state.step}: non-finite error norm")
            break
        report.append(state.t, *errs)
        rec = diag.record()
        rows.append((rec["step"], rec["t"], *errs, rec["theta_visc"], rec["theta_conv"], rec["cfl_adv"],
                     rec["mom_iters"], rec["poisson_iters"]))
        if verbose:
            rec.update(zip(STEP_COLUMNS[2:6], errs))
            print(json.dumps(rec), file=stream, flush=True)
    log.info("%s: %d steps in %.1f s", cfg.tag, len(rows), time.perf_counter() - started)
    out = Path(cfg.out)
    _write_csv(out / f"steps_{cfg.tag}.csv", STEP_COLUMNS, rows)
    if rows:
        comp = report.composites()
        meta = dict(report.meta, steps=len(rows))
        _write_csv(out / f"summary_{cfg.tag}.csv", SUMMARY_COLUMNS,
                   [[meta[c] for c in SUMMARY_COLUMNS[:9]] + [comp[c] for c in SUMMARY_COLUMNS[9:]]])
    if failure is not None:
        raise RunAborted(failure[0], report, failure[1])
    return report


def rate_rows(cases: list[tuple[RunConfig, dict]], mode: str) -> list[list]:
    """Rate table rows; rates compare consecutive levels along the refined axis."""
    vary = "l" if mode == "temporal" else "s"
    fixed = "s" if vary == "l" else "l"
    rows = []
    groups: dict = {}
    for cfg, comp in cases:
        groups.setdefault((cfg.scheme.value, getattr(cfg, fixed)), []).append((cfg, comp))
    for key in groups:
        prev = None
        for cfg, comp in sorted(groups[key], key=lambda c: getattr(c[0], vary)):
            r2 = rh = ""
            if prev is not None and getattr(cfg, vary) == getattr(prev[0], vary) + 1:
                r2 = _safe_rate(prev[1]["err_l2l2_pred"], comp["err_l2l2_pred"])
                rh = _safe_rate(prev[1]["err_l2h1_pred"], comp["err_l2h1_pred"])
            rows.append([cfg.scheme.value, cfg.s, cfg.l, comp["err_l2l2_pred"], comp["err_l2h1_pred"],
                         comp["err_l2l2_pres"], r2, rh])
            prev = (cfg, comp)
    return rows


def _safe_rate(a: float, b: float):
    if not (math.isfinite(a) and math.isfinite(b)) or a <= 0 or b <= 0:
        return "nan"
    return convergence_rate(a, b)


def write_plot(out: Path, mode: str, cases: list[tuple[RunConfig, dict]]) -> Path:
    """gnuplot script plus one .dat file per series (log-log error vs k or h)."""
    vary = "l" if mode == "temporal" else "s"
    fixed = "s" if vary == "l" else "l"
    series: dict = {}
    for cfg, comp in cases:
        series.setdefault((cfg.scheme.value, getattr(cfg, fixed)), []).append((cfg, comp))
    plots = []
    out.mkdir(parents=True, exist_ok=True)
    for (scheme, level), items in series.items():
        name = f"plot_{mode}_{scheme}_{fixed}{level}.dat"
        with open(out / name, "w") as fh:
            fh.write("# step_size err_l2l2_pred err_l2h1_pred err_l2l2_pres\n")
            for cfg, comp in sorted(items, key=lambda c: getattr(c[0], vary)):
                x = cfg.time_step if mode == "temporal" else cfg.h
                fh.write(" ".join(fmt(v) for v in (x, comp["err_l2l2_pred"], comp["err_l2h1_pred"],
                                                     comp["err_l2l2_pres"])) + "\n")
        plots.append(f"'{name}' using 1:2 with linespoints title '{scheme}, {fixed}={level}'")
    xlabel = "k" if mode == "temporal" else "h"
    order = 1 if mode == "temporal" else 2
    script = out / f"plot_{mode}.gp"
    script.write_text(
        "set terminal pngcairo size 800,600\n"
        f"set output 'errors_{mode}.png'\n"
        "set logscale xy\n"
        f"set xlabel '{xlabel}'\n"
        "set ylabel 'L2(0,T;L2) predictor error'\n"
        "set key left top\n"
        f"plot {', '.join(plots)}, x**{order} dashtype 2 title 'order {order}'\n"
    )
    return script


def run_sweep(configs: list[RunConfig], verbose: bool = False) -> tuple[list[list], list[RunAborted]]:
    """Run every case; aborted cases enter the tables with their partial composites."""
    if not configs:
        raise ConfigError("sweep: no cases")
    modes = {c.mode for c in configs}
    if len(modes) != 1:
        raise ConfigError("mode: a sweep runs a single mode")
    mode = modes.pop()
    out = Path(configs[0].out)
    cases, aborted = [], []
    for cfg in configs:
        try:
            report = run_case(cfg, verbose)
        except RunAborted as exc:
            log.warning("%s: %s", cfg.tag, exc)
            aborted.append(exc)
            report = exc.errors
            if not report.t:
                continue
        cases.append((cfg, report.composites()))
    rows = rate_rows(cases, mode)
    _write_csv(out / f"rates_{mode}.csv", RATE_COLUMNS, rows)
    write_plot(out, mode, cases)
    return rows, aborted


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ipcs", description="Incremental pressure-correction MMS runs.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (("run", "run a single case"), ("sweep", "run a (scheme, s, l) sweep")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", help="key = value config file")
        lists = name == "sweep"
        p.add_argument("--scheme", help="implicit, explicit or explicit-star" + (" (comma list)" if lists else ""))
        p.add_argument("--mode", choices=MODES)
        p.add_argument("--s", help="spatial level, h = 2^(-s-4)" + (" (comma list)" if lists else ""))
        p.add_argument("--l", help="temporal level" + (" (comma list)" if lists else ""))
        p.add_argument("--nu")
        p.add_argument("--dim")
        p.add_argument("--cinv", help="inverse-inequality constant in theta_visc")
        p.add_argument("--out", help="output directory (default: results)")
        p.add_argument("--verbose", action="store_true", help="per-step JSON diagnostics on stderr")
        p.add_argument("--allow-large", action="store_true", help="permit s > 3")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    overrides = {k: getattr(args, k) for k in ("scheme", "mode", "s", "l", "nu", "dim", "cinv", "out")}
    try:
        if args.command == "run":
            for key in ("scheme", "s", "l"):
                if overrides[key] is not None and "," in overrides[key]:
                    raise ConfigError(f"{key}: lists are only accepted by sweep")
            cfg = parse_config(args.config, overrides, args.allow_large)
            comp = run_case(cfg, args.verbose).composites()
            print(json.dumps({"tag": cfg.tag, **comp}))
        else:
            configs = parse_sweep(args.config, overrides, args.allow_large)
            rows, aborted = run_sweep(configs, args.verbose)
            for row in rows:
                print(",".join(fmt(x) for x in row))
            for exc in aborted:
                print(str(exc), file=sys.stderr)
            if aborted:
                return EXIT_NUMERICAL
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RunAborted as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_NUMERICAL
    return 0
