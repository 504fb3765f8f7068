"""Command-line front end.

Exit codes: 0 success, 1 usage or flag error, 2 input-data or config-file
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    CUMULATIVE_BINS_MESSAGE,
    TABLE_PVALUE_NOTE,
    chi_squared_gof,
    compare_cdfs,
    gof_from_fit,
    return_curve,
)
from .blocking import ArrivalSeries, BlockConfig, aggregate_subperiods, describe, extract_block_maxima
from .distributions import GevParams, NormalParams, PoissonParams
from .errors import ConfigError, DataError, EvaError, NumericalFailure, ParameterError
from .estimation import fit_mle, fit_pwm
from .triage_sim import (
    ALL_POLICY_KINDS,
    AttributeModel,
    Policy,
    PolicyKind,
    SimConfig,
    evaluate_policies,
    run_simulation,
)

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("evatriage")

SCHEMA = 1
SEED_ENV = "EVA_TRIAGE_SEED"

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ----------------------------------------------------------------- I/O helpers


def _fmt(v) -> str:
    return format(float(v), ".6g")


def _manifest(command: str, inputs, config: dict, seed=None) -> dict:
    m = {
        "command": command,
        "input_paths": [str(p) for p in inputs],
        "config_echo": config,
        "tool_version": __version__,
    }
    if seed is not None:
        m["seed"] = seed
    return m


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def _emit(text: str, path) -> None:
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _emit_csv(header, rows, path, manifest) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) if isinstance(v, float) else v for v in row])
    _emit(buf.getvalue(), path)
    if path is not None and str(path) != "-":
        Path(str(path) + ".manifest.json").write_text(_dump_json({"schema": SCHEMA, "manifest": manifest}), encoding="utf-8")


def _data_lines(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise CliError(f"{path}: cannot read: {exc}", EXIT_DATA)
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if stripped and not stripped.startswith("#"):
            yield lineno, stripped


def read_arrivals(path) -> ArrivalSeries:
    """Parse a ``day,count`` CSV; days strictly increasing positive integers."""
    lines = _data_lines(path)
    first = next(lines, None)
    if first is None:
        raise CliError(f"{path}: line 1: empty file, expected header 'day,count'", EXIT_DATA)
    lineno, header = first
    if [h.strip().lower() for h in header.split(",")] != ["day", "count"]:
        raise CliError(f"{path}: line {lineno}: expected header 'day,count', got {header!r}", EXIT_DATA)
    counts, last_day = [], 0
    for lineno, line in lines:
        parts = [p.strip() for p in line.split(",")]
        try:
            if len(parts) != 2:
                raise ValueError
            day, count = int(parts[0]), int(parts[1])
        except ValueError:
            raise CliError(f"{path}: line {lineno}: expected 'day,count' integers, got {line!r}", EXIT_DATA)
        if day <= last_day:
            raise CliError(f"{path}: line {lineno}: day {day} is not strictly increasing", EXIT_DATA)
        if count < 0:
            raise CliError(f"{path}: line {lineno}: negative count {count}", EXIT_DATA)
        counts.append(count)
        last_day = day
    if not counts:
        raise CliError(f"{path}: line {lineno + 1}: no data rows after header", EXIT_DATA)
    return ArrivalSeries(tuple(counts), origin_label=str(path))


def read_values(path) -> list[float]:
    """Parse a single-column ``value`` CSV."""
    lines = _data_lines(path)
    first = next(lines, None)
    if first is None:
        raise CliError(f"{path}: line 1: empty file, expected header 'value'", EXIT_DATA)
    lineno, header = first
    if header.strip().lower() != "value":
        raise CliError(f"{path}: line {lineno}: expected header 'value', got {header!r}", EXIT_DATA)
    values = []
    for lineno, line in lines:
        try:
            v = float(line)
        except ValueError:
            raise CliError(f"{path}: line {lineno}: not a number: {line!r}", EXIT_DATA)
        if not math.isfinite(v):
            raise CliError(f"{path}: line {lineno}: non-finite value", EXIT_DATA)
        values.append(v)
    return values


def read_fit(path, method=None) -> tuple[str, GevParams]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        fits = doc["fits"]
        if method is None:
            method = "MLE" if "MLE" in fits else next(iter(fits))
        p = fits[method.upper()]["params"]
        return method.upper(), GevParams(float(p["location"]), float(p["scale"]), float(p["shape"]))
    except (OSError, ValueError, KeyError, TypeError, StopIteration, ParameterError) as exc:
        raise CliError(f"{path}: not a usable fit file ({type(exc).__name__}: {exc})", EXIT_DATA)


def _float_list(text: str, flag: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise CliError(f"{flag}: expected comma-separated numbers, got {text!r}", EXIT_USAGE)
    if not vals or not all(math.isfinite(v) for v in vals):
        raise CliError(f"{flag}: expected comma-separated finite numbers, got {text!r}", EXIT_USAGE)
    return vals


# -------------------------------------------------------------------- commands


def cmd_block(args) -> None:
    if args.subperiod_days < 1 or args.per_block < 1:
        raise CliError("--subperiod-days and --per-block must be >= 1", EXIT_USAGE)
    cfg = BlockConfig(args.subperiod_days, args.per_block, args.partial)
    series = read_arrivals(args.input)
    subs = aggregate_subperiods(series, cfg)
    if not subs:
        raise CliError(
            f"{args.input}: {len(series)} day(s) do not fill one {cfg.subperiod_days}-day sub-period", EXIT_DATA
        )
    bm = extract_block_maxima(subs, cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = _manifest("block", [args.input], cfg.as_dict())
    _emit_csv(["value"], [[float(v)] for v in bm.maxima], out / "maxima.csv", manifest)
    _emit_csv(["value"], [[float(v)] for v in subs], out / "subperiods.csv", manifest)
    stats = {
        "schema": SCHEMA,
        "manifest": manifest,
        "n_days": len(series),
        "n_subperiods": bm.n_subperiods,
        "n_blocks": bm.n_blocks,
        "parent": describe(subs).as_dict(),
        "maxima": describe(bm.maxima).as_dict(),
    }
    _emit(_dump_json(stats), out / "stats.json")
    print(f"{bm.n_subperiods} sub-periods, {bm.n_blocks} block maxima -> {out}", file=sys.stderr)


def cmd_fit(args) -> None:
    data = read_values(args.maxima)
    if len(data) < 4:
        raise CliError(f"{args.maxima}: need at least 4 maxima, got {len(data)}", EXIT_DATA)
    methods = ["MLE", "PWM"] if args.method == "both" else [args.method.upper()]
    fits = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for m in methods:
            res = fit_mle(data) if m == "MLE" else fit_pwm(data)
            fits[m] = res.as_dict()
    doc = {
        "schema": SCHEMA,
        "manifest": _manifest("fit", [args.maxima], {"method": args.method}),
        "fits": fits,
    }
    _emit(_dump_json(doc), args.output)


def cmd_return_level(args) -> None:
    method, params = read_fit(args.fit, args.method)
    periods = None
    if args.periods is not None:
        periods = _float_list(args.periods, "--periods")
        if any(t <= 1 for t in periods):
            raise CliError("--periods: every return period must be > 1", EXIT_USAGE)
    elif args.grid is not None:
        lo, hi, n = args.grid
        if not (1 < lo < hi) or int(n) < 1:
            raise CliError("--grid LO HI N needs 1 < LO < HI and N >= 1", EXIT_USAGE)
        periods = [float(t) for t in np.geomspace(lo, hi, int(n))]
    curve = return_curve(params, periods)
    config = {"method": method, "params": params.as_dict(), "periods": [p.period for p in curve]}
    manifest = _manifest("return-level", [args.fit], config)
    _emit_csv(["T", "z"], [[p.period, p.level] for p in curve], args.output, manifest)


def cmd_compare(args) -> None:
    parent = read_values(args.parent)
    maxima = read_values(args.maxima)
    if args.points < 1 or not args.zmax > 0:
        raise CliError("--points must be >= 1 and --zmax > 0", EXIT_USAGE)
    if args.zmin is None:
        grid = [args.zmax * k / args.points for k in range(1, args.points + 1)]
    else:
        grid = [float(v) for v in np.linspace(args.zmin, args.zmax, args.points)]
    gev = read_fit(args.fit)[1] if args.fit else None
    normal = poisson = None
    if (args.parent_mean is None) != (args.parent_sd is None):
        raise CliError("--parent-mean and --parent-sd go together", EXIT_USAGE)
    if args.parent_mean is not None:
        try:
            normal = NormalParams(args.parent_mean, args.parent_sd)
            poisson = PoissonParams(args.parent_mean)
        except ParameterError as exc:
            raise CliError(str(exc), EXIT_USAGE)
    rows = compare_cdfs(parent, maxima, grid, gev=gev, normal=normal, poisson=poisson)
    config = {
        "zmin": args.zmin,
        "zmax": args.zmax,
        "points": args.points,
        "gev": None if gev is None else gev.as_dict(),
        "parent_mean": args.parent_mean,
        "parent_sd": args.parent_sd,
    }
    inputs = [args.parent, args.maxima] + ([args.fit] if args.fit else [])
    _emit_csv(["z", "ecdf", "gev", "normal", "poisson"], [list(r) for r in rows], args.output,
              _manifest("compare", inputs, config))


def _parse_edges(text: str) -> list[float]:
    tokens = [t.strip() for t in text.split(",") if t.strip()]
    if not tokens:
        raise CliError("--edges: no edges given", EXIT_DATA)
    if any("-" in t[1:] for t in tokens):
        ranges = []
        for t in tokens:
            lo, sep, hi = t[1:].partition("-") if t.startswith("-") else t.partition("-")
            lo = ("-" + lo) if t.startswith("-") else lo
            try:
                ranges.append((float(lo), float(hi)))
            except ValueError:
                raise CliError(f"--edges: bad range {t!r}", EXIT_DATA)
        for (a_lo, a_hi), (b_lo, b_hi) in zip(ranges, ranges[1:]):
            if b_lo < a_hi:
                print(TABLE_PVALUE_NOTE, file=sys.stderr)
                raise CliError(f"--edges: {CUMULATIVE_BINS_MESSAGE}", EXIT_DATA)
        return [hi for _, hi in ranges]
    try:
        edges = [float(t) for t in tokens]
    except ValueError:
        raise CliError(f"--edges: expected numbers, got {text!r}", EXIT_DATA)
    if any(b <= a for a, b in zip(edges, edges[1:])):
        raise CliError("--edges: edges must be strictly ascending", EXIT_DATA)
    return edges


def cmd_gof(args) -> None:
    direct = args.observed is not None or args.probs is not None
    if direct:
        if args.observed is None or args.probs is None:
            raise CliError("--observed and --probs go together", EXIT_USAGE)
        observed = _float_list(args.observed, "--observed")
        probs = _float_list(args.probs, "--probs")
        inputs, config = [], {"observed": observed, "probs": probs, "n": args.n, "dof_adjust": args.dof_adjust}
        fn = lambda: chi_squared_gof(observed, probs, n=args.n, fitted_param_count=args.dof_adjust)  # noqa: E731
    else:
        if args.maxima is None or args.fit is None or args.edges is None:
            raise CliError("gof needs MAXIMA FIT --edges, or --observed/--probs", EXIT_USAGE)
        edges = _parse_edges(args.edges)
        maxima = read_values(args.maxima)
        method, params = read_fit(args.fit)
        inputs = [args.maxima, args.fit]
        config = {"edges": edges, "dof_adjust": args.dof_adjust, "method": method, "params": params.as_dict()}
        fn = lambda: gof_from_fit(maxima, params, edges, fitted_param_count=args.dof_adjust)  # noqa: E731
    try:
        report = fn()
    except ConfigError as exc:
        raise CliError(str(exc), EXIT_USAGE)
    doc = {"schema": SCHEMA, "manifest": _manifest("gof", inputs, config), "report": report.as_dict()}
    _emit(_dump_json(doc), args.output)


def _load_sim_config(path, policy_flag, wilson_flag, seed) -> SimConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise CliError(f"{path}: cannot read: {exc}", EXIT_DATA)
    except tomllib.TOMLDecodeError as exc:
        raise CliError(f"{path}: invalid config: {exc}", EXIT_DATA)
    raw = dict(raw.get("simulation", raw))
    try:
        pol = dict(raw.pop("policy", {"kind": "FCFS"}))
        if isinstance(pol, str):
            pol = {"kind": pol}
        if policy_flag is not None:
            try:
                PolicyKind.parse(policy_flag)
            except ConfigError as exc:
                raise CliError(str(exc), EXIT_USAGE)
            pol["kind"] = policy_flag
            if PolicyKind.parse(policy_flag) is not PolicyKind.WILSON:
                pol.pop("wilson_threshold", None)
        if wilson_flag is not None:
            pol["wilson_threshold"] = wilson_flag
        policy = Policy(pol.pop("kind"), pol.pop("wilson_threshold", None))
        if pol:
            raise ConfigError(f"unknown policy field(s): {', '.join(sorted(pol))}")
        shock = raw.pop("shock_law", None)
        attrs = raw.pop("attributes", None)
        kwargs = dict(raw)
        if shock is not None:
            kwargs["shock_law"] = GevParams(float(shock["location"]), float(shock["scale"]), float(shock["shape"]))
        if attrs is not None:
            kwargs["attributes"] = AttributeModel(**attrs)
        kwargs["seed"] = seed if seed is not None else kwargs.get("seed", 0)
        return SimConfig(policy=policy, **kwargs)
    except CliError:
        raise
    except (ConfigError, ParameterError, KeyError) as exc:
        raise CliError(f"{path}: bad config: {exc}", EXIT_DATA)
    except TypeError as exc:
        raise CliError(f"{path}: bad config field: {exc}", EXIT_DATA)


def _resolve_seed(flag):
    if flag is not None:
        return flag
    env = os.environ.get(SEED_ENV)
    if env is None:
        return None
    try:
        return int(env)
    except ValueError:
        raise CliError(f"{SEED_ENV} must be an integer, got {env!r}", EXIT_USAGE)


def cmd_simulate(args) -> None:
    if args.replications < 1:
        raise CliError("--replications must be >= 1", EXIT_USAGE)
    seed = _resolve_seed(args.seed)
    cfg = _load_sim_config(args.config, args.policy, args.wilson_threshold, seed)
    manifest = _manifest("simulate", [args.config], cfg.as_dict(), seed=cfg.seed)
    if args.all_policies or args.replications > 1:
        if args.all_policies:
            thr = cfg.policy.wilson_threshold if cfg.policy.kind is PolicyKind.WILSON else args.wilson_threshold
            policies = [
                Policy(k, (0.3 if thr is None else thr) if k is PolicyKind.WILSON else None)
                for k in ALL_POLICY_KINDS
            ]
        else:
            policies = [cfg.policy]
        manifest["config_echo"]["replications"] = args.replications
        manifest["config_echo"]["policies"] = [p.as_dict() for p in policies]
        doc = {"schema": SCHEMA, "manifest": manifest, "comparison": evaluate_policies(cfg, policies, args.replications)}
        _emit(_dump_json(doc), args.output)
        return
    report = run_simulation(cfg)
    doc = {"schema": SCHEMA, "manifest": manifest, "report": report.as_dict()}
    _emit(_dump_json(doc), args.output)
    if args.trace:
        rows = [[t.day, t.arrivals, t.backlog, t.processed, t.discarded, int(t.triage)] for t in report.trace]
        _emit_csv(["day", "arrivals", "backlog", "processed", "discarded", "triage"], rows, args.trace, manifest)


# ---------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="evatriage", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("block", help="aggregate daily counts and extract block maxima")
    p.add_argument("input", help="CSV with header day,count")
    p.add_argument("--subperiod-days", type=int, default=3)
    p.add_argument("--per-block", type=int, default=4)
    p.add_argument("--partial", choices=["promote", "drop"], default="promote")
    p.add_argument("--out-dir", default=".", help="writes maxima.csv, subperiods.csv and stats.json here")
    p.set_defaults(func=cmd_block)

    p = sub.add_parser("fit", help="fit a GEV to block maxima")
    p.add_argument("maxima", help="CSV with header value")
    p.add_argument("--method", choices=["mle", "pwm", "both"], default="both")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("return-level", help="return levels from a fit file")
    p.add_argument("fit")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--periods", help="comma-separated return periods > 1")
    g.add_argument("--grid", nargs=3, type=float, metavar=("LO", "HI", "N"), help="log-spaced grid")
    p.add_argument("--method", choices=["MLE", "PWM", "mle", "pwm"])
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_return_level)

    p = sub.add_parser("compare", help="ECDF vs GEV vs Normal vs Poisson CDF table")
    p.add_argument("parent", help="CSV with header value (sub-period aggregates)")
    p.add_argument("maxima", help="CSV with header value")
    p.add_argument("--zmax", type=float, default=200.0)
    p.add_argument("--zmin", type=float)
    p.add_argument("--points", type=int, default=8)
    p.add_argument("--fit", help="use GEV parameters from this fit file instead of refitting")
    p.add_argument("--parent-mean", type=float)
    p.add_argument("--parent-sd", type=float)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gof", help="Pearson chi-squared goodness of fit")
    p.add_argument("maxima", nargs="?")
    p.add_argument("fit", nargs="?")
    p.add_argument("--edges", help="ascending bin edges, e.g. 25,50,75")
    p.add_argument("--dof-adjust", type=int, default=3, help="fitted parameters subtracted from the dof")
    p.add_argument("--observed", help="observed counts per disjoint bin (direct mode)")
    p.add_argument("--probs", help="expected probabilities per bin (direct mode)")
    p.add_argument("--n", type=int)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_gof)

    p = sub.add_parser("simulate", help="run the triage simulator")
    p.add_argument("config", help="TOML scenario file")
    p.add_argument("--policy", help=", ".join(k.value for k in ALL_POLICY_KINDS))
    p.add_argument("--wilson-threshold", type=float)
    p.add_argument("--replications", type=int, default=1)
    p.add_argument("--seed", type=int, help=f"overrides {SEED_ENV} and the config file")
    p.add_argument("--all-policies", action="store_true")
    p.add_argument("--trace", help="write the per-day trace CSV here")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        args.func(args)
    except CliError as exc:
        print(f"evatriage {args.command}: {exc}", file=sys.stderr)
        return exc.code
    except NumericalFailure as exc:
        print(f"evatriage {args.command}: {exc}; best point {exc.best_point}", file=sys.stderr)
        return EXIT_NUMERIC
    except ParameterError as exc:
        print(f"evatriage {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ConfigError, EvaError) as exc:
        print(f"evatriage {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
