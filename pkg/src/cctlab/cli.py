"""Command-line entry point.

Every command writes its artifact (CSV or JSON) to ``--output`` or stdout.
With ``--output`` a manifest ``<output>.manifest.json`` records the full
configuration, the library version and the wall time; passing that manifest
back through ``--config`` reruns the same job.

Exit status: 0 success, 1 invalid configuration, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from ._parallel import default_workers
from .combiners import Method, TestOutcome, combine, sanitize_pvalues
from .copulas import CopulaSpec, Divergent, Family, FixedM, condition_decay_check
from .correlation import CorrelationSpec, MeanSpec, Model
from .pathway import GeneSet, load_expression, load_gene_set, pathway_test
from .simulation import (CopulaScenario, MvnScenario, power_study, size_check,
                         tail_calibration, tune_magnitude)

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2

COMBINE_METHODS = ("cct", "minp", "fisher", "pearson", "stouffer", "edgington")

STOCHASTIC = {"calibrate-tail", "size", "power", "analyze"}

_MVN_MODELS = {"equal-corr": Model.EQUAL_CORR, "spiked": Model.SPIKED_EIGEN,
               "ar1": Model.AR1, "poly-decay": Model.POLY_DECAY}
_COPULA_MODELS = {"fgm": Family.FGM, "amh": Family.AMH}


class ConfigError(ValueError):
    """Invalid command-line or config-file input."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


# Config files ----------------------------------------------------------------

def read_config(path) -> dict:
    """``key = value`` lines, or a manifest JSON (its ``config`` block is used)."""
    path = Path(path)
    text = path.read_text()
    if text.lstrip().startswith("{"):
        data = json.loads(text)
        cfg = data.get("config", data)
        return {k.replace("-", "_"): v for k, v in cfg.items() if k != "command"}
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = val
    return out


# Parsers ----------------------------------------------------------------------

def _float_list(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    return [float(x) for x in str(text).replace(";", ",").split(",") if x.strip()]


def _int_list(text) -> list[int]:
    return [int(round(x)) for x in _float_list(text)]


def _common(p: argparse.ArgumentParser, stochastic: bool = True):
    p.add_argument("--config", help="key = value file or a previous manifest")
    p.add_argument("--output", "-o", help="artifact path (stdout if omitted)")
    p.add_argument("--format", choices=["csv", "json"], default=None)
    if stochastic:
        p.add_argument("--seed", type=int, help="required: integer seed")
        p.add_argument("--workers", type=int, default=default_workers())


def _scenario_args(p: argparse.ArgumentParser):
    p.add_argument("--model", help="equal-corr | spiked | ar1 | poly-decay | fgm | amh")
    p.add_argument("--m", type=int)
    p.add_argument("--rho", type=float)
    p.add_argument("--a", type=float)
    p.add_argument("--d", type=int)
    p.add_argument("--theta", type=float)
    p.add_argument("--spike-seed", type=int, default=0,
                   help="seed of the random basis for the spiked model")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cctlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("calibrate-tail", help="empirical CCT tail vs the Cauchy tail")
    _common(p)
    _scenario_args(p)
    p.add_argument("--replicates", type=int, default=100_000)
    p.add_argument("--probe", type=float, action="append", default=[],
                   help="extra t at which to report the tail (JSON output)")

    p = sub.add_parser("size", help="empirical size of the Cauchy-calibrated CCT")
    _common(p)
    _scenario_args(p)
    p.add_argument("--alpha", type=float, action="append")
    p.add_argument("--replicates", type=int, default=100_000)

    p = sub.add_parser("power", help="CCT vs MAX power over a grid of m")
    _common(p)
    p.add_argument("--model", help="ar1 | poly-decay")
    p.add_argument("--rho", type=float)
    p.add_argument("--a", type=float)
    p.add_argument("--m-grid", default="1000,1100,1200,1300,1400,1500")
    p.add_argument("--support", type=float, default=0.1)
    p.add_argument("--magnitude", type=float, help="signal size (default sqrt(1.2 log m))")
    p.add_argument("--tune", type=float, metavar="POWER",
                   help="tune the magnitude so CCT power at the first m equals POWER")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--replicates", type=int, default=5000)
    p.add_argument("--max-calibration", choices=["gumbel", "monte_carlo"], default="gumbel")

    p = sub.add_parser("check-copula", help="decay certificate for a bivariate copula")
    _common(p, stochastic=False)
    p.add_argument("--family", help="product | fgm | cuadras-auge | normal | amh | survival")
    p.add_argument("--theta", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--regime", choices=["fixed", "divergent"], default="fixed")
    p.add_argument("--m", type=int, default=10)
    p.add_argument("--gamma", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--w-i", type=float, default=None,
                   help="weight of the first p-value (default 1/m)")
    p.add_argument("--w-j", type=float, default=None,
                   help="weight of the second p-value (default 1/m)")
    p.add_argument("--t-grid", default="1e2,1e3,1e4,1e5,1e6")

    p = sub.add_parser("analyze", help="gene-set test: Wilcoxon p-values, CCT and MINP")
    _common(p)
    p.add_argument("--expression", help="genes x samples CSV/TSV")
    p.add_argument("--labels", help="sample_id,group file")
    p.add_argument("--gene-set", help="file with one gene id per line")
    p.add_argument("--expression-format", choices=["csv", "tsv"], default=None)
    p.add_argument("--weights", default="equal")
    p.add_argument("--replicates", type=int, default=2000)
    p.add_argument("--p-ceiling", type=float, default=None)
    p.add_argument("--per-gene-csv", help="also write gene_id,p_value here")

    p = sub.add_parser("combine", help="combine p-values from a file")
    _common(p, stochastic=False)
    p.add_argument("--pvalues", help="one p-value per line or a CSV with column p")
    p.add_argument("--method", default="cct", help=", ".join(COMBINE_METHODS))
    p.add_argument("--weights", default="equal", help="'equal' or a file of weights")
    p.add_argument("--seed", type=int, help="needed for --method minp")
    p.add_argument("--replicates", type=int, default=2000)
    return parser


def parse_args(argv) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        raise ConfigError("a command is required; see --help")
    if args.config:
        cfg = read_config(args.config)
        subparser = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in subparser._actions}
        unknown = sorted(set(cfg) - known - {"command"})
        if unknown:
            raise ConfigError(f"unknown config key(s) for {args.command}: {unknown}")
        typed = {}
        for action in subparser._actions:
            if cfg.get(action.dest) is None or action.dest in ("config", "command"):
                continue
            val = cfg[action.dest]
            try:
                if isinstance(action, argparse._AppendAction):
                    val = _float_list(val) if not isinstance(val, list) else val
                elif isinstance(val, str) and action.type is not None:
                    val = action.type(val)
            except ValueError:
                raise ConfigError(f"config key {action.dest!r}: bad value {val!r}") from None
            if action.choices is not None and val not in action.choices:
                raise ConfigError(f"config key {action.dest!r}: {val!r} not in {action.choices}")
            typed[action.dest] = val
        subparser.set_defaults(**typed)
        args = parser.parse_args(argv)
    if args.command in STOCHASTIC and args.seed is None:
        raise ConfigError(f"{args.command} is stochastic: --seed is required")
    return args


# File helpers --------------------------------------------------------------------

def read_pvalue_file(path) -> np.ndarray:
    """One value per line, or a CSV whose header has a column named ``p``."""
    path = Path(path)
    lines = path.read_text().splitlines()
    if not any(ln.strip() for ln in lines):
        raise ConfigError(f"{path}: no p-values")
    first = next(ln for ln in lines if ln.strip())
    col = None
    start = 0
    if "," in first or first.strip().lower() == "p":
        header = [h.strip().lower() for h in next(csv.reader([first]))]
        if "p" in header:
            col = header.index("p")
            start = lines.index(first) + 1
    out = []
    for lineno, line in enumerate(lines[start:], start=start + 1):
        if not line.strip():
            continue
        cell = next(csv.reader([line]))[col] if col is not None else line
        try:
            out.append(float(cell))
        except (ValueError, IndexError):
            raise ConfigError(f"{path}:{lineno}: cannot parse p-value {line.strip()!r}") from None
    if not out:
        raise ConfigError(f"{path}: no p-values")
    return np.array(out)


def combine_file(path, method: str = "cct", weights="equal", *, seed=None,
                 replicates: int = 2000) -> TestOutcome:
    p = read_pvalue_file(path)
    sanitize_pvalues(p)
    if isinstance(weights, str) and weights.lower() == "equal":
        w = None
    elif isinstance(weights, str):
        w = read_pvalue_file(weights)
    else:
        w = weights
    return combine(p, method, w, replicates=replicates, seed=seed)


# Commands ------------------------------------------------------------------------

def _scenario(args):
    if args.model is None or args.m is None:
        raise ConfigError("--model and --m are required")
    key = args.model.lower().replace("_", "-")
    if key in _MVN_MODELS:
        return MvnScenario(CorrelationSpec(_MVN_MODELS[key], args.m, rho=args.rho, a=args.a,
                                           d=args.d, seed=args.spike_seed))
    if key in _COPULA_MODELS:
        if args.theta is None:
            raise ConfigError("--theta is required for copula models")
        return CopulaScenario(_COPULA_MODELS[key], args.theta, args.m)
    raise ConfigError(f"unknown model {args.model!r}")


def _cmd_calibrate_tail(args):
    scen = _scenario(args)
    if args.replicates < 10_000:
        raise ConfigError("--replicates must be at least 10000")
    return lambda: tail_calibration(scen, args.replicates, args.seed, workers=args.workers,
                                    probe_t=args.probe), "csv"


def _cmd_size(args):
    scen = _scenario(args)
    alphas = args.alpha or [0.05]
    for a in alphas:
        if not 0 < a < 1:
            raise ConfigError(f"alpha {a} is outside (0, 1)")

    def run():
        return size_check(scen, alphas, args.replicates, args.seed, workers=args.workers)
    return run, "csv"


def _cmd_power(args):
    key = (args.model or "").lower().replace("_", "-")
    if key not in ("ar1", "poly-decay"):
        raise ConfigError("power needs --model ar1 or poly-decay")
    grid = _int_list(args.m_grid)
    if not grid:
        raise ConfigError("--m-grid is empty")
    corr = CorrelationSpec(_MVN_MODELS[key], grid[0], rho=args.rho, a=args.a)
    MeanSpec(args.support, args.magnitude)
    if args.tune is not None and not 0 < args.tune < 1:
        raise ConfigError("--tune must lie in (0, 1)")

    def run():
        mag = args.magnitude
        if args.tune is not None:
            mag = tune_magnitude(corr, args.support, args.alpha, args.replicates, args.seed,
                                 target=args.tune, workers=args.workers)
        return power_study(corr, MeanSpec(args.support, mag), grid, args.alpha,
                           args.replicates, args.seed, workers=args.workers,
                           max_calibration=args.max_calibration)
    return run, "csv"


def _cmd_check_copula(args):
    if args.family is None:
        raise ConfigError("--family is required")
    fam = Family.parse(args.family)
    theta = args.rho if fam is Family.NORMAL and args.rho is not None else args.theta
    if theta is None:
        theta = 0.0 if fam is Family.PRODUCT else None
    if theta is None:
        raise ConfigError("--theta (or --rho for the normal family) is required")
    spec = CopulaSpec(fam, theta)
    if args.regime == "fixed":
        rule = FixedM(args.m)
    else:
        rule = Divergent(gamma=args.gamma, beta=args.beta)
    w_i, w_j = args.w_i, args.w_j
    grid = np.array(_float_list(args.t_grid))
    return lambda: condition_decay_check(spec, w_i, w_j, rule, grid), "csv"


def _cmd_analyze(args):
    for name in ("expression", "labels", "gene_set"):
        if getattr(args, name) is None:
            raise ConfigError(f"--{name.replace('_', '-')} is required")
    data = load_expression(args.expression, args.labels, args.expression_format)
    gset: GeneSet = load_gene_set(args.gene_set)
    weights = args.weights if args.weights.lower() == "equal" else read_pvalue_file(args.weights)

    def run():
        rep = pathway_test(data, gset, weights, args.replicates, args.seed,
                           workers=args.workers, p_ceiling=args.p_ceiling)
        if args.per_gene_csv:
            Path(args.per_gene_csv).write_text(rep.per_gene_csv())
        return rep
    return run, "json"


def _cmd_combine(args):
    if args.pvalues is None:
        raise ConfigError("--pvalues is required")
    try:
        method = Method(args.method.upper())
    except ValueError:
        method = None
    if method is None or method is Method.MAX:
        raise ConfigError(f"unknown method {args.method!r}; choose from {COMBINE_METHODS}")
    if method is Method.MINP and args.seed is None:
        raise ConfigError("--method minp needs --seed")
    p = read_pvalue_file(args.pvalues)
    sanitize_pvalues(p)
    w = None if args.weights.lower() == "equal" else read_pvalue_file(args.weights)

    def run():
        return combine(p, method.value, w, replicates=args.replicates, seed=args.seed)
    return run, "json"


COMMANDS: dict[str, Callable] = {
    "calibrate-tail": _cmd_calibrate_tail,
    "size": _cmd_size,
    "power": _cmd_power,
    "check-copula": _cmd_check_copula,
    "analyze": _cmd_analyze,
    "combine": _cmd_combine,
}


def _render(result, fmt: str) -> str:
    if fmt == "json":
        if hasattr(result, "to_json"):
            return result.to_json() + ("" if result.to_json().endswith("\n") else "\n")
        raise ConfigError("this command has no JSON artifact")
    if hasattr(result, "to_csv"):
        return result.to_csv()
    raise ConfigError("this command has no CSV artifact")


def _config_echo(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("config",)}


def _check_writable(path: str | None):
    if path is None:
        return
    parent = Path(path).resolve().parent
    if not parent.is_dir():
        raise ConfigError(f"output directory {parent} does not exist")


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        args = parse_args(argv)
        job, default_fmt = COMMANDS[args.command](args)
        fmt = args.format or default_fmt
        _check_writable(args.output)
        _check_writable(getattr(args, "per_gene_csv", None))
    except (ConfigError, ValueError, OSError) as exc:
        print(f"cctlab: error: {exc}", file=stderr)
        return EXIT_INVALID
    start = time.perf_counter()
    try:
        result = job()
        body = _render(result, fmt)
        wall = time.perf_counter() - start
        if args.output:
            Path(args.output).write_text(body)
            manifest = {"command": args.command, "config": _config_echo(args),
                        "version": __version__, "seed": getattr(args, "seed", None),
                        "artifact": str(args.output), "format": fmt,
                        "wall_time_s": round(wall, 6)}
            Path(str(args.output) + ".manifest.json").write_text(
                json.dumps(manifest, indent=2, default=str) + "\n")
        else:
            stdout.write(body)
    except ConfigError as exc:
        print(f"cctlab: error: {exc}", file=stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - any failure past validation is a runtime error
        print(f"cctlab: runtime error: {type(exc).__name__}: {exc}", file=stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
