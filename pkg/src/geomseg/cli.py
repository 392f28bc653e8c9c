"""Command-line interface: ``geomseg {detect,simulate,trace,bench}``.

Exit codes: 0 success, 2 malformed input or unwritable output, 3 data
outside the model domain, 4 invalid flags.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

from .dp import op_solve, pelt_solve
from .geomfpop import PruningConfig, geomfpop_solve
from .geometry import UnsupportedOperatorError
from .model_cost import (
    CostModel,
    DomainError,
    InputFormatError,
    ZeroScaleError,
    default_penalty,
    estimate_sigma,
    load_csv,
)
from . import simbench

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DOMAIN = 3
EXIT_FLAGS = 4

log = logging.getLogger("geomseg")


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_FLAGS, f"{self.prog}: error: {message}\n")


def _env_seed() -> int:
    raw = os.environ.get("GEOMSEG_SEED")
    if raw is None or raw == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise CliError(EXIT_FLAGS, f"GEOMSEG_SEED must be an integer, got {raw!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _str_list(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", choices=["gaussian", "poisson", "negbin"], default="gaussian")
    p.add_argument("--phi", type=float, default=None, help="negative binomial dispersion")


def _add_grid_flags(p: argparse.ArgumentParser, trace: bool) -> None:
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--p-list", type=_int_list, default=[2])
    p.add_argument("--configs", type=_str_list, default=["pelt", "geom-r:all/all"] if trace else
                   ["pelt", "geom-r:last-random/random"])
    p.add_argument("--replicates", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="geomseg", description="Exact multivariate change-point detection.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = sub.add_parser("detect", help="segment a CSV series")
    d.add_argument("input", help="CSV file, one row per time point")
    _add_model_flags(d)
    d.add_argument("--sigma", type=float, default=None)
    d.add_argument("--beta", type=float, default=None)
    d.add_argument("--pruning", choices=["op", "pelt", "geom-s", "geom-r"], default="geom-r")
    d.add_argument("--future", choices=["all", "last", "last-random"], default="last-random")
    d.add_argument("--past", choices=["all", "empty", "random"], default="random")
    d.add_argument("--seed", type=int, default=None)
    d.add_argument("--trace-out", default=None, help="write per-step diagnostics CSV here")
    d.add_argument("--out", default=None, help="write the JSON result here instead of stdout")

    s = sub.add_parser("simulate", help="write a simulated series")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--p", type=int, default=1)
    s.add_argument("--segments", type=int, default=1)
    s.add_argument("--amplitude", type=float, default=1.0)
    s.add_argument("--affected-dims", type=int, default=None)
    _add_model_flags(s)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--out", required=True, help="data CSV path; truth goes to <out>.truth.json")

    t = sub.add_parser("trace", help="live-candidate traces on noise")
    t.add_argument("--n", type=int, default=10_000)
    _add_grid_flags(t, trace=True)

    b = sub.add_parser("bench", help="runtime grid or segment-count sweep")
    b.add_argument("--n-list", type=_int_list, default=[10, 12], help="exponents k for n = 2**k")
    b.add_argument("--time-cap", type=float, default=180.0)
    b.add_argument("--segments-list", type=_int_list, default=None,
                   help="switch to a segment sweep at fixed --n")
    b.add_argument("--n", type=int, default=100_000, help="length for the segment sweep")
    b.add_argument("--affected-dims", type=int, default=None)
    _add_grid_flags(b, trace=False)
    return parser


def _model(args) -> CostModel:
    try:
        if args.model == "negbin":
            if args.phi is None:
                raise CliError(EXIT_FLAGS, "--model negbin requires --phi")
            return CostModel.negbin(args.phi)
        if args.phi is not None:
            raise CliError(EXIT_FLAGS, "--phi only applies to --model negbin")
        return CostModel(args.model)
    except ValueError as exc:
        raise CliError(EXIT_FLAGS, str(exc)) from None


def _write_text(path: str | Path, text: str) -> None:
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise CliError(EXIT_INPUT, f"cannot write {path}: {exc}") from None


def cmd_detect(args) -> int:
    model = _model(args)
    if args.pruning == "geom-s" and model.is_count:
        raise CliError(EXIT_FLAGS, f"--pruning geom-s supports only the gaussian model, not {args.model}")
    if args.sigma is not None and not args.sigma > 0:
        raise CliError(EXIT_FLAGS, "--sigma must be positive")
    if args.beta is not None and not (args.beta > 0 and math.isfinite(args.beta)):
        raise CliError(EXIT_FLAGS, "--beta must be positive and finite")
    seed = args.seed if args.seed is not None else _env_seed()
    try:
        data = load_csv(args.input, model)
    except FileNotFoundError:
        raise CliError(EXIT_INPUT, f"input file not found: {args.input}") from None
    except (InputFormatError, UnicodeDecodeError, OSError) as exc:
        raise CliError(EXIT_INPUT, f"malformed input: {exc}") from None
    except DomainError as exc:
        raise CliError(EXIT_DOMAIN, f"domain violation: {exc}") from None

    sigma = args.sigma
    if args.beta is not None:
        if sigma is not None:
            log.warning("both --beta and --sigma given; using --beta and ignoring --sigma")
            sigma = None
        beta = float(args.beta)
    else:
        if data.n < 2:
            raise CliError(EXIT_INPUT, "the default penalty needs at least two rows; pass --beta")
        if sigma is None:
            try:
                sigma = estimate_sigma(data)
            except ZeroScaleError as exc:
                raise CliError(EXIT_INPUT, f"{exc}; pass --sigma or --beta") from None
        beta = default_penalty(data.n, data.p, sigma)

    if args.pruning == "op":
        seg = op_solve(data, beta)
    elif args.pruning == "pelt":
        seg = pelt_solve(data, beta)
    else:
        cfg = PruningConfig(kind=args.pruning[-1], future=args.future, past=args.past, seed=seed)
        try:
            seg = geomfpop_solve(data, beta, cfg)
        except UnsupportedOperatorError as exc:
            raise CliError(EXIT_FLAGS, str(exc)) from None
    if args.trace_out:
        if seg.diagnostics is None:
            raise CliError(EXIT_FLAGS, "--trace-out needs a pruned solver (not --pruning op)")
        try:
            seg.diagnostics.to_csv(args.trace_out)
        except OSError as exc:
            raise CliError(EXIT_INPUT, f"cannot write {args.trace_out}: {exc}") from None
    result = {
        "schema_version": SCHEMA_VERSION,
        "changepoints": [int(c) for c in seg.changepoints],
        "segment_count": seg.segment_count,
        "total_cost": seg.total_cost,
        "beta_used": beta,
        "sigma_used": sigma,
        "algorithm": seg.algorithm,
        "wall_time": seg.wall_time,
    }
    text = json.dumps(result, indent=2) + "\n"
    if args.out:
        _write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_simulate(args) -> int:
    model = _model(args)
    seed = args.seed if args.seed is not None else _env_seed()
    try:
        spec = simbench.SimSpec(args.n, args.p, args.segments, model, args.amplitude, args.affected_dims, seed)
    except ValueError as exc:
        raise CliError(EXIT_FLAGS, str(exc)) from None
    data, bounds = simbench.generate(spec)
    out = Path(args.out)
    try:
        with open(out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"y{k + 1}" for k in range(spec.p)])
            fmt = (lambda v: str(int(v))) if model.is_count else repr
            for row in data.values:
                writer.writerow([fmt(float(v)) for v in row])
    except OSError as exc:
        raise CliError(EXIT_INPUT, f"cannot write {out}: {exc}") from None
    truth = {
        "schema_version": SCHEMA_VERSION,
        "changepoints": [int(b) for b in bounds],
        "n": spec.n,
        "p": spec.p,
        "segments": spec.segments,
        "model": model.kind.value,
        "phi": model.phi,
        "amplitude": spec.amplitude,
        "affected_dims": spec.k,
        "seed": seed,
    }
    _write_text(f"{out}.truth.json", json.dumps(truth, indent=2) + "\n")
    return EXIT_OK


def _check_grid(args) -> None:
    if not args.p_list:
        raise CliError(EXIT_FLAGS, "--p-list must not be empty")
    if any(p < 1 for p in args.p_list):
        raise CliError(EXIT_FLAGS, "--p-list entries must be positive")
    if not args.configs:
        raise CliError(EXIT_FLAGS, "--configs must not be empty")
    for label in args.configs:
        try:
            simbench.parse_algorithm(label)
        except ValueError as exc:
            raise CliError(EXIT_FLAGS, str(exc)) from None
    if args.replicates is not None and args.replicates < 1:
        raise CliError(EXIT_FLAGS, "--replicates must be positive")
    if args.jobs < 1:
        raise CliError(EXIT_FLAGS, "--jobs must be positive")


def _prepare_out(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise CliError(EXIT_INPUT, f"output directory {out} is not writable: {exc}") from None
    return out


def cmd_trace(args) -> int:
    _check_grid(args)
    if any(simbench.parse_algorithm(c) == "op" for c in args.configs):
        raise CliError(EXIT_FLAGS, "op has no candidate trace; drop it from --configs")
    if args.n < 2:
        raise CliError(EXIT_FLAGS, "--n must be at least 2")
    out = _prepare_out(args.out)
    seed = args.seed if args.seed is not None else _env_seed()
    result = simbench.candidate_trace_experiment(
        args.p_list, args.n, args.replicates or 20, args.configs, seed=seed
    )
    summary = {
        "schema_version": SCHEMA_VERSION,
        "experiment": "trace",
        "n": args.n,
        "replicates": result.replicates,
        "seed": seed,
        "final": [
            {"p": p, "algorithm": label, "mean_percent_retained": float(result.percentage(p, label)[-1])}
            for p, label in sorted(result.counts)
        ],
    }
    _write(out, "trace", result.rows(), summary)
    return EXIT_OK


def cmd_bench(args) -> int:
    _check_grid(args)
    if not args.time_cap > 0:
        raise CliError(EXIT_FLAGS, "--time-cap must be positive")
    out = _prepare_out(args.out)
    seed = args.seed if args.seed is not None else _env_seed()
    reps = args.replicates or 3
    if args.segments_list is not None:
        if not args.segments_list or any(s < 1 or s > args.n for s in args.segments_list):
            raise CliError(EXIT_FLAGS, "--segments-list entries must lie in 1..n")
        records, cells = simbench.segments_sweep(
            args.n, args.segments_list, args.p_list, args.configs, affected_dims=args.affected_dims,
            replicates=reps, time_cap=args.time_cap, seed=seed, jobs=args.jobs,
        )
        experiment = "segments"
    else:
        if not args.n_list or any(k < 1 or k > 30 for k in args.n_list):
            raise CliError(EXIT_FLAGS, "--n-list entries must be exponents in 1..30")
        records, cells = simbench.runtime_grid(
            args.n_list, args.p_list, args.configs, args.time_cap, replicates=reps, seed=seed, jobs=args.jobs,
        )
        experiment = "runtime"
    summary = {
        "schema_version": SCHEMA_VERSION,
        "experiment": experiment,
        "time_cap": args.time_cap,
        "replicates": reps,
        "seed": seed,
        "cells": simbench.cell_rows(cells),
    }
    _write(out, experiment, simbench.record_rows(records), summary)
    return EXIT_OK


def _write(out: Path, experiment: str, rows, summary) -> None:
    try:
        paths = simbench.write_experiment(out, experiment, rows, summary)
    except OSError as exc:
        raise CliError(EXIT_INPUT, f"cannot write results to {out}: {exc}") from None
    for path in paths:
        print(path)


_COMMANDS = {"detect": cmd_detect, "simulate": cmd_simulate, "trace": cmd_trace, "bench": cmd_bench}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except CliError as exc:
        print(f"geomseg: error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    raise SystemExit(main())
