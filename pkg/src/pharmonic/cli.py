"""Command-line front end.

    pharmonic exponents --p 4 --n 1 --kmax 6 [--json]
    pharmonic threshold --n 1
    pharmonic build --preset worst-case --out series.json
    pharmonic verify --series series.json --out runs/ladder
    pharmonic verify --aronsson --center 1,0 --out runs/aronsson
    pharmonic oracle --preset worst-case --grid 65 --mode both --out runs/oracle

Exit codes: 0 success or verified, 2 bad input, 3 bracket failure,
4 verification negative, 5 solver failure.  ``--config file.json`` supplies
option values (keys are option names with dashes or underscores); explicit
flags win.  ``PHARM_THREADS`` caps worker threads (0 = sequential).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .exponents import (
    BracketError,
    DegenerateExponentError,
    PLaplaceParams,
    criticality_ratio,
    exponent_table,
    gamma_ratio,
    solve_threshold,
)
from .hodograph import (
    HodographSeries,
    SeriesFormatError,
    dump_series,
    image_radius,
    load_series,
    series_to_dict,
)
from .meanvalue import SeriesField, _json_safe, aronsson_field, decay_ladder
from .oracle import (
    boundary_grid,
    compare_fields,
    solve_dirichlet_amv,
    solve_dirichlet_variational,
)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_BRACKET = 3
EXIT_NEGATIVE = 4
EXIT_SOLVER = 5

PRESETS = {
    "harmonic": (2.0, 1, {2: 1.0}),
    "worst-case": (4.0, 1, {2: 1.0, 3: 0.3}),
    "n2": (4.0, 2, {3: 1.0, 4: 0.2}),
}


class InputError(Exception):
    """Invalid command-line input; reported with exit status 2."""


def _dumps(obj) -> str:
    return json.dumps(_json_safe(obj), indent=2, sort_keys=True)


def _threads() -> int:
    raw = os.environ.get("PHARM_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise InputError(f"PHARM_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise InputError("PHARM_THREADS must be >= 0")
    return n


def _parse_point(text: str) -> complex:
    try:
        x, y = (float(v) for v in str(text).split(","))
    except ValueError:
        raise InputError(f"expected a point as 'x,y', got {text!r}") from None
    return complex(x, y)


def _parse_mode(text: str) -> tuple[int, complex]:
    # k=re or k=re,im
    try:
        k, rest = text.split("=")
        parts = [float(v) for v in rest.split(",")]
        if len(parts) == 1:
            parts.append(0.0)
        if len(parts) != 2:
            raise ValueError
        return int(k), complex(*parts)
    except ValueError:
        raise InputError(f"expected a mode as 'k=re[,im]', got {text!r}") from None


def _series_from_args(args) -> HodographSeries:
    if getattr(args, "series", None):
        try:
            return load_series(args.series)
        except FileNotFoundError:
            raise InputError(f"series file not found: {args.series}") from None
        except SeriesFormatError as exc:
            raise InputError(f"malformed series file {args.series}: {exc}") from None
    if getattr(args, "preset", None):
        p, n, modes = PRESETS[args.preset]
        if getattr(args, "p", None) is not None:
            p = args.p
        try:
            return HodographSeries.from_modes(p, n, modes, getattr(args, "trust_radius", None))
        except ValueError as exc:
            raise InputError(str(exc)) from None
    raise InputError("give a series with --series FILE or --preset NAME")


def cmd_exponents(args) -> int:
    if args.p is None or args.n is None:
        raise InputError("--p and --n are required")
    try:
        params = PLaplaceParams(args.p, args.n)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    if args.kmax < params.n + 1:
        raise InputError(f"--kmax must be >= n+1={params.n + 1}")
    table = exponent_table(params, args.kmax)
    try:
        ratio = criticality_ratio(params)
    except DegenerateExponentError:
        ratio = math.inf
    g = gamma_ratio(params)
    alpha, beta = (params.p - 2) / (params.p + args.dim), (2 + args.dim) / (params.p + args.dim)
    if args.json:
        doc = table.to_dict()
        doc.update(
            criticality_ratio=ratio,
            gamma_ratio=g,
            holder_c2=g > 1,
            dimension=args.dim,
            mean_value_weights={"midrange": alpha, "mean": beta},
        )
        print(_dumps(doc))
        return EXIT_OK
    print(f"p = {params.p:g}   n = {params.n}")
    print(f"{'k':>4}  {'lambda_k':>22}  {'epsilon_k':>22}")
    for row in table.rows:
        print(f"{row.k:>4}  {row.lambda_k:>22.16f}  {row.epsilon_k:>22.16f}")
    print(f"criticality ratio lambda_{params.n + 2}/lambda_{params.n + 1}^2: {ratio:.6f}")
    print(f"n/gamma_n: {g:.6f}")
    print(f"Hoelder continuous second derivatives: {'yes' if g > 1 else 'no'}")
    print(f"mean value weights in dimension {args.dim}: midrange {alpha:.6f}, mean {beta:.6f}")
    return EXIT_OK


def cmd_threshold(args) -> int:
    if args.n not in (1, 2):
        raise InputError(f"threshold supports --n 1 or --n 2, got {args.n}")
    if not args.tol > 0:
        raise InputError("--tol must be positive")
    try:
        result = solve_threshold(args.n, args.tol)
    except BracketError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BRACKET
    doc = {"n": args.n, **result.to_dict()}
    print(_dumps(doc))
    return EXIT_OK


def cmd_build(args) -> int:
    if args.preset:
        series = _series_from_args(args)
    else:
        if args.p is None or args.n is None or not args.mode:
            raise InputError("build needs --preset or all of --p, --n and --mode")
        modes = dict(_parse_mode(m) for m in args.mode)
        try:
            series = HodographSeries.from_modes(args.p, args.n, modes, args.trust_radius)
        except ValueError as exc:
            raise InputError(str(exc)) from None
    if args.out:
        dump_series(series, args.out)
    else:
        print(_dumps(series_to_dict(series)))
    return EXIT_OK


def _validate_ladder(args):
    if args.rungs < 4:
        raise InputError("--rungs must be >= 4")
    if not 0 < args.ratio < 1:
        raise InputError("--ratio must lie in (0, 1)")
    if args.resolution < 16:
        raise InputError("--resolution must be >= 16")
    if args.eps_max is not None and not args.eps_max > 0:
        raise InputError("--eps-max must be positive")


def cmd_verify(args) -> int:
    _validate_ladder(args)
    center = _parse_point(args.center)
    workers = _threads()
    if args.aronsson:
        field, p = aronsson_field, math.inf
        eps_max = args.eps_max if args.eps_max is not None else 0.1
        label = "aronsson"
    else:
        series = _series_from_args(args)
        field = SeriesField(series, main_only=args.main_only)
        p = series.p
        eps_max = args.eps_max if args.eps_max is not None else 0.5 * image_radius(series)
        if abs(center) + eps_max > image_radius(series):
            raise InputError("disks leave the image of the trust disk; lower --eps-max or move --center")
        label = "series"
    report = decay_ladder(field, p, center, eps_max, args.rungs, args.ratio,
                          args.resolution, workers=workers)
    verified = report.floor_hit or (report.reliable and report.fitted_exponent > 2)
    summary = report.summary()
    summary.update(field=label, p=p, verified=verified)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        report.write_csv(out.with_suffix(".csv"))
        with open(out.with_suffix(".json"), "w") as fh:
            fh.write(_dumps(summary) + "\n")
    print(_dumps(summary))
    return EXIT_OK if verified else EXIT_NEGATIVE


def cmd_oracle(args) -> int:
    if args.grid < 17 or args.grid % 2 == 0:
        raise InputError("--grid must be odd and >= 17 so the critical point sits on a node")
    if args.eps_nodes < 2:
        raise InputError("--eps-nodes must be >= 2")
    series = _series_from_args(args)
    p = args.p if args.p is not None else series.p
    if not p > 1:
        raise InputError("p must satisfy p > 1")
    modes = ["variational", "amv"] if args.mode == "both" else [args.mode]
    if "amv" in modes and p < 2:
        raise InputError("the amv solver requires p >= 2")
    field = SeriesField(series)
    half = 0.9 * image_radius(series) / math.sqrt(2)
    band = args.eps_nodes if "amv" in modes else 1
    boundary = boundary_grid(field, 0j, half, args.grid, band=band)
    reference = boundary_grid(field, 0j, half, args.grid, band=band, fill="exact")

    doc = {"grid": args.grid, "p": p, "half_width": half, "spacing": boundary.spacing,
           "band": band, "solvers": {}}
    fields = {"reference": reference}
    failed = False
    for mode in modes:
        if mode == "variational":
            sol, rep = solve_dirichlet_variational(boundary, p, tol=args.tol)
        else:
            sol, rep = solve_dirichlet_amv(boundary, p, args.eps_nodes, tol=args.amv_tol)
        fields[mode] = sol
        max_abs, rel = compare_fields(sol, reference)
        doc["solvers"][mode] = {
            "iterations": rep.iterations,
            "final_residual": rep.final_residual,
            "energy": rep.energy,
            "converged": rep.converged,
            "vs_hodograph": {"max_abs": max_abs, "rel_l2": rel},
        }
        failed |= not rep.converged
    if len(modes) == 2:
        max_abs, rel = compare_fields(fields["amv"], fields["variational"])
        doc["amv_vs_variational"] = {"max_abs": max_abs, "rel_l2": rel}
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        for name, grid in fields.items():
            grid.write_csv(out.parent / f"{out.name}_{name}.csv")
        with open(out.with_suffix(".json"), "w") as fh:
            fh.write(_dumps(doc) + "\n")
    print(_dumps(doc))
    return EXIT_SOLVER if failed else EXIT_OK


def _add_series_source(sp):
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--series", help="series JSON file")
    g.add_argument("--preset", choices=sorted(PRESETS))
    sp.add_argument("--trust-radius", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pharmonic", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="JSON file with option values")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("exponents", help="exponent table and regularity verdicts")
    sp.add_argument("--p", type=float)
    sp.add_argument("--n", type=int, default=1)
    sp.add_argument("--kmax", type=int, default=6)
    sp.add_argument("--dim", type=int, default=2, help="dimension for the displayed weights")
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_exponents)

    sp = sub.add_parser("threshold", help="solve lambda_{n+2} = lambda_{n+1}^2 for p")
    sp.add_argument("--n", type=int, default=1)
    sp.add_argument("--tol", type=float, default=1e-9)
    sp.set_defaults(func=cmd_threshold)

    sp = sub.add_parser("build", help="write a series JSON document")
    _add_series_source(sp)
    sp.add_argument("--p", type=float)
    sp.add_argument("--n", type=int)
    sp.add_argument("--mode", action="append", default=[], help="k=re[,im]; repeatable")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_build)

    sp = sub.add_parser("verify", help="decay ladder of the mean value remainder")
    _add_series_source(sp)
    sp.add_argument("--p", type=float, help="override the preset's p")
    sp.add_argument("--aronsson", action="store_true", help="Aronsson field with the p=inf formula")
    sp.add_argument("--main-only", action="store_true", help="keep only the leading mode")
    sp.add_argument("--center", default="0,0")
    sp.add_argument("--eps-max", type=float)
    sp.add_argument("--rungs", type=int, default=10)
    sp.add_argument("--ratio", type=float, default=0.7)
    sp.add_argument("--resolution", type=int, default=64)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("oracle", help="grid solvers against the hodograph solution")
    _add_series_source(sp)
    sp.add_argument("--grid", type=int, default=65)
    sp.add_argument("--p", type=float)
    sp.add_argument("--mode", choices=["variational", "amv", "both"], default="both")
    sp.add_argument("--eps-nodes", type=int, default=3)
    sp.add_argument("--tol", type=float, default=1e-7)
    sp.add_argument("--amv-tol", type=float, default=1e-10)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_oracle)
    return parser


def _load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise InputError("config must be a JSON object")
    return {k.replace("-", "_"): v for k, v in cfg.items()}


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        pre, _ = parser.parse_known_args(argv)
        if pre.config:
            cfg = _load_config(pre.config)
            for action in parser._subparsers._group_actions:
                sp = action.choices.get(pre.command)
                if sp is not None:
                    known = {a.dest for a in sp._actions}
                    unknown = set(cfg) - known - {"config"}
                    if unknown:
                        raise InputError(f"unknown config keys: {', '.join(sorted(unknown))}")
                    sp.set_defaults(**cfg)
        args = parser.parse_args(argv)
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
