"""Command-line interface.

Subcommands: tables, picard, sweep, estimate, montecarlo. Options may also
be supplied as a JSON document via --config; explicit flags override file
values, which override built-in defaults. Exit codes: 0 success, 2 input
error, 3 numeric error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .algorithm import TupreConfig
from .errors import InputError, NumericError, TupreError
from .experiments import (
    ExperimentConfig,
    build_problem,
    write_estimate,
    write_monte_carlo,
    write_picard,
    write_sweep,
    write_tables,
)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

_PROBLEM_DEFAULTS = {
    "problem": "model",
    "model": "moderate",
    "tau": 1.5,
    "nu": 0.5,
    "noise": 0.05,
    "n": 1024,
    "seed": 0,
    "nside": 32,
    "psf_width": 2.0,
}

_TUPRE_DEFAULTS = {
    "k0": 10,
    "dk": 10,
    "kmax": None,
    "delta": 1e-3,
    "window": 5,
    "ell": None,
}


def _add_problem_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--problem", choices=("model", "blur"))
    parser.add_argument("--model", choices=("mild", "moderate", "severe"))
    parser.add_argument("--tau", type=float)
    parser.add_argument("--nu", type=float)
    parser.add_argument("--noise", type=float)
    parser.add_argument("--n", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--nside", type=int)
    parser.add_argument("--psf-width", dest="psf_width", type=float)


def _add_tupre_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--k0", type=int)
    parser.add_argument("--dk", type=int)
    parser.add_argument("--kmax", type=int)
    parser.add_argument("--delta", type=float)
    parser.add_argument("--window", type=int)
    parser.add_argument("--ell", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tupre",
        description="Truncated-UPRE regularization parameter estimation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = {"--out": dict(required=False, help="output directory (default '.')")}

    p_tables = sub.add_parser("tables", help="emit the rank and noise-index tables")
    p_tables.add_argument("--out")
    p_tables.add_argument("--config")

    for name, help_text in (
        ("picard", "emit the Picard diagnostic table"),
        ("sweep", "minimize the objective on a list of subspace sizes"),
        ("estimate", "run the iterative parameter estimation"),
        ("montecarlo", "run repeated noise draws and summarize"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--out")
        p.add_argument("--config", help="JSON file with option values")
        _add_problem_flags(p)
        if name == "sweep":
            p.add_argument("--k", help="comma-separated subspace sizes")
            p.add_argument("--objective", choices=("upre", "gcv"))
        if name in ("estimate", "montecarlo"):
            _add_tupre_flags(p)
        if name == "montecarlo":
            p.add_argument("--runs", type=int)
            p.add_argument("--workers", type=int)
            p.add_argument(
                "--noise-levels",
                dest="noise_levels",
                help="comma-separated noise levels (overrides --noise)",
            )
    return parser


def _merge(args: argparse.Namespace, defaults: dict) -> dict:
    """Defaults, then JSON config values, then explicit flags."""
    merged = dict(defaults)
    config_path = getattr(args, "config", None)
    if config_path:
        with open(config_path) as handle:
            loaded = json.load(handle)
        if not isinstance(loaded, dict):
            raise InputError("config file must contain a JSON object")
        unknown = set(loaded) - set(defaults) - {"out"}
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        merged.update(loaded)
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def _problem_spec(options: dict) -> dict:
    if options["problem"] == "blur":
        return {
            "kind": "blur",
            "n_side": options["nside"],
            "psf_width": options["psf_width"],
            "noise": options["noise"],
            "seed": options["seed"],
        }
    return {
        "kind": "model",
        "decay": options["model"],
        "tau": options["tau"],
        "nu": options["nu"],
        "n": options["n"],
        "noise": options["noise"],
        "seed": options["seed"],
    }


def _tupre_config(options: dict) -> TupreConfig:
    return TupreConfig(
        k0=options["k0"],
        delta_k=options["dk"],
        k_max=options["kmax"],
        delta=options["delta"],
        w=options["window"],
        l_estimate=options["ell"],
    )


def _out_dir(args: argparse.Namespace, options: dict) -> str:
    return args.out or options.get("out") or "."


def _run(args: argparse.Namespace) -> int:
    if args.command == "tables":
        options = _merge(args, {})
        write_tables(_out_dir(args, options))
        return EXIT_OK

    defaults = dict(_PROBLEM_DEFAULTS)
    if args.command == "sweep":
        defaults.update({"k": "10,20,50,100", "objective": "upre"})
    if args.command in ("estimate", "montecarlo"):
        defaults.update(_TUPRE_DEFAULTS)
    if args.command == "montecarlo":
        defaults.update({"runs": 10, "workers": 1, "noise_levels": None})
    options = _merge(args, defaults)
    out = _out_dir(args, options)

    if args.command == "picard":
        write_picard(build_problem(_problem_spec(options)), out)
        return EXIT_OK
    if args.command == "sweep":
        try:
            ks = [int(part) for part in str(options["k"]).split(",") if part.strip()]
        except ValueError as exc:
            raise InputError(f"bad --k list: {exc}") from exc
        write_sweep(build_problem(_problem_spec(options)), ks, options["objective"], out)
        return EXIT_OK
    if args.command == "estimate":
        write_estimate(build_problem(_problem_spec(options)), _tupre_config(options), out)
        return EXIT_OK
    if args.command == "montecarlo":
        if options["noise_levels"]:
            try:
                levels = tuple(
                    float(part)
                    for part in str(options["noise_levels"]).split(",")
                    if part.strip()
                )
            except ValueError as exc:
                raise InputError(f"bad --noise-levels list: {exc}") from exc
        else:
            levels = (options["noise"],)
        config = ExperimentConfig(
            problem=_problem_spec(options),
            noise_levels=levels,
            runs=options["runs"],
            tupre=_tupre_config(options),
            seed=options["seed"],
            workers=options["workers"],
        )
        write_monte_carlo(config, out)
        return EXIT_OK
    raise InputError(f"unknown command {args.command!r}")


def exit_code_for(exc: BaseException) -> int:
    """Map an exception onto the documented process exit codes."""
    if isinstance(exc, NumericError):
        return EXIT_NUMERIC
    if isinstance(exc, (InputError, ValueError)):
        return EXIT_INPUT
    if isinstance(exc, OSError):
        return EXIT_IO
    if isinstance(exc, TupreError):
        return EXIT_INPUT
    return 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except (TupreError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"tupre: error: {exc}", file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
