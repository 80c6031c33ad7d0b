"""Command-line entry point: ``maxent-smc <command> [options]``.

Exit codes: 0 success, 2 usage/configuration error, 3 divergence,
4 capability (dimension over the enumeration cap).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import OUT_DIR_ENV, ExperimentConfig
from .exceptions import CapacityError, ConfigurationError, DivergenceError

EXIT_OK, EXIT_USAGE, EXIT_DIVERGENCE, EXIT_CAPABILITY = 0, 2, 3, 4

COMMAND_MODES = {
    "simulate": "simulate",
    "maxent": "maxent_exact",
    "mle": "mle",
    "posterior": "posterior",
    "oracle": "oracle",
}


def _lambda_arg(text):
    text = text.strip()
    if text in ("random", "zero"):
        return text
    try:
        value = json.loads(text if text.startswith("[") else f"[{text}]")
    except json.JSONDecodeError:
        raise argparse.ArgumentTypeError(f"cannot parse lambda {text!r}") from None
    return [float(v) for v in value]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maxent-smc",
        description="Maximum-entropy fitting and posterior sampling on binary states "
                    "with SMC-estimated moments.",
        epilog=f"Default output directory comes from ${OUT_DIR_ENV} when --out-dir is not given.",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--seed", type=int)
    common.add_argument("--out-dir")
    common.add_argument("--replicates", type=int)
    common.add_argument("--d-cap", type=int, help="largest d handled by exact enumeration")
    common.add_argument("--mcmc-sampling", action="store_true", default=None,
                        help="allow approximate MCMC observation sampling above the cap")
    common.add_argument("--d", type=int, help="number of bits")
    common.add_argument("--lambda", dest="lam", type=_lambda_arg,
                        help="parameters as a JSON list or comma list, or 'random'/'zero'")
    common.add_argument("--K", type=int, help="iterations")
    common.add_argument("--M", type=int, help="number of observations (simulate)")
    common.add_argument("--N", type=int, help="particles per SMC run")
    common.add_argument("--plot", action="store_true", default=None,
                        help="also render PNG figures next to the data files")

    sub.add_parser("simulate", parents=[common], help="draw synthetic observations") \
        .add_argument("--packed", action="store_true", default=None)
    p = sub.add_parser("maxent", parents=[common], help="fit parameters to exact moments")
    p.add_argument("--moments", help="moments file (JSON list or whitespace text)")
    p = sub.add_parser("mle", parents=[common], help="maximum likelihood from observations")
    p.add_argument("--observations")
    p = sub.add_parser("posterior", parents=[common], help="SGLD posterior from observations")
    p.add_argument("--observations")
    sub.add_parser("oracle", parents=[common], help="exact Z, moments and entropy")
    return parser


_OVERRIDES = ("seed", "out_dir", "replicates", "d_cap", "mcmc_sampling", "d", "lam", "K", "M",
              "N", "plot", "packed", "moments", "observations")


def config_from_args(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    cfg.mode = COMMAND_MODES[args.command]
    for key in _OVERRIDES:
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    return cfg.validate()


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose,
                        format="%(levelname)s %(name)s: %(message)s")
    from .experiments import run

    try:
        cfg = config_from_args(args)
        result = run(cfg)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CapacityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAPABILITY
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    print(f"{args.command}: wrote {cfg.resolve_out_dir()} (config_hash={result['config_hash'][:12]})")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
