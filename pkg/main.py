#!/usr/bin/env python3
"""
Command-line entry point
    python main.py <command> --config configs/circular.cfg [overrides]

Commands: validate, solve, potential, density, support, sample,
pseudospec, probes, verify. Exit codes: 0 success, 1 acceptance
failure, 2 configuration or domain error, 3 numerical failure.
"""
import argparse
import sys
from typing import Any, Dict, List, Optional

from loguru import logger

from config import load_run_config, settings
from exceptions import ConfigError, ToolkitError
from scripts.commands import COMMANDS
from utils.fields import GridSpec


def _float_list(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from e


def _zeta(text: str) -> List[float]:
    values = _float_list(text)
    if len(values) != 2:
        raise argparse.ArgumentTypeError(f"expected RE,IM, got {text!r}")
    return values


def _grid(text: str) -> Dict[str, float]:
    try:
        return GridSpec.parse(text).model_dump()
    except Exception as e:
        raise argparse.ArgumentTypeError(f"invalid grid {text!r}: {e}") from e


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Brown measure, Dyson equation and pseudospectrum toolkit")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="run configuration (.cfg)")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--threads", type=int, default=None, help="worker threads for grid and sampling work")
    parser.add_argument("--seed", type=int, help="sampling seed (unsigned 64-bit)")
    parser.add_argument("--grid", type=_grid, help="re_min,re_max,im_min,im_max,h")
    parser.add_argument("--n", type=int, help="matrix dimension")
    parser.add_argument("--eps", type=_float_list, help="comma-separated eps values")
    parser.add_argument("--zeta", type=_zeta, help="spectral parameter RE,IM (solve)")
    parser.add_argument("--eta", type=float, help="regularization eta (solve)")
    return parser


# comma lists may start with a minus sign, which argparse reads as an option
VALUE_FLAGS = ("--grid", "--eps", "--zeta")


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """Parse `argv`, joining value flags to their values so that `--grid -1,1,-1,1,0.5` parses"""
    argv = list(sys.argv[1:] if argv is None else argv)
    joined: List[str] = []
    i = 0
    while i < len(argv):
        if argv[i] in VALUE_FLAGS and i + 1 < len(argv):
            joined.append(f"{argv[i]}={argv[i + 1]}")
            i += 2
        else:
            joined.append(argv[i])
            i += 1
    return build_parser().parse_args(joined)


def collect_overrides(args: argparse.Namespace) -> Dict[str, Dict[str, Any]]:
    """Translate CLI flags into {section: {key: value}} overrides"""
    overrides: Dict[str, Dict[str, Any]] = {}
    run = overrides.setdefault("run", {})
    if args.n is not None:
        run["n"] = args.n
        overrides.setdefault("sample", {})["n"] = args.n
    if args.seed is not None:
        run["seeds"] = [args.seed]
        overrides.setdefault("sample", {})["seed"] = args.seed
    if args.eps is not None:
        run["eps"] = args.eps
    if args.zeta is not None:
        run["zeta_re"], run["zeta_im"] = args.zeta
    if args.eta is not None:
        run["eta"] = args.eta
    if args.grid is not None:
        overrides["grid"] = args.grid
    return {section: values for section, values in overrides.items() if values}


def configure_logging(level: str) -> None:
    logger.remove()
    logger.add(sys.stderr, level=level.upper(), format="{time:HH:mm:ss} | {level: <8} | {name}:{function} - {message}")


def main(argv: Optional[List[str]] = None) -> int:
    args = parse_args(argv)
    configure_logging(settings.log_level)
    threads = args.threads if args.threads is not None else settings.threads

    try:
        if threads < 1:
            raise ConfigError(f"--threads must be at least 1, got {threads}", "cli.run")
        cfg = load_run_config(args.config, collect_overrides(args), output_dir=args.out)
        logger.info("=" * 80)
        logger.info(f"{args.command} on {args.config} (config hash {cfg.config_hash()[:12]}, threads={threads})")
        logger.info("=" * 80)
        code = COMMANDS[args.command](cfg, threads=threads)
    except ToolkitError as e:
        logger.error(f"❌ {e}")
        return e.exit_code
    logger.info(f"✅ {args.command} finished")
    return code


if __name__ == "__main__":
    sys.exit(main())
