"""
Command line driver: `committee-machine --mode se --prior rademacher ...`.

Exit status is 0 on success, 2 when the configuration does not validate and 3
when a numerical precondition fails.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import ConfigManager, SweepConfig
from .errors import ConfigError, NumericalError
from .runner import run_sweep
from .storage import ResultStorage

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

# argparse dest -> SweepConfig field, for flags that override the config file
_OVERRIDES = {
    "mode": "mode",
    "channel": "channel",
    "prior": "prior",
    "k": "k",
    "noise": "noise",
    "alpha_min": "alpha_min",
    "alpha_max": "alpha_max",
    "alpha_steps": "alpha_steps",
    "alphas": "alphas",
    "n": "n",
    "seeds": "seeds",
    "init": "init",
    "transition": "transition",
    "damping": "damping",
    "mc_samples": "mc_samples",
    "n_test": "n_test",
    "workers": "workers",
    "out": "out",
    "format": "format",
}


def _seed_list(text: str) -> list[int]:
    """Parse "1,2,5" or "1-10" into seeds."""
    seeds: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise argparse.ArgumentTypeError(f"no seeds in '{text}'")
    return seeds


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="committee-machine",
        description="Bayes-optimal learning curves and phase transitions of committee machines.",
    )
    parser.add_argument("--config", type=Path, help="JSON config file; flags override its values")
    parser.add_argument("--mode", choices=["se", "amp", "largek", "transition", "generror"])
    parser.add_argument("--channel", choices=["committee", "parity", "linear"])
    parser.add_argument("--prior", choices=["gaussian", "rademacher"])
    parser.add_argument("--k", type=int, help="number of hidden units")
    parser.add_argument("--noise", type=float, help="output noise variance (linear channel)")
    parser.add_argument("--alpha-min", type=float, help="first alpha (alpha/K in largek mode; bracket start in transition mode)")
    parser.add_argument("--alpha-max", type=float, help="last alpha (bracket end in transition mode)")
    parser.add_argument("--alpha-steps", type=int, help="number of grid points")
    parser.add_argument("--alphas", type=float, nargs="+", help="explicit alpha grid")
    parser.add_argument("--n", type=int, help="input dimension for amp mode")
    parser.add_argument("--seeds", type=_seed_list, help="instance seeds, e.g. 1-10 or 1,4,7")
    parser.add_argument("--init", choices=["uninformed", "informed", "both", "symmetric"])
    parser.add_argument("--transition", choices=["spec", "spinodal", "it", "perf"])
    parser.add_argument("--damping", type=float)
    parser.add_argument("--mc-samples", type=int, help="Monte Carlo samples for the generror mode")
    parser.add_argument("--mc-seed", type=int, help="seed of every Monte Carlo kernel, including the generror integral")
    parser.add_argument("--n-test", type=int, help="test samples for the AMP empirical error")
    parser.add_argument("--alpha-tol", type=float, help="bisection tolerance on alpha")
    parser.add_argument("--se-tol", type=float, help="state evolution fixed point tolerance")
    parser.add_argument("--workers", type=int, help="worker processes")
    parser.add_argument("--out", help="result file (default derived from mode, prior, channel and K)")
    parser.add_argument("--format", choices=["csv", "jsonl"])
    parser.add_argument("--data-dir", type=Path, default=Path("."), help="directory for relative output paths")
    parser.add_argument("--timing", action="store_true", help="record wall_time_ms")
    parser.add_argument("--save-instance", action="store_true", help="store the descriptor of every AMP instance under <data-dir>/instances")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true")
    verbosity.add_argument("-q", "--quiet", action="store_true")
    return parser


def config_from_args(args: argparse.Namespace) -> SweepConfig:
    """Merge flag > config file > defaults."""
    base = ConfigManager.load_file(args.config).to_dict() if args.config else SweepConfig().to_dict()
    for dest, name in _OVERRIDES.items():
        value = getattr(args, dest, None)
        if value is not None:
            base[name] = value
    if args.alphas is None and any(getattr(args, d) is not None for d in ("alpha_min", "alpha_max", "alpha_steps")):
        base["alphas"] = None
    if args.timing:
        base["timing"] = True
    if args.save_instance:
        base["save_instances"] = True
    numerics = dict(base.get("numerics") or {})
    if args.alpha_tol is not None:
        numerics["alpha_tol"] = args.alpha_tol
    if args.se_tol is not None:
        numerics["se_tol"] = args.se_tol
    if args.mc_seed is not None:
        numerics["mc_seed"] = args.mc_seed
    base["numerics"] = numerics
    return SweepConfig.from_dict(base)


def run(config: SweepConfig, storage: Optional[ResultStorage] = None) -> int:
    """Execute a sweep and print its summary; returns the exit status."""
    try:
        result = run_sweep(config, storage)
    except ConfigError as e:
        for diagnostic in e.diagnostics:
            print(f"error: {diagnostic}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as e:
        print(f"numerical failure ({type(e).__name__}): {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    for line in result.summary:
        print(line)
    if result.path is not None:
        print(f"wrote {len(result.rows)} rows to {result.path}")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        config = config_from_args(args)
    except ConfigError as e:
        for diagnostic in e.diagnostics:
            print(f"error: {diagnostic}", file=sys.stderr)
        return EXIT_CONFIG
    return run(config, ResultStorage(args.data_dir))


if __name__ == "__main__":
    sys.exit(main())
