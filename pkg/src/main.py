"""
Main entry point for the compatible-CLF toolkit.

Commands:
- analyze <scenario>      Q-functions, equilibria and compatibility verdicts
- compat <scenario>       compatibilization of every barrier
- simulate <scenario>     closed-loop runs from the scenario's initial states
- reproduce fig1|fig2|fig3  bundled reproduction recipes
- selftest                seeded invariant suites

Exit codes: 0 success, 2 invalid scenario or arguments, 3 analysis failure.
"""

import argparse
import logging
import sys

from src.config import LOG_LEVEL, OUTPUT_DIR
from src.models.scenario import ScenarioValidationError, load_scenario
from src.services.report_service import reproduce, run_scenario
from src.services.selftest import run_selftest
from src.utils.formatters import emit

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_ANALYSIS = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="compatclf", description="CLF-CBF equilibrium analysis and compatibilization")
    parser.add_argument("--output", "-o", default=OUTPUT_DIR, help="output directory (default: %(default)s)")
    parser.add_argument("--log-level", default=LOG_LEVEL, help="logging level (default: %(default)s)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="Q-functions, equilibria and compatibility verdicts")
    p.add_argument("scenario")
    p.add_argument("--probe", action="store_true", help="cross-check verdicts with perturbed simulations")

    p = sub.add_parser("compat", help="compatibilize every barrier and write certificates")
    p.add_argument("scenario")

    p = sub.add_parser("simulate", help="simulate the scenario's initial states")
    p.add_argument("scenario")
    p.add_argument("--adaptive", action="store_true", help="use the adaptive shape controller")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")

    p = sub.add_parser("reproduce", help="run a bundled reproduction recipe")
    p.add_argument("figure", choices=["fig1", "fig2", "fig3"])

    p = sub.add_parser("selftest", help="run the invariant suites")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--full", action="store_true", help="run the full instance counts")
    return parser


def run(args: argparse.Namespace) -> int:
    """Dispatch one parsed command and return its exit code."""
    if args.command == "selftest":
        results = run_selftest(seed=args.seed, full=args.full)
        failed = [r.name for r in results if not r.passed]
        if failed:
            logger.error(f"❌ Failed suites: {', '.join(failed)}")
            return EXIT_ANALYSIS
        logger.info("✅ All suites passed")
        return EXIT_OK

    if args.command == "reproduce":
        report = reproduce(args.figure)
    else:
        scenario = load_scenario(args.scenario)
        if args.command == "analyze":
            report = run_scenario(scenario, compat=False, simulate_runs=False, probes=args.probe)
        elif args.command == "compat":
            report = run_scenario(scenario, compat=True, simulate_runs=False)
        else:
            report = run_scenario(scenario, compat=args.adaptive, simulate_runs=True, adaptive=args.adaptive, seed=args.seed)

    emit(report, args.output)
    return EXIT_OK if report.ok else EXIT_ANALYSIS


def main(argv=None) -> int:
    """Run the CLI."""
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
    )
    try:
        return run(args)
    except (ScenarioValidationError, ValueError) as e:
        logger.error(f"❌ {e}")
        return EXIT_INVALID
    except OSError as e:
        logger.error(f"❌ {e}")
        return EXIT_ANALYSIS
    except Exception as e:
        logger.exception(f"❌ Analysis failed: {e}")
        return EXIT_ANALYSIS


if __name__ == "__main__":
    sys.exit(main())
