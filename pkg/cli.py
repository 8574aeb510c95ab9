#!/usr/bin/env python3
"""
CiC Mediation - direct and indirect treatment effects with changes-in-changes.
Subcommands: estimate, simulate, diagnose.
"""

import argparse
import logging
import sys
from typing import Dict, List, Optional

from mediation_coordinator import MediationCoordinator, RunConfig, tsv_sections
from utils.config_loader import ConfigLoader
from utils.errors import CicError
from utils.report_writer import render_error, render_json, render_tsv, write_report

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'


def _add_data_flags(parser: argparse.ArgumentParser):
    group = parser.add_argument_group("input data")
    group.add_argument("--input", help="CSV file with one row per unit and period")
    group.add_argument("--outcome", help="Outcome column (default: y)")
    group.add_argument("--treatment", help="Treatment column, coded 0/1 (default: d)")
    group.add_argument("--mediator", help="Mediator column, coded 0/1 (default: m)")
    group.add_argument("--time", help="Period column, coded 0/1 (default: t)")
    group.add_argument("--cluster", help="Cluster id column; the bootstrap resamples clusters (default: id)")
    group.add_argument("--covariates", help="Comma-separated covariates to partial out of the outcome")
    group.add_argument("--design", choices=["auto", "panel", "repeated"],
                       help="Panel or repeated cross-section (default: auto)")


def _add_common_flags(parser: argparse.ArgumentParser):
    group = parser.add_argument_group("run")
    group.add_argument("--seed", type=int, help="Random seed (default: 1)")
    group.add_argument("--jobs", type=int, help="Parallel workers for replications (default: 1)")
    group.add_argument("--output", help="Report file; stdout when omitted")
    group.add_argument("--format", choices=["tsv", "json"], help="Report format (default: tsv)")
    group.add_argument("--config", help="YAML file with settings")
    group.add_argument("--log-level", dest="log_level", help="Logging level (default: INFO)")


def _add_estimation_flags(parser: argparse.ArgumentParser):
    group = parser.add_argument_group("estimation")
    group.add_argument("--effects", help="Comma-separated estimands, or 'all' (default)")
    group.add_argument("--quantiles", help="Comma-separated quantile grid (default: 0.1,...,0.9)")
    group.add_argument("--bootstrap", type=int, help="Bootstrap replications, 0 to skip (default: 1999)")
    group.add_argument("--min-share", dest="min_share", type=float,
                       help="Smallest complier/always-taker share accepted (default: 0.01)")
    group.add_argument("--rearrangement", choices=["running_max", "sort"],
                       help="Monotone repair of mixture CDFs (default: running_max)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cic-mediation",
        description="CiC Mediation - direct and indirect effects with changes-in-changes",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    estimate = subparsers.add_parser("estimate", help="Estimate effects with bootstrap inference")
    _add_data_flags(estimate)
    _add_estimation_flags(estimate)
    estimate.add_argument("--did", action="store_const", const=True,
                          help="Also report the mean-shift difference-in-differences estimates")
    _add_common_flags(estimate)

    simulate = subparsers.add_parser("simulate", help="Monte Carlo study of CiC and DiD")
    group = simulate.add_argument_group("simulation design")
    group.add_argument("--link", choices=["identity", "exponential", "exp"], help="Outcome link (default: identity)")
    group.add_argument("--assignment", choices=["random", "selective"], help="Treatment assignment (default: random)")
    group.add_argument("--n", type=int, help="Sample size per repetition (default: 4000)")
    group.add_argument("--reps", type=int, help="Monte Carlo repetitions (default: 1000)")
    group.add_argument("--oracle-draws", dest="oracle_draws", type=int,
                       help="Units simulated for the true effects (default: 10000000)")
    group.add_argument("--min-share", dest="min_share", type=float, help="Smallest share accepted (default: 0.01)")
    _add_common_flags(simulate)

    diagnose = subparsers.add_parser("diagnose", help="Balance, pre-trend, attrition and exclusion tests")
    _add_data_flags(diagnose)
    group = diagnose.add_argument_group("inference")
    group.add_argument("--bootstrap", type=int, help="Replications for the exclusion tests, 0 to skip (default: 1999)")
    group.add_argument("--min-share", dest="min_share", type=float, help="Smallest share accepted (default: 0.01)")
    _add_common_flags(diagnose)
    return parser


def configure_logging(level: str):
    numeric = getattr(logging, str(level).upper(), None)
    if not isinstance(numeric, int):
        numeric = logging.INFO
    logging.basicConfig(level=numeric, format=LOG_FORMAT, stream=sys.stderr, force=True)


def run(argv: Optional[List[str]] = None, loader: Optional[ConfigLoader] = None) -> int:
    """Parse arguments, run one command and write its report. Returns the exit code."""
    args = build_parser().parse_args(argv)
    flags: Dict = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    loader = loader or ConfigLoader()
    fmt = args.format or "tsv"
    output = args.output

    try:
        settings = loader.resolve(flags, config_path=args.config)
        fmt = settings.get("format") if settings.get("format") in ("tsv", "json") else fmt
        output = settings.get("output")
        configure_logging(settings.get("log_level", "INFO"))
        config = RunConfig(args.command, settings)
        payload = MediationCoordinator(config).run()
    except CicError as e:
        logger.error(f"{e.code}: {e.message}")
        write_report(render_error(e.to_dict(), fmt), output if fmt == "json" else None)
        return e.exit_code
    except KeyboardInterrupt:
        logger.error("Interrupted")
        return 130
    except Exception as e:
        logger.error(f"Unexpected error: {e}", exc_info=True)
        write_report(render_error({"code": "InternalError", "message": str(e), "context": {}}, fmt),
                     output if fmt == "json" else None)
        return 1

    text = render_json(payload) if config.format == "json" else render_tsv(tsv_sections(payload))
    write_report(text, config.output)
    return 0


def main():
    """Main entry point for cic-mediation."""
    sys.exit(run())


if __name__ == "__main__":
    main()
