import argparse
import json
import logging
import sys
from typing import List, Optional

from config import settings
from services import report_service
from services.scenario_runner import EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_OK, run_scenario

# Configure logging
logging.basicConfig(level=getattr(logging, str(settings.LOG_LEVEL).upper(), logging.INFO),
                    format="%(asctime)s %(levelname)s %(name)s: %(message)s")
logger = logging.getLogger(__name__)

FORMATS = {"json": "json", "csv": "csv_summary", "text": "text"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plate-dual",
        description="Plate and 3D elasticity energy minimization with duality and coercivity checks",
    )
    parser.add_argument("--log-level", default=None, help="Override PLATE_DUAL_LOG_LEVEL")
    commands = parser.add_subparsers(dest="command", required=True)

    def scenario_command(name: str, help_text: str) -> argparse.ArgumentParser:
        sub = commands.add_parser(name, help=help_text)
        sub.add_argument("config", help="Scenario JSON file")
        sub.add_argument("--out", default=settings.OUTPUT_DIR, help="Output directory")
        sub.add_argument("--format", choices=sorted(FORMATS), default="json",
                         help="Extra report format; report.json is always written")
        sub.add_argument("--normalize-timings", action="store_true", help="Zero every timing before writing")
        return sub

    scenario_command("solve", "Solve a scenario and run its checks")
    scenario_command("gradcheck", "Finite-difference check of the analytic gradient only")
    verify = scenario_command("verify-duality", "Run the duality checks on a stored plate solution")
    verify.add_argument("--from", dest="solution", required=True, help="solution.json from an earlier solve")

    compare = commands.add_parser("compare-reports", help="Diff two JSON reports, timings excluded")
    compare.add_argument("first")
    compare.add_argument("second")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.log_level:
        logging.getLogger().setLevel(args.log_level.upper())

    if args.command == "compare-reports":
        try:
            diff = report_service.compare_reports(args.first, args.second)
        except (OSError, json.JSONDecodeError) as e:
            logger.error(f"Cannot compare reports: {e}")
            return EXIT_CONFIG
        if diff:
            print(json.dumps(diff, indent=2, default=str))
            return EXIT_CHECK_FAILED
        print("Reports match")
        return EXIT_OK

    report = run_scenario(
        args.config,
        command=args.command,
        solution_path=getattr(args, "solution", None),
        out_dir=args.out,
        formats=[FORMATS[args.format]],
        normalize=args.normalize_timings,
    )
    print(report_service.render_banner(report), end="")
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
