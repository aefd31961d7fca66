import csv
import json
import logging
from pathlib import Path
from typing import Dict, List, Literal, Union

from deepdiff import DeepDiff

from models.scenario import VerificationReport
from models.solver import IterationRecord

logger = logging.getLogger(__name__)

ReportFormat = Literal["json", "csv_summary", "text"]
PathLike = Union[str, Path]

REPORT_FILES = {"json": "report.json", "csv_summary": "checks.csv", "text": "summary.txt"}


def normalize_timings(report: VerificationReport) -> VerificationReport:
    """Copy of the report with every timing set to 0.0"""
    return report.model_copy(update={"timings": {stage: 0.0 for stage in report.timings}})


def render_banner(report: VerificationReport) -> str:
    lines = [f"Scenario {report.scenario} ({report.model or 'unknown model'})"]
    for check in report.checks:
        status = "PASS" if check.passed else "FAIL"
        measured = "" if check.value is None else f" value={check.value:.3e}"
        bound = "" if check.tolerance is None else f" tol={check.tolerance:.3e}"
        lines.append(f"  [{status}] {check.name}{measured}{bound}")
    if report.error:
        lines.append(f"  ERROR: {report.error}")
    verdict = "PASS" if report.exit_code == 0 else "FAIL"
    lines.append(f"{verdict} (exit {report.exit_code})")
    return "\n".join(lines) + "\n"


def emit_report(report: VerificationReport, fmt: ReportFormat, out_dir: PathLike) -> Path:
    """Write the report in one format; json is the full structure"""
    if fmt not in REPORT_FILES:
        raise ValueError(f"unknown report format '{fmt}'")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / REPORT_FILES[fmt]

    if fmt == "json":
        path.write_text(report.model_dump_json(indent=2) + "\n")
    elif fmt == "csv_summary":
        with path.open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["name", "value", "tolerance", "pass"])
            for check in report.checks:
                writer.writerow([
                    check.name,
                    "" if check.value is None else repr(check.value),
                    "" if check.tolerance is None else repr(check.tolerance),
                    check.passed,
                ])
    else:
        path.write_text(render_banner(report))
    logger.info(f"Wrote {fmt} report to {path}")
    return path


def write_iteration_log(history: List[IterationRecord], path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["iter", "J", "grad_norm", "step"])
        for record in history:
            writer.writerow([record.iter, repr(record.J), repr(record.grad_norm), repr(record.step)])
    logger.debug(f"Wrote {len(history)} iteration rows to {path}")
    return path


def load_report(path: PathLike) -> VerificationReport:
    return VerificationReport.model_validate(json.loads(Path(path).read_text()))


def compare_reports(path_a: PathLike, path_b: PathLike) -> Dict:
    """DeepDiff of two JSON reports with timings excluded; empty means equal"""
    a = json.loads(Path(path_a).read_text())
    b = json.loads(Path(path_b).read_text())
    diff = DeepDiff(a, b, exclude_paths=["root['timings']"])
    if diff:
        logger.warning(f"Reports differ: {list(diff.keys())}")
    return dict(diff)
