import csv
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from ..exceptions import MetricUndefinedError, PathError, ReportMismatchError, ValidationError
from ..models import HD95Mode, MetricsReport, MetricSummary, SampleMetrics, WilcoxonResult
from ..utils.worker_pool import WorkerPool
from .stats import aggregate, wilcoxon_signed_rank
from .surface import MaskLike, as_mask, asd, dsc, hd95

logger = logging.getLogger(__name__)

METRICS = ("dsc", "hd95", "asd")
REPORT_COLUMNS = ["sample_id", "dsc", "hd95", "asd", "hd95_defined"]
COMPARE_COLUMNS = ["metric", "n_effective", "w_plus", "p_two_sided", "method"]

EvalItem = Tuple[str, MaskLike, MaskLike, Optional[str]]


def evaluate_pair(sample_id: str, gt: MaskLike, agc: MaskLike, mode: HD95Mode = HD95Mode.POOLED,
                  group: Optional[str] = None, oracle: bool = False) -> SampleMetrics:
    """
    Score one prediction. Undefined surface metrics are recorded as the image
    diagonal and flagged with `hd95_defined=False`.
    """
    gt, agc = as_mask(gt), as_mask(agc)
    overlap = dsc(gt, agc)
    try:
        return SampleMetrics(sample_id=sample_id, dsc=overlap, hd95=hd95(gt, agc, mode, oracle=oracle),
                             asd=asd(gt, agc, oracle=oracle), group=group)
    except MetricUndefinedError as exc:
        logger.warning("sample_id=%s %s", sample_id, exc.message)
        return SampleMetrics(sample_id=sample_id, dsc=overlap, hd95=gt.diagonal, asd=gt.diagonal,
                             hd95_defined=False, group=group)


def summarize(rows: Sequence[SampleMetrics]) -> MetricsReport:
    """Aggregate per-sample rows overall and per group."""
    if not rows:
        raise ValidationError("cannot summarize an empty report")
    summary = {m: aggregate([getattr(r, m) for r in rows]) for m in METRICS}
    groups: Dict[str, Dict[str, MetricSummary]] = {}
    for name in sorted({r.group for r in rows if r.group}):
        members = [r for r in rows if r.group == name]
        groups[name] = {m: aggregate([getattr(r, m) for r in members]) for m in METRICS}
    undefined = sum(1 for r in rows if not r.hd95_defined)
    return MetricsReport(rows=list(rows), summary=summary, undefined_count=undefined, groups=groups)


def evaluate_masks(items: Sequence[EvalItem], mode: HD95Mode = HD95Mode.POOLED,
                   pool: Optional[WorkerPool] = None) -> MetricsReport:
    """Score (sample_id, gt, agc, group) items, fanning out over the worker pool."""
    pool = pool or WorkerPool()
    rows = pool.map(lambda item: evaluate_pair(item[0], item[1], item[2], mode, item[3]), items)
    return summarize(rows)


def _format_float(value: float) -> str:
    return repr(float(value))


def write_report_csv(report: MetricsReport, path: Union[str, Path]) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for row in report.rows:
            writer.writerow([row.sample_id, _format_float(row.dsc), _format_float(row.hd95),
                             _format_float(row.asd), "true" if row.hd95_defined else "false"])
    return p


def read_report_csv(path: Union[str, Path]) -> List[SampleMetrics]:
    p = Path(path)
    if not p.is_file():
        raise PathError(f"report not found: {p}")
    with p.open(newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames != REPORT_COLUMNS:
            raise ValidationError(f"{p}: expected columns {REPORT_COLUMNS}, got {reader.fieldnames}")
        return [
            SampleMetrics(sample_id=r["sample_id"], dsc=float(r["dsc"]), hd95=float(r["hd95"]),
                          asd=float(r["asd"]), hd95_defined=r["hd95_defined"] == "true")
            for r in reader
        ]


def _align(rows: List[List[str]]) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in rows) + "\n"


def _mean_std(s: MetricSummary) -> str:
    return f"{s.mean:.4f}±{s.std:.4f}"


def format_summary(report: MetricsReport) -> str:
    """Aligned `metric mean±std` table, followed by per-group rows when present."""
    table = [["metric", "mean±std"]]
    table += [[m.upper(), _mean_std(report.summary[m])] for m in METRICS]
    text = _align(table) + f"undefined_hd95 {report.undefined_count}\n"
    if report.groups:
        grouped = [["group"] + [m.upper() for m in METRICS]]
        grouped += [[name] + [_mean_std(stats[m]) for m in METRICS] for name, stats in report.groups.items()]
        text += _align(grouped)
    return text


def match_reports(a: Sequence[SampleMetrics], b: Sequence[SampleMetrics]) -> List[Tuple[SampleMetrics, SampleMetrics]]:
    """
    Pair rows by sample_id.

    Raises:
        ReportMismatchError: naming the first sample_id present on one side only
    """
    by_id_b = {r.sample_id: r for r in b}
    if len(by_id_b) != len(b) or len({r.sample_id for r in a}) != len(a):
        raise ReportMismatchError("duplicate sample ids", "report contains repeated sample_id")
    for row in a:
        if row.sample_id not in by_id_b:
            raise ReportMismatchError("sample ids differ", f"{row.sample_id} only in first report")
    ids_a = {r.sample_id for r in a}
    for row in b:
        if row.sample_id not in ids_a:
            raise ReportMismatchError("sample ids differ", f"{row.sample_id} only in second report")
    return [(row, by_id_b[row.sample_id]) for row in a]


def compare_reports(a: Sequence[SampleMetrics], b: Sequence[SampleMetrics]) -> Dict[str, WilcoxonResult]:
    pairs = match_reports(a, b)
    return {m: wilcoxon_signed_rank([(getattr(x, m), getattr(y, m)) for x, y in pairs]) for m in METRICS}


def compare_rows(results: Dict[str, WilcoxonResult]) -> List[List[str]]:
    return [[m, str(r.n_effective), _format_float(r.w_plus), _format_float(r.p_value), r.method.value]
            for m, r in results.items()]


def format_compare(results: Dict[str, WilcoxonResult]) -> str:
    return _align([COMPARE_COLUMNS] + compare_rows(results))


def write_compare_csv(results: Dict[str, WilcoxonResult], path: Union[str, Path]) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(COMPARE_COLUMNS)
        writer.writerows(compare_rows(results))
    return p