from .report import (
    compare_reports,
    evaluate_masks,
    evaluate_pair,
    format_compare,
    format_summary,
    read_report_csv,
    summarize,
    write_compare_csv,
    write_report_csv,
)
from .stats import aggregate, enumerate_sign_p, wilcoxon_signed_rank
from .surface import (
    asd,
    directed_distances,
    directed_distances_brute,
    dsc,
    extract_surface,
    hausdorff,
    hd95,
    surface_from_points,
)

__all__ = [
    'dsc', 'extract_surface', 'surface_from_points', 'directed_distances', 'directed_distances_brute',
    'hd95', 'hausdorff', 'asd', 'wilcoxon_signed_rank', 'enumerate_sign_p', 'aggregate',
    'evaluate_pair', 'evaluate_masks', 'summarize', 'write_report_csv', 'read_report_csv',
    'format_summary', 'compare_reports', 'format_compare', 'write_compare_csv',
]
