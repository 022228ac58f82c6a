import itertools
import logging
import math
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm, rankdata

from ..exceptions import ValidationError
from ..models import MetricSummary, WilcoxonMethod, WilcoxonResult

logger = logging.getLogger(__name__)

EXACT_MAX_N = 20


def _nonzero_differences(pairs: Iterable[Tuple[float, float]]) -> np.ndarray:
    diffs = np.array([float(a) - float(b) for a, b in pairs], dtype=np.float64)
    return diffs[diffs != 0.0]


def _doubled_ranks(diffs: np.ndarray) -> np.ndarray:
    # average ranks are multiples of 1/2, so doubling makes them exact integers
    return np.rint(2.0 * rankdata(np.abs(diffs), method="average")).astype(np.int64)


def _two_sided(count_le: int, count_ge: int, n: int) -> float:
    return min(1.0, 2.0 * min(count_le, count_ge) / float(2 ** n))


def _exact_p(doubled: np.ndarray, observed: int) -> float:
    """Count sign assignments whose doubled W+ lies at or beyond the observed one."""
    counts = np.zeros(int(doubled.sum()) + 1, dtype=np.int64)
    counts[0] = 1
    for r in doubled:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:len(counts) - r]
        counts = counts + shifted
    return _two_sided(int(counts[:observed + 1].sum()), int(counts[observed:].sum()), len(doubled))


def enumerate_sign_p(pairs: Sequence[Tuple[float, float]]) -> float:
    """Two-sided p by walking all 2^n sign assignments; usable for small n only."""
    diffs = _nonzero_differences(pairs)
    if len(diffs) == 0:
        return 1.0
    doubled = _doubled_ranks(diffs)
    observed = int(doubled[diffs > 0].sum())
    le = ge = 0
    for signs in itertools.product((0, 1), repeat=len(doubled)):
        w = int(np.dot(signs, doubled))
        le += w <= observed
        ge += w >= observed
    return _two_sided(le, ge, len(doubled))


def _normal_p(diffs: np.ndarray, w_plus: float) -> float:
    n = len(diffs)
    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(np.abs(diffs), return_counts=True)
    variance = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(tie_counts ** 3 - tie_counts)) / 48.0
    if variance <= 0.0:
        return 1.0
    z = max(abs(w_plus - mean) - 0.5, 0.0) / math.sqrt(variance)
    return float(min(1.0, 2.0 * norm.sf(z)))


def wilcoxon_signed_rank(pairs: Sequence[Tuple[float, float]], method: Optional[WilcoxonMethod] = None) -> WilcoxonResult:
    """
    Paired two-sided Wilcoxon signed-rank test on differences a_i - b_i.

    Zero differences are discarded and tied magnitudes share their average
    rank. The exact null distribution is used up to EXACT_MAX_N non-zero
    pairs, the tie- and continuity-corrected normal approximation beyond.
    """
    diffs = _nonzero_differences(pairs)
    n = len(diffs)
    if n == 0:
        logger.warning("wilcoxon degenerate: all %d differences are zero", len(pairs))
        return WilcoxonResult(w_plus=0.0, n_effective=0, p_value=1.0, method=WilcoxonMethod.DEGENERATE,
                              degenerate=True)

    doubled = _doubled_ranks(diffs)
    observed = int(doubled[diffs > 0].sum())
    w_plus = observed / 2.0
    if method is None:
        method = WilcoxonMethod.EXACT if n <= EXACT_MAX_N else WilcoxonMethod.NORMAL_APPROX
    if WilcoxonMethod(method) is WilcoxonMethod.EXACT:
        p_value = _exact_p(doubled, observed)
    elif WilcoxonMethod(method) is WilcoxonMethod.NORMAL_APPROX:
        p_value = _normal_p(diffs, w_plus)
    else:
        raise ValidationError(f"unsupported wilcoxon method {method}")
    return WilcoxonResult(w_plus=w_plus, n_effective=n, p_value=p_value, method=WilcoxonMethod(method))


def aggregate(values: Sequence[float]) -> MetricSummary:
    """Mean and population standard deviation."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ValidationError("aggregate needs at least one value")
    return MetricSummary(mean=float(arr.mean()), std=float(arr.std(ddof=0)), n=int(arr.size))
