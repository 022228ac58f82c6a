import numpy as np
import pytest

from tgfuse.exceptions import ValidationError
from tgfuse.metrics import enumerate_sign_p, wilcoxon_signed_rank
from tgfuse.models import WilcoxonMethod


def _pairs(diffs):
    return [(1.0 + d, 1.0) for d in diffs]


def test_wilcoxon_fixtures():
    test_cases = [
        {"pairs": _pairs([0.5, 1.0, 1.5, 2.0, 2.5]), "w_plus": 15.0, "p": 0.0625, "n": 5},
        {"pairs": _pairs([-0.5, -1.0, -1.5, -2.0, -2.5]), "w_plus": 0.0, "p": 0.0625, "n": 5},
        {"pairs": _pairs([0.1 * (i + 1) for i in range(10)]), "w_plus": 55.0, "p": 2.0 / 1024.0, "n": 10},
        {"pairs": _pairs([0.0, 0.0, 0.5, 1.0, 1.5, 2.0, 2.5]), "w_plus": 15.0, "p": 0.0625, "n": 5},
    ]
    for case in test_cases:
        result = wilcoxon_signed_rank(case["pairs"])
        assert result.w_plus == case["w_plus"]
        assert result.p_value == case["p"]
        assert result.n_effective == case["n"]
        assert result.method is WilcoxonMethod.EXACT
        assert not result.degenerate


def test_all_zero_differences_are_degenerate():
    result = wilcoxon_signed_rank([(0.7, 0.7)] * 6)
    assert result.degenerate
    assert result.p_value == 1.0
    assert result.n_effective == 0
    assert result.method is WilcoxonMethod.DEGENERATE
    assert enumerate_sign_p([(0.7, 0.7)]) == 1.0


def test_exact_matches_sign_enumeration():
    rng = np.random.default_rng(0)
    for n in range(1, 13):
        for _ in range(5):
            # one decimal place forces tied magnitudes
            diffs = np.round(rng.normal(0.2, 1.0, size=n), 1)
            pairs = _pairs(diffs)
            result = wilcoxon_signed_rank(pairs)
            assert result.p_value == pytest.approx(enumerate_sign_p(pairs), abs=1e-12)
            assert 0.0 < result.p_value <= 1.0


def test_normal_approximation_is_close_to_exact():
    rng = np.random.default_rng(1)
    for _ in range(10):
        pairs = _pairs(rng.normal(0.3, 1.0, size=12))
        exact = wilcoxon_signed_rank(pairs, WilcoxonMethod.EXACT)
        approx = wilcoxon_signed_rank(pairs, WilcoxonMethod.NORMAL_APPROX)
        assert approx.method is WilcoxonMethod.NORMAL_APPROX
        assert approx.w_plus == exact.w_plus
        assert abs(approx.p_value - exact.p_value) <= 0.02


def test_large_samples_use_normal_approximation():
    diffs = np.linspace(-0.5, 2.0, 40)
    diffs = diffs[diffs != 0.0]
    result = wilcoxon_signed_rank(_pairs(diffs))
    assert result.method is WilcoxonMethod.NORMAL_APPROX
    assert 0.0 < result.p_value < 0.001


def test_p_value_is_symmetric_in_sign():
    diffs = [0.3, -0.1, 0.7, 0.2, -0.4, 0.9, 0.05]
    forward = wilcoxon_signed_rank(_pairs(diffs))
    flipped = wilcoxon_signed_rank(_pairs([-d for d in diffs]))
    assert forward.p_value == flipped.p_value
    assert forward.w_plus + flipped.w_plus == 7 * 8 / 2


def test_unsupported_method():
    with pytest.raises(ValidationError):
        wilcoxon_signed_rank(_pairs([1.0, 2.0]), WilcoxonMethod.DEGENERATE)
