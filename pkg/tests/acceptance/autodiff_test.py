import math

import numpy as np
import pytest

from tgfuse.autodiff import functional as F
from tgfuse.autodiff.gradcheck import check_gradients, relative_error
from tgfuse.autodiff.optim import OptimizerState, adamw_step, clip_grad_norm, learning_rate
from tgfuse.autodiff.tensor import (
    Parameter,
    Tape,
    Tensor,
    backward,
    concat,
    getitem,
    matmul,
    no_grad,
    set_debug,
)
from tgfuse.config import OptimizerConfig
from tgfuse.exceptions import ContractError, NonFiniteError, ShapeError


def _param(rng, *shape):
    return Parameter(rng.normal(size=shape))


def test_op_gradients_match_finite_differences():
    rng = np.random.default_rng(0)
    x = _param(rng, 3, 4)
    y = _param(rng, 4, 5)
    b = _param(rng, 5)
    gain = Parameter(rng.uniform(0.5, 1.5, size=4))
    bias = _param(rng, 4)
    pos = Parameter(rng.uniform(0.2, 2.0, size=(3, 4)))
    table = _param(rng, 6, 4)
    mask = rng.random((3, 4)) < 0.3

    test_cases = [
        {"name": "matmul_bias", "fn": lambda: (matmul(x, y) + b).sum(), "params": {"x": x, "y": y, "b": b}},
        {"name": "broadcast_mul", "fn": lambda: (x * b[:4]).mean(), "params": {"x": x, "b": b}},
        {"name": "div", "fn": lambda: (x / pos).sum(), "params": {"x": x, "pos": pos}},
        {"name": "softmax", "fn": lambda: (F.softmax(x, axis=-1) * pos).sum(), "params": {"x": x}},
        {"name": "layer_norm", "fn": lambda: (F.layer_norm(x, gain, bias) * pos).sum(),
         "params": {"x": x, "gain": gain, "bias": bias}},
        {"name": "gelu", "fn": lambda: F.gelu(x).sum(), "params": {"x": x}},
        {"name": "sigmoid", "fn": lambda: (F.sigmoid(x) * pos).sum(), "params": {"x": x}},
        {"name": "log_exp", "fn": lambda: (F.log(pos) + F.exp(x)).mean(), "params": {"x": x, "pos": pos}},
        {"name": "transpose_reshape", "fn": lambda: (x.T.reshape(2, 6) * np.arange(12.0).reshape(2, 6)).sum(),
         "params": {"x": x}},
        {"name": "getitem", "fn": lambda: (getitem(x, (slice(None), 1)) * 3.0).sum(), "params": {"x": x}},
        {"name": "concat", "fn": lambda: (concat([x, pos], axis=0) * np.arange(24.0).reshape(6, 4)).sum(),
         "params": {"x": x, "pos": pos}},
        {"name": "masked_fill", "fn": lambda: (F.masked_fill(x, mask, 0.0) * pos).sum(), "params": {"x": x}},
        {"name": "embedding", "fn": lambda: (F.embedding(table, np.array([[0, 5], [2, 2]])) * 2.0).sum(),
         "params": {"table": table}},
        {"name": "smooth_l1", "fn": lambda: F.smooth_l1(x, np.zeros((3, 4)), beta=0.5), "params": {"x": x}},
        {"name": "min_max", "fn": lambda: (F.minimum(x, pos) + F.maximum(x, pos) * 2.0).sum(),
         "params": {"x": x, "pos": pos}},
    ]

    for case in test_cases:
        report = check_gradients(case["fn"], case["params"])
        assert report.max_rel_error < 1e-6, f"{case['name']}: {report.max_rel_error} ({report.worst_param})"


def test_unused_leaf_receives_zero_gradient():
    rng = np.random.default_rng(1)
    used = _param(rng, 2, 2)
    unused = _param(rng, 3)
    with Tape() as tape:
        loss = (used * used).sum()
        _ = unused * 2.0
    grads = tape.backward(loss)
    np.testing.assert_array_equal(grads[unused], np.zeros(3))
    np.testing.assert_allclose(grads[used], 2.0 * used.data)


def test_shared_node_accumulates_gradient():
    x = Parameter(np.array([3.0]))
    with Tape():
        loss = (x * x + x * 4.0).sum()
    backward(loss)
    np.testing.assert_allclose(x.grad, [10.0])


def test_tape_contract_errors():
    x = Parameter(np.ones(3))
    with Tape() as tape:
        loss = (x * 2.0).sum()
        vector = x * 2.0
    with pytest.raises(ContractError):
        tape.backward(vector)
    tape.backward(loss)
    with pytest.raises(ContractError):
        tape.backward(loss)

    with pytest.raises(ContractError):
        backward(Tensor(np.array(1.0)))


def test_no_grad_records_nothing():
    x = Parameter(np.ones(3))
    with Tape() as tape:
        with no_grad():
            y = x * 2.0
    assert len(tape) == 0
    assert not y.requires_grad


def test_matmul_dimension_mismatch():
    with pytest.raises(ShapeError) as exc_info:
        matmul(np.ones((2, 3)), np.ones((4, 2)))
    assert "(2, 3)" in str(exc_info.value)
    assert "(4, 2)" in str(exc_info.value)


def test_debug_mode_rejects_non_finite_values():
    set_debug(True)
    try:
        with pytest.raises(NonFiniteError):
            with np.errstate(divide="ignore"):
                F.log(np.zeros(2))
    finally:
        set_debug(False)


def test_relative_error_uses_floor():
    err = relative_error(np.array([1e-9, 2.0]), np.array([0.0, 1.0]), floor=1e-6)
    np.testing.assert_allclose(err, [1e-3, 0.5])


def test_learning_rate_schedule():
    config = OptimizerConfig(lr=0.1, warmup_mode="ratio", warmup_ratio=0.25, decay_ratio=0.0)
    total = 20
    warmup = 5

    assert learning_rate(config, 0, total) == 0.0
    assert learning_rate(config, 2, total) == pytest.approx(0.1 * 2 / warmup)
    assert learning_rate(config, warmup, total) == pytest.approx(0.1)
    assert learning_rate(config, total - 1, total) == pytest.approx(0.0, abs=1e-15)
    values = [learning_rate(config, t, total) for t in range(warmup, total)]
    assert all(a >= b for a, b in zip(values, values[1:]))

    steps = OptimizerConfig(lr=0.1, warmup_mode="steps", warmup_steps=0, decay_ratio=0.5)
    assert learning_rate(steps, 0, 10) == pytest.approx(0.1)
    assert learning_rate(steps, 9, 10) == pytest.approx(0.05)


def test_clip_grad_norm_scales_globally():
    grads = {"a": np.array([3.0, 0.0]), "b": np.array([[4.0]])}
    clipped, norm = clip_grad_norm(grads, 1.0)
    assert norm == pytest.approx(5.0)
    np.testing.assert_allclose(clipped["a"], [0.6, 0.0])
    np.testing.assert_allclose(clipped["b"], [[0.8]])

    untouched, _ = clip_grad_norm(grads, 10.0)
    np.testing.assert_array_equal(untouched["a"], grads["a"])


def test_adamw_first_step():
    config = OptimizerConfig(lr=0.1, weight_decay=0.5, warmup_mode="steps", warmup_steps=0, clip_norm=0.0)
    p = Parameter(np.array([1.0, -2.0, 0.5]))
    g = np.array([0.3, -0.2, 0.0])
    state = OptimizerState(config, total_steps=10)

    adamw_step({"p": p}, {"p": g}, state)

    decayed = np.array([1.0, -2.0, 0.5]) * (1.0 - 0.1 * 0.5)
    expected = decayed - 0.1 * g / (np.abs(g) + config.eps)
    np.testing.assert_allclose(p.data, expected, rtol=1e-12)
    assert state.step == 1
    assert state.m["p"].shape == p.shape


def test_adamw_rejects_mismatched_gradient():
    config = OptimizerConfig(warmup_mode="steps", warmup_steps=0, clip_norm=0.0)
    state = OptimizerState(config, total_steps=2)
    with pytest.raises(ShapeError):
        adamw_step({"p": Parameter(np.ones(3))}, {"p": np.ones(4)}, state)


def test_gradient_descent_reduces_quadratic():
    target = np.array([1.0, -1.0])
    p = Parameter(np.zeros(2))
    config = OptimizerConfig(lr=0.1, weight_decay=0.0, warmup_mode="steps", warmup_steps=0,
                             decay_ratio=0.0, clip_norm=0.0)
    state = OptimizerState(config, total_steps=200)
    for _ in range(200):
        with Tape() as tape:
            loss = ((p - target) * (p - target)).sum()
        tape.backward(loss)
        adamw_step({"p": p}, {"p": p.grad}, state)
    assert math.isclose(p.data[0], 1.0, abs_tol=0.05)
    assert math.isclose(p.data[1], -1.0, abs_tol=0.05)
