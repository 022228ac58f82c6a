import numpy as np
import pytest

from tgfuse.autodiff.tensor import Tensor
from tgfuse.exceptions import CheckpointError, ConfigurationError, ShapeError
from tgfuse.nn import AttentionBlock, FeedForward, Linear, Module, PatchEmbed, UpConv2x, set_frozen


def _rng(seed=0):
    return np.random.default_rng(seed)


def test_single_key_attention_passes_value_through():
    rng = _rng()
    block = AttentionBlock(8, 2, rng, std=0.3)
    q = rng.normal(size=(3, 8))
    kv = rng.normal(size=(1, 8))

    out = block(Tensor(q), Tensor(kv), Tensor(kv))

    expected = np.repeat(kv @ block.wv.data @ block.wo.data, 3, axis=0)
    np.testing.assert_allclose(out.data, expected, rtol=1e-12, atol=1e-14)


def test_causal_attention_ignores_future_tokens():
    rng = _rng(1)
    block = AttentionBlock(8, 2, rng, std=0.3, causal=True)
    x = rng.normal(size=(4, 8))
    changed = x.copy()
    changed[2:] = rng.normal(size=(2, 8))

    before = block(Tensor(x), Tensor(x), Tensor(x)).data
    after = block(Tensor(changed), Tensor(changed), Tensor(changed)).data

    np.testing.assert_array_equal(before[:2], after[:2])
    assert not np.allclose(before[2:], after[2:])


def test_key_mask_hides_keys():
    rng = _rng(2)
    block = AttentionBlock(8, 4, rng, std=0.3)
    q = rng.normal(size=(3, 8))
    kv = rng.normal(size=(5, 8))
    key_mask = np.array([True, True, False, True, False])
    changed = kv.copy()
    changed[[2, 4]] = rng.normal(size=(2, 8))

    before = block(Tensor(q), Tensor(kv), Tensor(kv), key_mask).data
    after = block(Tensor(q), Tensor(changed), Tensor(changed), key_mask).data

    np.testing.assert_array_equal(before, after)


def test_attention_shape_is_head_count_invariant():
    rng = _rng(3)
    q = Tensor(rng.normal(size=(2, 3, 8)))
    kv = Tensor(rng.normal(size=(2, 5, 8)))
    for heads in (1, 2, 4, 8):
        block = AttentionBlock(8, heads, rng)
        assert block(q, kv, kv).shape == (2, 3, 8)


def test_attention_errors():
    rng = _rng(4)
    test_cases = [
        {"build": lambda: AttentionBlock(10, 4, rng), "error": ConfigurationError},
        {"build": lambda: AttentionBlock(8, 2, rng)(Tensor(np.ones((2, 6))), Tensor(np.ones((2, 8))),
                                                    Tensor(np.ones((2, 8)))), "error": ShapeError},
        {"build": lambda: AttentionBlock(8, 2, rng, causal=True)(Tensor(np.ones((2, 8))), Tensor(np.ones((3, 8))),
                                                                 Tensor(np.ones((3, 8)))), "error": ShapeError},
    ]
    for case in test_cases:
        with pytest.raises(case["error"]):
            case["build"]()


def test_upconv_doubles_size_and_halves_channels():
    rng = _rng(5)
    first = UpConv2x(64, rng)
    second = UpConv2x(32, rng)
    x = Tensor(rng.normal(size=(8, 8, 64)))

    f1 = first(x)
    f2 = second(f1)

    assert f1.shape == (16, 16, 32)
    assert f2.shape == (32, 32, 16)
    assert second(first(Tensor(rng.normal(size=(2, 8, 8, 64))))).shape == (2, 32, 32, 16)


def test_upconv_places_kernel_taps():
    rng = _rng(6)
    block = UpConv2x(2, rng)
    block.weight.data[...] = np.array([[1.0, 2.0, 3.0, 4.0], [0.0, 0.0, 0.0, 0.0]])
    x = np.zeros((2, 2, 2))
    x[1, 0, 0] = 1.0

    out = block(Tensor(x)).data[..., 0]

    expected = np.zeros((4, 4))
    expected[2:4, 0:2] = [[1.0, 2.0], [3.0, 4.0]]
    np.testing.assert_array_equal(out, expected)


def test_upconv_rejects_odd_channels():
    with pytest.raises(ConfigurationError):
        UpConv2x(3, _rng())


def test_patch_embed_orders_patches_row_major():
    rng = _rng(7)
    block = PatchEmbed(8, 4, 1, 2, rng)
    block.proj.weight.data[...] = 0.0
    block.proj.weight.data[:, 0] = 1.0 / 16.0
    block.pos.data[...] = 0.0
    image = np.zeros((8, 8, 1))
    for i in range(2):
        for j in range(2):
            image[4 * i:4 * i + 4, 4 * j:4 * j + 4, 0] = 2 * i + j

    tokens = block(Tensor(image))

    assert tokens.shape == (4, 2)
    np.testing.assert_allclose(tokens.data[:, 0], [0.0, 1.0, 2.0, 3.0])


def test_patch_embed_rejects_indivisible_patch():
    with pytest.raises(ConfigurationError):
        PatchEmbed(10, 4, 1, 8, _rng())


def test_feed_forward_checks_width():
    block = FeedForward(4, 8, _rng())
    with pytest.raises(ShapeError):
        block(Tensor(np.ones((2, 5))))


class _Pair(Module):
    def __init__(self, rng):
        self.first = Linear(3, 4, rng)
        self.second = Linear(4, 2, rng, bias=False)


def test_module_parameter_names_and_state():
    model = _Pair(_rng(8))
    assert list(model.named_parameters()) == ["first.weight", "first.bias", "second.weight"]
    assert model.num_parameters() == 3 * 4 + 4 + 4 * 2

    other = _Pair(_rng(9))
    other.load_state_dict(model.state_dict())
    for name, p in other.named_parameters().items():
        np.testing.assert_array_equal(p.data, model.named_parameters()[name].data)

    bad = model.state_dict()
    bad["first.bias"] = np.zeros(5)
    with pytest.raises(CheckpointError):
        other.load_state_dict(bad)
    with pytest.raises(CheckpointError):
        other.load_state_dict({"first.weight": np.zeros((3, 4))})


def test_frozen_module_is_not_trainable():
    model = _Pair(_rng(10))
    set_frozen(model.first, True)
    assert list(model.trainable_parameters()) == ["second.weight"]
    assert model.num_parameters(trainable_only=True) == 8
    set_frozen(model.first, False)
    assert len(model.trainable_parameters()) == 3
