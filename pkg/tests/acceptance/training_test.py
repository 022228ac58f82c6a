from pathlib import Path
from unittest.mock import patch

import numpy as np
import pytest
from scipy.special import erf

from tgfuse.autodiff import functional
from tgfuse.autodiff.optim import OptimizerState
from tgfuse.autodiff.tensor import as_tensor, make_result
from tgfuse.config import create_run_config, load_config
from tgfuse.data import make_sample
from tgfuse.exceptions import ValidationError
from tgfuse.model.vocab import Vocabulary
from tgfuse.models import DescriptionLevel
from tgfuse.training import BEST_CHECKPOINT, LAST_CHECKPOINT, TRAIN_LOG, Trainer, build_model, flip_enabled, run_gradcheck

TINY_CONFIG = Path(__file__).resolve().parents[2] / "configs" / "tiny.cfg"


def _small_config(**train):
    return create_run_config({
        "model": {"image_size": 32, "patch": 8, "dim": 16, "heads": 2, "image_layers": 1, "text_layers": 1,
                  "text_max_len": 16, "mixer_depth": 2, "ffn_ratio": 2, "init_std": 0.02},
        "data": {"canvas": 32, "min_size": 2, "max_size": 3, "max_shapes": 3},
        "train": dict({"batch_size": 4, "epochs": 2, "level": "simple"}, **train),
    })


def _samples(config, n, split="train"):
    vocab = Vocabulary.from_file()
    level = DescriptionLevel(config.train.level)
    return [make_sample(config.train.seed, split, i, level, config.data, vocab)[0] for i in range(n)]


def test_first_step_loss_is_near_chance(tmp_path):
    config = _small_config()
    model = build_model(config, Vocabulary.from_file())
    trainer = Trainer(config, model, tmp_path)
    state = OptimizerState(config.optim, total_steps=10)
    before = {name: p.data.copy() for name, p in model.named_parameters().items()}

    losses = trainer.step(_samples(config, 4), state)

    assert 0.6 <= losses.bce <= 0.8
    assert 0.0 <= losses.dice <= 1.0
    assert state.step == 1
    assert all(p.grad is None for p in model.named_parameters().values())
    # warmup makes the first learning rate zero, so only the second step moves weights
    trainer.step(_samples(config, 4), state)
    moved = [name for name, p in model.named_parameters().items() if not np.array_equal(p.data, before[name])]
    assert moved


def test_frozen_encoders_do_not_move(tmp_path):
    config = _small_config(freeze_encoders=True)
    model = build_model(config, Vocabulary.from_file())
    frozen = {name: p.data.copy() for name, p in model.named_parameters().items()
              if name.startswith(("image_encoder", "text_encoder"))}
    assert frozen
    state = OptimizerState(config.optim, total_steps=4)
    trainer = Trainer(config, model, tmp_path)
    for _ in range(3):
        trainer.step(_samples(config, 4), state)
    for name, value in frozen.items():
        np.testing.assert_array_equal(model.named_parameters()[name].data, value)


def test_unfreezing_restores_encoder_training(tmp_path):
    config = _small_config(freeze_encoders=True)
    model = build_model(config, Vocabulary.from_file())
    all_names = set(model.named_parameters())
    assert set(model.trainable_parameters()) < all_names

    model.freeze_encoders(False)
    assert set(model.trainable_parameters()) == all_names
    before = model.image_encoder.patch_embed.proj.weight.data.copy()
    state = OptimizerState(config.optim, total_steps=4)
    trainer = Trainer(config, model, tmp_path)
    for _ in range(2):
        trainer.step(_samples(config, 4), state)
    assert not np.array_equal(model.image_encoder.patch_embed.proj.weight.data, before)


def test_training_is_deterministic(tmp_path):
    config = _small_config()
    train, val = _samples(config, 8), _samples(config, 4, "val")
    vocab = Vocabulary.from_file()

    log_a = Trainer(config, build_model(config, vocab), tmp_path / "a").fit(train, val)
    log_b = Trainer(config, build_model(config, vocab), tmp_path / "b").fit(train, val)

    for name in (LAST_CHECKPOINT, BEST_CHECKPOINT):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert [e.total for e in log_a.epochs] == [e.total for e in log_b.epochs]
    assert len(log_a.epochs) == 2
    header = (tmp_path / "a" / TRAIN_LOG).read_text(encoding="utf-8").splitlines()[0]
    assert header == "epoch,bce,dice,bbox,total,val_dsc,lr,wall_clock"
    assert (tmp_path / "a" / "best.cfg").is_file()

    with pytest.raises(ValidationError):
        Trainer(config, build_model(config, vocab), tmp_path / "c").fit([], val)


def test_best_checkpoint_holds_final_weights_without_validation(tmp_path):
    config = _small_config(epochs=4)
    log = Trainer(config, build_model(config, Vocabulary.from_file()), tmp_path).fit(_samples(config, 8), [])

    assert log.best_checkpoint == str(tmp_path / BEST_CHECKPOINT)
    assert (tmp_path / BEST_CHECKPOINT).read_bytes() == (tmp_path / LAST_CHECKPOINT).read_bytes()
    assert len(log.epochs) == 4


def test_flip_is_disabled_for_complex_descriptions():
    test_cases = [
        {"train": {"level": "complex"}, "expected": False},
        {"train": {"level": "simple"}, "expected": True},
        {"train": {"level": "none"}, "expected": True},
        {"train": {"level": "simple", "flip": "false"}, "expected": False},
    ]
    for case in test_cases:
        assert flip_enabled(create_run_config(case)) is case["expected"]


def test_tiny_model_gradients_match_finite_differences():
    config = load_config(TINY_CONFIG, {"train": {"gradcheck_max_params": 1500}})
    report = run_gradcheck(config)
    assert report.passed(config.train.gradcheck_tolerance), report.per_param
    assert report.checked_entries > 0
    assert {"image_encoder", "text_encoder", "mixer", "decoder"} <= set(report.per_module())


def _gelu_with_wrong_backward(x):
    x = as_tensor(x)
    data = x.data * 0.5 * (1.0 + erf(x.data / np.sqrt(2.0)))
    return make_result("gelu", (x,), data, lambda g: (g * 0.5,))


def test_gradcheck_catches_a_broken_backward():
    config = load_config(TINY_CONFIG, {"train": {"gradcheck_max_params": 600}})
    with patch.object(functional, "gelu", _gelu_with_wrong_backward):
        report = run_gradcheck(config)
    assert not report.passed(config.train.gradcheck_tolerance)
