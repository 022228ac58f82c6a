import csv
import logging
import math
import time
from dataclasses import asdict
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from .autodiff.gradcheck import GradcheckReport, check_gradients
from .autodiff.optim import OptimizerState, adamw_step, learning_rate
from .autodiff.tensor import Tape, Tensor
from .config import RunConfig
from .data.dataset import flip_horizontal
from .evaluation import predict_masks, stack_batch
from .exceptions import TrainingError, ValidationError
from .losses import total_loss
from .metrics.surface import dsc
from .model.checkpoint import load_into, save_checkpoint
from .model.segmenter import TextGuidedSegmenter
from .model.vocab import Vocabulary
from .models import DescriptionLevel, EpochRecord, LossBreakdown, Sample, TrainLog

logger = logging.getLogger(__name__)

BEST_CHECKPOINT = "best.tglm"
LAST_CHECKPOINT = "last.tglm"
TRAIN_LOG = "train_log.csv"
LOG_COLUMNS = ["epoch", "bce", "dice", "bbox", "total", "val_dsc", "lr", "wall_clock"]


def build_model(config: RunConfig, vocab: Vocabulary) -> TextGuidedSegmenter:
    """Fresh model seeded from the run seed, warm-started and frozen as configured."""
    model = TextGuidedSegmenter(config.model, len(vocab), seed=config.train.seed)
    if config.train.init_checkpoint:
        load_into(model, config.train.init_checkpoint, expected=config)
        logger.info("warm start checkpoint=%s", config.train.init_checkpoint)
    model.freeze_encoders(config.train.freeze_encoders)
    return model


def flip_enabled(config: RunConfig) -> bool:
    """Mirroring would contradict left/right words, so complex runs never flip."""
    return config.train.flip and DescriptionLevel(config.train.level) is not DescriptionLevel.COMPLEX


class Trainer:
    """
    Single-threaded AdamW training over in-memory samples.

    Every random choice (init, shuffling, flips) flows from `config.train.seed`,
    so a run is reproducible bit for bit.
    """

    def __init__(self, config: RunConfig, model: TextGuidedSegmenter, out_dir: Union[str, Path]):
        self.config = config
        self.model = model
        self.out_dir = Path(out_dir)
        self.rng = np.random.default_rng(config.train.seed)
        self.flip = flip_enabled(config)
        self.global_step = 0

    def _batches(self, samples: Sequence[Sample]) -> List[List[Sample]]:
        order = self.rng.permutation(len(samples))
        size = self.config.train.batch_size
        batches = []
        for start in range(0, len(order), size):
            batch = [samples[int(i)] for i in order[start:start + size]]
            if self.flip:
                flips = self.rng.random(len(batch)) < 0.5
                batch = [flip_horizontal(s) if f else s for s, f in zip(batch, flips)]
            batches.append(batch)
        return batches

    def step(self, batch: Sequence[Sample], state: OptimizerState) -> LossBreakdown:
        """Forward, backward and one optimizer update on a batch."""
        images, tokens, masks, boxes = stack_batch(batch, self.config.model.text_max_len)
        with Tape() as tape:
            pred, _ = self.model(images, tokens)
            losses = total_loss(pred, masks, boxes, self.config.train.lambda_bbox)
        if not math.isfinite(losses.total_value):
            raise TrainingError(f"non-finite loss {losses.total_value}", self.global_step)
        tape.backward(losses.total)
        params = self.model.trainable_parameters()
        grads: Dict[str, np.ndarray] = {name: p.grad for name, p in params.items() if p.grad is not None}
        adamw_step(params, grads, state)
        for p in self.model.named_parameters().values():
            p.grad = None
        self.global_step += 1
        return losses

    def validate(self, samples: Sequence[Sample]) -> float:
        if not samples:
            return 0.0
        predicted = predict_masks(self.model, samples, self.config.train.batch_size, self.config.train.threshold)
        return float(np.mean([dsc(s.gt_mask, agc) for s, agc in zip(samples, predicted)]))

    def fit(self, train: Sequence[Sample], val: Sequence[Sample]) -> TrainLog:
        if not train:
            raise ValidationError("training set is empty")
        cfg = self.config.train
        steps_per_epoch = math.ceil(len(train) / cfg.batch_size)
        state = OptimizerState(self.config.optim, total_steps=cfg.epochs * steps_per_epoch)
        log = TrainLog()
        best_path = self.out_dir / BEST_CHECKPOINT
        started = time.perf_counter()
        logger.info("train samples=%d epochs=%d steps=%d warmup=%d flip=%s trainable=%d",
                    len(train), cfg.epochs, state.total_steps, state.warmup_steps, self.flip,
                    self.model.num_parameters(trainable_only=True))
        if not val:
            logger.warning("no validation samples; %s will hold the final weights", BEST_CHECKPOINT)

        for epoch in range(cfg.epochs):
            sums = {"bce": 0.0, "dice": 0.0, "bbox": 0.0}
            batches = self._batches(train)
            lr = learning_rate(self.config.optim, state.step, state.total_steps)
            for batch in batches:
                lr = learning_rate(self.config.optim, state.step, state.total_steps)
                losses = self.step(batch, state)
                sums["bce"] += losses.bce
                sums["dice"] += losses.dice
                sums["bbox"] += losses.bbox
            bce, dice, bbox = (sums[k] / len(batches) for k in ("bce", "dice", "bbox"))
            val_dsc = self.validate(val)
            record = EpochRecord(epoch=epoch, bce=bce, dice=dice, bbox=bbox,
                                 total=bce + dice + cfg.lambda_bbox * bbox, val_dsc=val_dsc, lr=lr,
                                 wall_clock=time.perf_counter() - started)
            log.epochs.append(record)
            logger.info("epoch=%d bce=%.4f dice=%.4f bbox=%.4f total=%.4f val_dsc=%.4f lr=%.3g",
                        epoch, bce, dice, bbox, record.total, val_dsc, lr)
            if val and val_dsc > log.best_val_dsc:
                log.best_val_dsc = val_dsc
                log.best_checkpoint = str(save_checkpoint(self.model, best_path, self.config))

        log.last_checkpoint = str(save_checkpoint(self.model, self.out_dir / LAST_CHECKPOINT, self.config))
        if not val:
            log.best_checkpoint = str(save_checkpoint(self.model, best_path, self.config))
        write_train_log(log, self.out_dir / TRAIN_LOG)
        return log


def write_train_log(log: TrainLog, path: Union[str, Path]) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=LOG_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for record in log.epochs:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in asdict(record).items()})
    return p


def train(config: RunConfig, train_samples: Sequence[Sample], val_samples: Sequence[Sample],
          out_dir: Union[str, Path], vocab: Optional[Vocabulary] = None) -> TrainLog:
    vocab = vocab or Vocabulary.from_file(config.paths.vocab or None)
    model = build_model(config, vocab)
    return Trainer(config, model, out_dir).fit(train_samples, val_samples)


def _gradcheck_batch(config: RunConfig, vocab: Vocabulary, batch: int = 2):
    rng = np.random.default_rng(config.train.seed)
    m = config.model
    images = rng.uniform(0.0, 1.0, size=(batch, m.image_size, m.image_size, m.channels))
    tokens = np.full((batch, m.text_max_len), Vocabulary.PAD, dtype=np.int64)
    for row in range(batch):
        body = rng.integers(len(Vocabulary.RESERVED), len(vocab), size=max(0, m.text_max_len - 2 - row))
        ids = vocab.encode([vocab.token(int(t)) for t in body])
        tokens[row, :len(ids)] = ids
    masks = (rng.uniform(size=(batch, m.image_size, m.image_size)) < 0.3).astype(np.float64)
    corners = np.sort(rng.uniform(size=(batch, 2, 2)), axis=1)
    boxes = np.stack([corners[:, 0, 0], corners[:, 0, 1], corners[:, 1, 0], corners[:, 1, 1]], axis=1)
    return images, tokens, masks, boxes


def run_gradcheck(config: RunConfig, vocab: Optional[Vocabulary] = None) -> GradcheckReport:
    """Finite-difference check of the full model and loss on a random tiny batch."""
    vocab = vocab or Vocabulary.from_file(config.paths.vocab or None)
    model = TextGuidedSegmenter(config.model, len(vocab), seed=config.train.seed)
    images, tokens, masks, boxes = _gradcheck_batch(config, vocab)
    lambda_bbox = config.train.lambda_bbox

    def loss() -> Tensor:
        pred, _ = model(images, tokens)
        return total_loss(pred, masks, boxes, lambda_bbox).total

    report = check_gradients(loss, model.named_parameters(), max_entries=config.train.gradcheck_max_params,
                             seed=config.train.seed)
    logger.info("gradcheck entries=%d max_rel_error=%.3e worst=%s", report.checked_entries,
                report.max_rel_error, report.worst_param)
    return report
