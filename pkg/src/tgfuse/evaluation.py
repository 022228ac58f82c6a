import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .autodiff.tensor import no_grad
from .config import RunConfig
from .exceptions import ValidationError
from .metrics.report import EvalItem, evaluate_masks
from .model.decoder import binarize
from .model.segmenter import TextGuidedSegmenter
from .model.vocab import Vocabulary
from .models import HD95Mode, MetricsReport, Sample
from .utils.worker_pool import WorkerPool

logger = logging.getLogger(__name__)


def stack_batch(samples: Sequence[Sample], max_len: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Images (B,H,W,C), PAD-filled tokens (B,L), masks (B,H,W) and boxes (B,4)."""
    if not samples:
        raise ValidationError("empty batch")
    images = np.stack([s.image for s in samples]).astype(np.float64)
    tokens = np.stack([Vocabulary.pad(s.token_ids, max_len) for s in samples])
    masks = np.stack([s.gt_mask for s in samples]).astype(np.float64)
    boxes = np.array([s.gt_bbox for s in samples], dtype=np.float64)
    return images, tokens, masks, boxes


def predict_masks(model: TextGuidedSegmenter, samples: Sequence[Sample], batch_size: int,
                  threshold: float = 0.5) -> List[np.ndarray]:
    """Binary masks for every sample, computed without recording a tape."""
    out: List[np.ndarray] = []
    max_len = model.config.text_max_len
    with no_grad():
        for start in range(0, len(samples), batch_size):
            batch = samples[start:start + batch_size]
            images, tokens, _, _ = stack_batch(batch, max_len)
            pred, _ = model(images, tokens)
            out.extend(binarize(pred.mask_probs, threshold))
    return out


def evaluate_model(model: TextGuidedSegmenter, samples: Sequence[Sample], config: RunConfig,
                   oracle: bool = False, pool: Optional[WorkerPool] = None) -> MetricsReport:
    """
    Score a model on `samples`; with `oracle` the ground truth is scored
    against itself and the model is not run.
    """
    if oracle:
        predicted = [s.gt_mask for s in samples]
    else:
        predicted = predict_masks(model, samples, config.train.batch_size, config.train.threshold)
    items: List[EvalItem] = [
        (s.sample_id, s.gt_mask, agc, s.target_kind.value if s.target_kind else None)
        for s, agc in zip(samples, predicted)
    ]
    report = evaluate_masks(items, HD95Mode(config.train.hd95_mode), pool)
    logger.info("eval samples=%d dsc=%.4f hd95=%.4f asd=%.4f undefined=%d", len(samples),
                report.summary["dsc"].mean, report.summary["hd95"].mean, report.summary["asd"].mean,
                report.undefined_count)
    return report
