import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from ..config import OptimizerConfig
from ..exceptions import ShapeError
from .tensor import Tensor

logger = logging.getLogger(__name__)


@dataclass
class OptimizerState:
    config: OptimizerConfig
    total_steps: int
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def warmup_steps(self) -> int:
        return warmup_length(self.config, self.total_steps)


def warmup_length(config: OptimizerConfig, total_steps: int) -> int:
    if config.warmup_mode == "steps":
        return max(0, min(config.warmup_steps, total_steps))
    return int(math.floor(config.warmup_ratio * total_steps))


def learning_rate(config: OptimizerConfig, t: int, total_steps: int) -> float:
    """
    Learning rate for the update with zero-based index `t`.

    Linear warmup from 0 over the first W updates (so the very first update
    uses lr 0 whenever W > 0), then cosine decay from the peak at t = W to
    `lr * decay_ratio` at t = total_steps - 1.
    """
    warmup = warmup_length(config, total_steps)
    if t < warmup:
        return config.lr * t / warmup
    span = max(1, total_steps - 1 - warmup)
    progress = min(1.0, (t - warmup) / span)
    floor = config.lr * config.decay_ratio
    return floor + (config.lr - floor) * 0.5 * (1.0 + math.cos(math.pi * progress))


def clip_grad_norm(grads: Mapping[str, np.ndarray], max_norm: Optional[float]) -> Tuple[Dict[str, np.ndarray], float]:
    """Scale all gradients together so their global L2 norm is at most `max_norm`."""
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm is None or max_norm <= 0 or norm <= max_norm:
        return dict(grads), norm
    scale = max_norm / norm
    return {name: g * scale for name, g in grads.items()}, norm


def adamw_step(params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray], state: OptimizerState) -> Mapping[str, Tensor]:
    """Apply one AdamW update in place and return `params`."""
    cfg = state.config
    lr = learning_rate(cfg, state.step, state.total_steps)
    state.step += 1
    clipped, norm = clip_grad_norm({name: grads[name] for name in params if name in grads}, cfg.clip_norm)
    b1, b2 = cfg.beta1, cfg.beta2
    bias1 = 1.0 - b1 ** state.step
    bias2 = 1.0 - b2 ** state.step

    for name, p in params.items():
        g = clipped.get(name)
        if g is None:
            continue
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, parameter has {p.shape}")
        m = state.m.setdefault(name, np.zeros_like(p.data))
        v = state.v.setdefault(name, np.zeros_like(p.data))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if cfg.weight_decay:
            p.data *= 1.0 - lr * cfg.weight_decay
        p.data -= lr * (m / bias1) / (np.sqrt(v / bias2) + cfg.eps)

    logger.debug("adamw step=%d lr=%.6g grad_norm=%.6g", state.step, lr, norm)
    return params
