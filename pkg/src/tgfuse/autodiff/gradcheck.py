import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Mapping, Optional, Tuple

import numpy as np

from .tensor import Tape, Tensor, no_grad

logger = logging.getLogger(__name__)


@dataclass
class GradcheckReport:
    per_param: Dict[str, float] = field(default_factory=dict)
    checked_entries: int = 0
    max_rel_error: float = 0.0
    worst_param: Optional[str] = None

    def per_module(self) -> Dict[str, float]:
        worst: Dict[str, float] = {}
        for name, err in self.per_param.items():
            module = name.split(".", 1)[0]
            worst[module] = max(worst.get(module, 0.0), err)
        return worst

    def passed(self, tolerance: float) -> bool:
        return self.max_rel_error < tolerance


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def numerical_gradient(fn: Callable[[], Tensor], param: Tensor, h: float = 1e-5,
                       indices: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Central differences of scalar `fn()` w.r.t. the selected flat entries of `param`."""
    flat = param.data.reshape(-1)
    if indices is None:
        indices = np.arange(flat.size)
    estimates = np.empty(len(indices), dtype=np.float64)
    with no_grad():
        for k, i in enumerate(indices):
            saved = flat[i]
            flat[i] = saved + h
            plus = fn().item()
            flat[i] = saved - h
            minus = fn().item()
            flat[i] = saved
            estimates[k] = (plus - minus) / (2.0 * h)
    return indices, estimates


def analytic_gradients(fn: Callable[[], Tensor]) -> Dict[Tensor, np.ndarray]:
    with Tape() as tape:
        loss = fn()
    return tape.backward(loss)


def check_gradients(fn: Callable[[], Tensor], params: Mapping[str, Tensor], h: float = 1e-5,
                    max_entries: Optional[int] = None, seed: int = 0, floor: float = 1e-6) -> GradcheckReport:
    """
    Compare tape gradients of `fn` with central finite differences.

    When the parameters hold more than `max_entries` values in total, each
    tensor is checked on an evenly shared random subset of its entries.
    """
    grads = analytic_gradients(fn)
    total = sum(p.size for p in params.values())
    per_tensor = None
    if max_entries is not None and total > max_entries:
        per_tensor = max(1, max_entries // max(1, len(params)))
    rng = np.random.default_rng(seed)

    report = GradcheckReport()
    for name, param in params.items():
        indices = None
        if per_tensor is not None and param.size > per_tensor:
            indices = np.sort(rng.choice(param.size, size=per_tensor, replace=False))
        indices, numeric = numerical_gradient(fn, param, h=h, indices=indices)
        analytic = grads.get(param, np.zeros_like(param.data)).reshape(-1)[indices]
        err = float(np.max(relative_error(analytic, numeric, floor))) if len(indices) else 0.0
        report.per_param[name] = err
        report.checked_entries += len(indices)
        if err >= report.max_rel_error:
            report.max_rel_error = err
            report.worst_param = name
        logger.debug("gradcheck param=%s entries=%d rel_err=%.3e", name, len(indices), err)
    return report
