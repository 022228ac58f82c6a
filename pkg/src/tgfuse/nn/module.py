from typing import Dict, Iterator, Mapping, Tuple

import numpy as np

from ..autodiff.tensor import Parameter
from ..exceptions import CheckpointError


class Module:
    """
    Container for parameters and sub-modules.

    Parameters are discovered from instance attributes in definition order, so
    naming (and therefore checkpoint layout) is deterministic.
    """

    frozen: bool = False

    def _walk(self, prefix: str, frozen: bool) -> Iterator[Tuple[str, Parameter, bool]]:
        frozen = frozen or self.frozen
        for key, value in vars(self).items():
            if key.startswith("_"):
                continue
            name = f"{prefix}{key}"
            if isinstance(value, Parameter):
                yield name, value, frozen
            elif isinstance(value, Module):
                yield from value._walk(f"{name}.", frozen)
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item._walk(f"{name}.{i}.", frozen)

    def named_parameters(self) -> Dict[str, Parameter]:
        return {name: p for name, p, _ in self._walk("", False)}

    def trainable_parameters(self) -> Dict[str, Parameter]:
        return {name: p for name, p, frozen in self._walk("", False) if not frozen}

    def num_parameters(self, trainable_only: bool = False) -> int:
        params = self.trainable_parameters() if trainable_only else self.named_parameters()
        return sum(p.size for p in params.values())

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters().items()}

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        params = self.named_parameters()
        missing = sorted(set(params) - set(state))
        unexpected = sorted(set(state) - set(params))
        if missing or unexpected:
            raise CheckpointError(f"parameter names differ: missing={missing[:3]} unexpected={unexpected[:3]}")
        for name, p in params.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.shape:
                raise CheckpointError(f"parameter {name} has shape {p.shape}, checkpoint has {value.shape}")
            p.data[...] = value

    def fill_(self, value: float) -> "Module":
        for p in self.named_parameters().values():
            p.data[...] = value
        return self


def set_frozen(module: Module, flag: bool) -> None:
    """Exclude (or re-include) every parameter under `module` from optimizer updates."""
    module.frozen = flag
