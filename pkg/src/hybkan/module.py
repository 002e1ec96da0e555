"""Minimal parameter container shared by every layer."""

from __future__ import annotations

from typing import Iterator

import numpy as np


class Module:
    """Holds named parameters, their gradients, and child modules.

    Subclasses register arrays with :meth:`add_param` and sub-layers with
    :meth:`add_child`.  ``forward`` caches whatever ``backward`` needs;
    ``backward`` accumulates into ``self.grads`` and returns the input
    gradient.
    """

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.children: dict[str, Module] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self.no_decay: set[str] = set()
        self.training = True

    def add_param(self, name: str, value: np.ndarray, decay: bool = True) -> np.ndarray:
        self.params[name] = value
        self.grads[name] = np.zeros(value.shape, dtype=value.dtype)
        if not decay:
            self.no_decay.add(name)
        return value

    def add_buffer(self, name: str, value: np.ndarray) -> np.ndarray:
        self.buffers[name] = value
        return value

    def add_child(self, name: str, module: "Module") -> "Module":
        self.children[name] = module
        return module

    def named_modules(self, prefix: str = "") -> Iterator[tuple[str, "Module"]]:
        yield prefix, self
        for name, child in self.children.items():
            yield from child.named_modules(f"{prefix}{name}.")

    def named_parameters(self) -> Iterator[tuple[str, np.ndarray]]:
        for prefix, mod in self.named_modules():
            for name, value in mod.params.items():
                yield prefix + name, value

    def named_buffers(self) -> Iterator[tuple[str, np.ndarray]]:
        for prefix, mod in self.named_modules():
            for name, value in mod.buffers.items():
                yield prefix + name, value

    def named_grads(self) -> Iterator[tuple[str, np.ndarray]]:
        for prefix, mod in self.named_modules():
            for name, value in mod.grads.items():
                yield prefix + name, value

    def decay_mask(self) -> dict[str, bool]:
        out = {}
        for prefix, mod in self.named_modules():
            for name in mod.params:
                out[prefix + name] = name not in mod.no_decay
        return out

    def zero_grad(self):
        for _, mod in self.named_modules():
            for g in mod.grads.values():
                g.fill(0.0)

    def train(self, mode: bool = True):
        for _, mod in self.named_modules():
            mod.training = mode
        return self

    def eval(self):
        return self.train(False)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: value.copy() for name, value in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        own = dict(self.named_parameters())
        for name, value in own.items():
            value[...] = state[name]

    def post_step(self):
        """Run every sub-module's constraint projection after an optimizer step."""
        for _, mod in self.named_modules():
            mod.project()

    def project(self):
        pass

    def num_parameters(self) -> int:
        return sum(v.size for _, v in self.named_parameters())
