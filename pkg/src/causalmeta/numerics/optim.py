"""Adaptive-moment gradient descent over parameter trees."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .params import ParamTree, global_norm


@dataclass
class Adam:
    rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float | None = None
    step_count: int = 0
    m: ParamTree = field(default_factory=dict)
    v: ParamTree = field(default_factory=dict)

    def step(self, params: ParamTree, grads: ParamTree, rate: float | None = None) -> ParamTree:
        """Return updated parameters; ``params`` is left untouched."""
        lr = self.rate if rate is None else rate
        if self.clip_norm is not None:
            norm = global_norm(grads)
            if norm > self.clip_norm:
                grads = {k: g * (self.clip_norm / norm) for k, g in grads.items()}
        self.step_count += 1
        b1c = 1.0 - self.beta1 ** self.step_count
        b2c = 1.0 - self.beta2 ** self.step_count
        out = {}
        for k, p in params.items():
            g = grads[k]
            m = self.m.get(k)
            v = self.v.get(k)
            m = (1 - self.beta1) * g if m is None else self.beta1 * m + (1 - self.beta1) * g
            v = (1 - self.beta2) * g * g if v is None else self.beta2 * v + (1 - self.beta2) * g * g
            self.m[k], self.v[k] = m, v
            out[k] = p - lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)
        return out

    def state_dict(self) -> dict:
        return {"step_count": self.step_count,
                "m": {k: v.tolist() for k, v in self.m.items()},
                "v": {k: v.tolist() for k, v in self.v.items()}}

    def load_state_dict(self, state: dict) -> None:
        self.step_count = int(state["step_count"])
        self.m = {k: np.asarray(v, dtype=np.float64) for k, v in state["m"].items()}
        self.v = {k: np.asarray(v, dtype=np.float64) for k, v in state["v"].items()}
