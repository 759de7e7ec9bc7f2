"""Adam with bias correction and a piecewise-constant learning-rate schedule."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class LrSchedule:
    """Maps epoch -> learning rate; the rate of the latest breakpoint <= epoch applies."""

    points: tuple[tuple[int, float], ...] = ((0, 0.01), (140, 0.001))

    def __post_init__(self):
        pts = tuple(sorted((int(e), float(lr)) for e, lr in self.points))
        if not pts or pts[0][0] != 0:
            raise ValueError("schedule must define a rate for epoch 0")
        object.__setattr__(self, "points", pts)

    def lr_at(self, epoch: int) -> float:
        lr = self.points[0][1]
        for e, r in self.points:
            if epoch >= e:
                lr = r
        return lr

    def to_json(self):
        return {str(e): lr for e, lr in self.points}

    @classmethod
    def from_json(cls, d) -> "LrSchedule":
        return cls(points=tuple((int(e), float(lr)) for e, lr in d.items()))


@dataclass
class AdamState:
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_adam(params, beta1=0.9, beta2=0.999, eps=1e-8) -> AdamState:
    return AdamState(m=[np.zeros_like(p) for p in params],
                     v=[np.zeros_like(p) for p in params],
                     t=0, beta1=beta1, beta2=beta2, eps=eps)


def adam_step(params, grads, state: AdamState, lr: float):
    """One Adam update, applied to the parameter arrays in place."""
    if len(params) != len(state.m):
        raise ValueError("optimizer state does not match parameter list")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m += (1.0 - b1) * (g - m)
        v += (1.0 - b2) * (g * g - v)
        p -= (lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype, copy=False)
    return params, state
