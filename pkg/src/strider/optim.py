"""Adam optimizer over Tensor2 parameter sets."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .numeric import Tensor2


@dataclass
class AdamState:
    """First/second-moment accumulators plus the step counter.

    Moments are keyed by position in the parameter list, which the caller
    must keep stable across steps.
    """

    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def ensure(self, params: list[Tensor2]) -> None:
        if not self.m:
            self.m = [np.zeros_like(p.data) for p in params]
            self.v = [np.zeros_like(p.data) for p in params]
        if len(self.m) != len(params):
            raise ContractError(
                f"optimizer state tracks {len(self.m)} params, got {len(params)}"
            )


def adam_step(params: list[Tensor2], grads: list[np.ndarray], state: AdamState) -> None:
    """One bias-corrected Adam update, in place on the parameter arrays."""
    if len(params) != len(grads):
        raise ContractError("params/grads length mismatch")
    state.ensure(params)
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    for i, (p, g) in enumerate(zip(params, grads)):
        if g.shape != p.data.shape:
            raise ContractError(
                f"grad shape {g.shape} != param shape {p.data.shape} at index {i}"
            )
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g
        mhat = state.m[i] / (1.0 - b1 ** t)
        vhat = state.v[i] / (1.0 - b2 ** t)
        p.data -= state.learning_rate * mhat / (np.sqrt(vhat) + state.eps)
