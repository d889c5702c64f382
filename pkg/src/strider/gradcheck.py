"""Finite-difference validation of tape gradients.

The oracle is deliberately independent of the tape: it only re-evaluates the
scalar function at perturbed parameter values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError
from .numeric import Tape, Tensor2


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_param: str
    worst_index: tuple[int, int]
    checked: int

    def ok(self, tol: float) -> bool:
        return self.max_rel_error < tol


def _rel_err(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-6)


def grad_check(
    f,
    params: list[Tensor2],
    h: float = 1e-5,
    rng: np.random.Generator | None = None,
    max_coords: int | None = None,
) -> GradCheckReport:
    """Compare tape gradients of ``f(params) -> Tensor2 scalar`` against
    central finite differences (f(p+h) - f(p-h)) / 2h.

    Checks every coordinate unless ``max_coords`` caps the probe count, in
    which case coordinates are sampled without replacement using ``rng``.
    """
    if h <= 0.0:
        raise DegenerateInputError("finite-difference step must be positive")
    with Tape() as tape:
        out = f()
    if not np.isfinite(out.item()):
        raise DegenerateInputError("function value is not finite")
    analytic = tape.gradients(out, params)

    coords = [
        (pi, i, j)
        for pi, p in enumerate(params)
        for i in range(p.rows)
        for j in range(p.cols)
    ]
    if max_coords is not None and len(coords) > max_coords:
        if rng is None:
            rng = np.random.default_rng(0)
        picks = rng.choice(len(coords), size=max_coords, replace=False)
        coords = [coords[int(i)] for i in picks]

    worst = (0.0, "", (0, 0))
    for pi, i, j in coords:
        p = params[pi]
        saved = p.data[i, j]
        p.data[i, j] = saved + h
        fp = f().item()
        p.data[i, j] = saved - h
        fm = f().item()
        p.data[i, j] = saved
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise DegenerateInputError("perturbed function value is not finite")
        fd = (fp - fm) / (2.0 * h)
        err = _rel_err(analytic[pi][i, j], fd)
        if err > worst[0]:
            worst = (err, p.name or f"param{pi}", (i, j))
    return GradCheckReport(worst[0], worst[1], worst[2], len(coords))
