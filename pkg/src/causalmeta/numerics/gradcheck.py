"""Finite-difference checks for recorded gradients."""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from .autodiff import Tensor, backward
from .errors import NumericError, ParameterError
from .params import watch


def grad_check(loss_fn: Callable[[Mapping[str, Tensor]], Tensor],
               params: Mapping[str, np.ndarray],
               epsilon: float = 1e-5,
               max_coords: int | None = None,
               rng: np.random.Generator | None = None) -> float:
    """Max over coordinates of ``|analytic - central FD| / max(1, |analytic|)``.

    ``max_coords`` caps the coordinates probed per parameter array (sampled
    with ``rng``); ``None`` probes every coordinate.
    """
    if not 0.0 < epsilon <= 1e-2:
        raise ParameterError(f"epsilon must lie in (0, 1e-2], got {epsilon}")
    if not params:
        return 0.0
    tensors = watch(params)
    loss = loss_fn(tensors)
    if not np.isfinite(loss.data).all():
        raise NumericError("loss is not finite")
    analytic = backward(loss, tensors)

    base = {k: np.array(v, dtype=np.float64) for k, v in params.items()}

    def value(tree) -> float:
        out = loss_fn({k: Tensor(v) for k, v in tree.items()}).data
        if not np.isfinite(out).all():
            raise NumericError("loss is not finite under perturbation")
        return float(out)

    rng = rng or np.random.default_rng(0)
    worst = 0.0
    for name, arr in base.items():
        flat = arr.reshape(-1)
        idx = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            idx = rng.choice(flat.size, size=max_coords, replace=False)
        g = analytic[name].reshape(-1)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + epsilon
            up = value(base)
            flat[i] = orig - epsilon
            down = value(base)
            flat[i] = orig
            fd = (up - down) / (2.0 * epsilon)
            worst = max(worst, abs(g[i] - fd) / max(1.0, abs(g[i])))
    return worst
