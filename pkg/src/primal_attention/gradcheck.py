"""Central finite-difference certification of reverse-mode gradients.

The comparison is relative wherever the gradient is large enough for a
relative statement to be meaningful: the denominator is clamped below at
``scale_floor`` so coordinates whose true gradient sits under the
finite-difference noise floor are judged on absolute agreement instead.
"""

from __future__ import annotations

import numpy as np

from .rng import Rng


def central_difference(loss_fn, params: dict[str, np.ndarray], name: str, index, step: float = 1e-4) -> float:
    """d loss / d params[name][index] by symmetric perturbation."""
    bumped = dict(params)
    plus = params[name].copy()
    plus[index] += step
    bumped[name] = plus
    up = loss_fn(bumped)
    minus = params[name].copy()
    minus[index] -= step
    bumped[name] = minus
    down = loss_fn(bumped)
    return (up - down) / (2.0 * step)


def relative_error(analytic: float, numeric: float, scale_floor: float = 1e-3) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), scale_floor)


def check_gradients(
    loss_fn,
    grads_fn,
    params: dict[str, np.ndarray],
    coords_per_tensor: int = 64,
    step: float = 1e-4,
    seed: int = 0,
    scale_floor: float = 1e-3,
) -> dict[str, float]:
    """Max relative error per tensor over randomly chosen coordinates.

    ``loss_fn(params) -> float`` must be a pure function of the parameter
    dict; ``grads_fn(params) -> dict`` returns the analytic gradients.
    """
    analytic = grads_fn(params)
    rng = Rng(seed)
    worst: dict[str, float] = {}
    for name in sorted(params):
        arr = params[name]
        total = arr.size
        count = min(coords_per_tensor, total)
        flat_choices = (
            range(total) if count == total else rng.derive(name).sample_without_replacement(total, count)
        )
        err = 0.0
        for flat in flat_choices:
            index = np.unravel_index(flat, arr.shape)
            numeric = central_difference(loss_fn, params, name, index, step)
            err = max(err, relative_error(float(analytic[name][index]), numeric, scale_floor))
        worst[name] = err
    return worst
