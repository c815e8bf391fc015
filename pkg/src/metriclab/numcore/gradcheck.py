from __future__ import annotations

import numpy as np


def grad_check(loss_fn, params, eps: float = 1e-5, max_coords: int | None = None, rng=None) -> float:
    """Largest relative disagreement between analytic and central-difference gradients.

    ``loss_fn(params) -> (value, grads)``.  The error at a coordinate is
    ``|analytic - numeric| / max(1, |analytic|, |numeric|)``.  With
    ``max_coords`` set, at most that many coordinates per tensor are probed,
    chosen with ``rng``.
    """
    if not 1e-7 <= eps <= 1e-4:
        raise ValueError(f"eps must lie in [1e-7, 1e-4], got {eps}")
    params = [np.array(p, dtype=np.float64, copy=True) for p in params]
    _, grads = loss_fn(params)
    worst = 0.0
    for k, p in enumerate(params):
        flat = p.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = np.sort(rng.permutation(flat.size)[:max_coords])
        g = np.asarray(grads[k]).reshape(-1)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + eps
            up, _ = loss_fn(params)
            flat[i] = orig - eps
            down, _ = loss_fn(params)
            flat[i] = orig
            numeric = (up - down) / (2.0 * eps)
            err = abs(g[i] - numeric) / max(1.0, abs(g[i]), abs(numeric))
            worst = max(worst, err)
    return float(worst)
