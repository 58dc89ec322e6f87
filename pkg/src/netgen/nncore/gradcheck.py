"""Central finite-difference verification of analytic gradients."""
from __future__ import annotations

import numpy as np

__all__ = ["gradient_check"]


def gradient_check(
    fn,
    named_params,
    seed: int = 0,
    step: float = 1e-5,
    max_coords_per_param: int | None = None,
    dust_tol: float | None = None,
) -> float:
    """Compare analytic gradients of `fn` against central differences.

    `fn` is a zero-argument callable returning a scalar Tensor whose value
    depends on the parameters through their `.data`. Every parameter tensor
    is checked; when `max_coords_per_param` is set, a seeded random subset
    of coordinates per tensor is probed instead of all of them.

    Returns max over probed coordinates of |a - f| / max(|a|, |f|, 1e-8).

    `dust_tol` handles coordinates whose true gradient is exactly zero by
    structural cancellation (for example a bias that batch norm's mean
    subtraction removes): there the finite difference measures only the
    last-ulp wobble of the loss, |f| ~ ulp(loss)/(2*step), which the 1e-8
    floor cannot absorb. When set, coordinates with BOTH |analytic| and
    |fd| below dust_tol are counted as agreeing zeros; a genuinely wrong
    zero on either side still fails because the other value is large.
    """
    named_params = list(named_params)
    for _, p in named_params:
        p.grad = None
    out = fn()
    if out.data.size != 1:
        raise ValueError("gradient_check needs a scalar-valued function")
    out.backward()
    analytic = [
        np.zeros_like(p.data) if p.grad is None else p.grad.copy() for _, p in named_params
    ]

    rng = np.random.default_rng(seed)
    worst = 0.0
    for (name, p), a in zip(named_params, analytic):
        flat = p.data.reshape(-1)
        a_flat = a.reshape(-1)
        n = flat.size
        if max_coords_per_param is not None and n > max_coords_per_param:
            coords = np.sort(rng.choice(n, size=max_coords_per_param, replace=False))
        else:
            coords = range(n)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + step
            f_plus = float(fn().data)
            flat[i] = orig - step
            f_minus = float(fn().data)
            flat[i] = orig
            fd = (f_plus - f_minus) / (2.0 * step)
            if dust_tol is not None and abs(a_flat[i]) < dust_tol and abs(fd) < dust_tol:
                continue
            rel = abs(a_flat[i] - fd) / max(abs(a_flat[i]), abs(fd), 1e-8)
            worst = max(worst, rel)
    return worst
