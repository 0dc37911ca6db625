"""Shared test oracles: central finite differences over named parameter dicts."""

import numpy as np


def finite_diff_entry(loss_fn, param, index, h=1e-5):
    """Central finite difference of loss_fn w.r.t. one entry of param.data."""
    original = param.data[index]
    param.data[index] = original + h
    up = loss_fn()
    param.data[index] = original - h
    down = loss_fn()
    param.data[index] = original
    return (up - down) / (2 * h)


def check_gradients(loss_fn, params, rng, n_checks=20, h=1e-5, rel_tol=1e-6,
                    names=None):
    """Compare analytic grads (already filled) against central differences.

    Returns the worst relative error seen.  loss_fn() must be a pure float
    re-evaluation of the same loss.
    """
    names = sorted(names if names is not None else params.keys())
    worst = 0.0
    for _ in range(n_checks):
        name = names[int(rng.integers(0, len(names)))]
        p = params[name]
        flat_idx = int(rng.integers(0, p.data.size))
        index = np.unravel_index(flat_idx, p.data.shape)
        numeric = finite_diff_entry(loss_fn, p, index, h=h)
        analytic = 0.0 if p.grad is None else p.grad[index]
        denom = max(abs(numeric), abs(analytic), 1e-8)
        err = abs(numeric - analytic) / denom
        worst = max(worst, err)
        assert err < rel_tol, (
            f"gradient mismatch for {name}{index}: analytic {analytic} "
            f"vs numeric {numeric} (rel err {err:.2e})")
    return worst
