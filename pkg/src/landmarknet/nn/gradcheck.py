"""Central finite differences for checking analytic gradients."""

import numpy as np


def numeric_gradient(f, x, eps=1e-5):
    """Gradient of scalar ``f()`` with respect to array ``x`` (perturbed in place and restored)."""
    grad = np.zeros_like(x)
    flat, g = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f()
        flat[i] = orig - eps
        fm = f()
        flat[i] = orig
        g[i] = (fp - fm) / (2 * eps)
    return grad


def max_relative_error(analytic, numeric, floor=1e-7):
    """Largest elementwise ``|a - n| / max(|a|, |n|)``.

    Entries where both values are below ``floor`` times the largest magnitude
    count as exact, so round-off on vanishing gradients is not amplified.
    """
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    scale = max(np.abs(a).max(initial=0.0), np.abs(n).max(initial=0.0))
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor * scale)
    if scale == 0:
        return 0.0
    return float((np.abs(a - n) / denom).max())
