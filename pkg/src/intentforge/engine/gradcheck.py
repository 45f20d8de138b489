"""Central finite differences, used to audit the hand-written backward passes."""
import numpy as np


def numeric_gradient(f, x, h=1e-5, indices=None):
    """d f / d x by central differences, perturbing ``x`` in place and restoring it.

    ``indices`` restricts the probe to a subset of flat positions; the other
    entries of the result are NaN.
    """
    grad = np.full(x.shape, np.nan)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size) if indices is None else indices:
        old = flat[i]
        flat[i] = old + h
        up = f()
        flat[i] = old - h
        down = f()
        flat[i] = old
        gflat[i] = (up - down) / (2.0 * h)
    return grad


def relative_error(analytic, numeric):
    """||a - n|| / max(||a|| + ||n||, 1e-12), ignoring NaN (unprobed) positions."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    keep = ~np.isnan(n)
    a, n = a[keep], n[keep]
    return float(np.linalg.norm(a - n) / max(np.linalg.norm(a) + np.linalg.norm(n), 1e-12))
