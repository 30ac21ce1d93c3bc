"""Small dense linear-algebra helpers used by sweeps and oracles."""

import numpy as np

__all__ = ["spectral_norm", "random_matrix_with_norm"]


def spectral_norm(a, rel_tol=1e-12, max_iter=10_000, seed=0):
    """Largest singular value via power iteration on A^T A.

    Stops when the Rayleigh quotient changes by less than ``rel_tol``
    relatively, or after ``max_iter`` sweeps.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {a.shape}")
    if a.size == 0 or not np.any(a):
        return 0.0
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(a.shape[1])
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(max_iter):
        y = a.T @ (a @ x)
        norm_y = np.linalg.norm(y)
        if norm_y == 0.0:
            x = rng.standard_normal(a.shape[1])
            x /= np.linalg.norm(x)
            continue
        lam_new = float(x @ y)
        x = y / norm_y
        if abs(lam_new - lam) <= rel_tol * abs(lam_new):
            lam = lam_new
            break
        lam = lam_new
    return float(np.sqrt(max(lam, 0.0)))


def random_matrix_with_norm(rng, shape, bound, fill=None):
    """Random matrix with spectral norm <= bound.

    ``fill`` in (0, 1] fixes the norm at fill*bound; by default the norm
    is drawn uniformly from (0, bound].
    """
    a = rng.standard_normal(shape)
    sigma = spectral_norm(a)
    if sigma == 0.0:
        a[0, 0] = 1.0
        sigma = 1.0
    target = bound * (rng.uniform(0.05, 1.0) if fill is None else fill)
    return a * (target / sigma)
