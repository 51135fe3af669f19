"""Input validation helpers in the spirit of ``sklearn.utils.validation``."""

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import DimensionMismatchError, ShapeMismatchError

N_ELECTRODES = 19


def check_frame_table(X, *, copy=False):
    """Validate a frame table with columns ``t, c, e00..e18``.

    A bare ``(n, 19)`` electrode array is also accepted; it is treated as
    contact frames with timestamps ``0..n-1``.
    """
    X = check_array(X, dtype=np.float64, copy=copy, ensure_min_samples=1)
    if X.shape[1] == N_ELECTRODES:
        n = X.shape[0]
        X = np.column_stack([np.arange(n, dtype=np.float64), np.ones(n), X])
    if X.shape[1] != N_ELECTRODES + 2:
        raise ShapeMismatchError(
            f"expected {N_ELECTRODES} electrode columns (plus t, c), got {X.shape[1]} columns"
        )
    return X


def electrodes_of(X):
    """Return the electrode block of a frame table or electrode array."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] == N_ELECTRODES + 2:
        return X[:, 2:]
    if X.shape[1] != N_ELECTRODES:
        raise ShapeMismatchError(f"expected {N_ELECTRODES} electrodes, got {X.shape[1]}")
    return X


def check_mesh_batch(X, n_vertices=None, dtype=np.float64):
    """Validate a batch of meshes, shape ``(n, V, 3)``; a single ``(V, 3)`` is promoted."""
    X = np.asarray(X, dtype=dtype)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or X.shape[2] != 3:
        raise ShapeMismatchError(f"mesh batch must have shape (n, V, 3), got {X.shape}")
    if n_vertices is not None and X.shape[1] != n_vertices:
        raise ShapeMismatchError(f"expected {n_vertices} vertices, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise ValueError("mesh coordinates must be finite")
    return X


def check_same_shape(a, b, what="arrays"):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"{what} differ in shape: {a.shape} vs {b.shape}")
    return a, b


def check_latent(Z, dim):
    Z = check_array(Z, dtype=np.float64)
    if Z.shape[1] != dim:
        raise ShapeMismatchError(f"expected latent dimension {dim}, got {Z.shape[1]}")
    return Z
