"""Dense numeric kernels shared by the trainers.

Eigen/SVD work is delegated to numpy's LAPACK bindings behind small wrappers
that pin the conventions every caller relies on: descending order, orthonormal
columns, and a canonical sign (first non-negligible component of each vector
is positive) so repeated runs produce identical models.
"""

from __future__ import annotations

import numpy as np


def rng_from_seed(seed: int) -> np.random.Generator:
    """Deterministic 64-bit-seeded generator."""
    return np.random.default_rng(int(seed))


def mean_center(data: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Subtract the column mean; returns (centered, mean)."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    mean = data.mean(axis=0)
    return data - mean, mean


def canonical_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip column vectors so the first non-negligible component is positive."""
    v = np.array(vectors, dtype=np.float64, copy=True)
    scale = np.abs(v).max(axis=0)
    scale[scale == 0] = 1.0
    for k in range(v.shape[1]):
        significant = np.nonzero(np.abs(v[:, k]) > 1e-12 * scale[k])[0]
        if significant.size and v[significant[0], k] < 0:
            v[:, k] = -v[:, k]
    return v


def sym_eig(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix.

    Returns (eigenvalues, eigenvectors) with eigenvalues descending and
    sign-canonical orthonormal eigenvector columns.

    Raises:
        ValueError: if the matrix is not square or not symmetric within 1e-9.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expected a square matrix")
    scale = max(1.0, float(np.abs(a).max()))
    if np.abs(a - a.T).max() > 1e-9 * scale:
        raise ValueError("matrix is not symmetric within 1e-9")
    values, vectors = np.linalg.eigh((a + a.T) / 2.0)
    order = np.argsort(values)[::-1]
    return values[order], canonical_signs(vectors[:, order])


def svd(a: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin SVD with descending singular values and canonical signs.

    Returns (u, s, vt) with a == u @ diag(s) @ vt up to numerical error.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    # Flip u and v together so the factorization is unchanged.
    flipped = canonical_signs(u)
    signs = np.where((flipped == u).all(axis=0), 1.0, -1.0)
    return u * signs, s, vt * signs[:, None]


def kmeans(
    points: np.ndarray,
    k: int,
    max_iterations: int = 50,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Lloyd's k-means with deterministic seeding.

    Initial centroids are k distinct rows (distinct values when the data has
    at least k unique rows, distinct indices otherwise).  A cluster that loses
    all members is re-seeded to the point farthest from its centroid.

    Returns (centroids, assignment, wcss_trace); the trace is recorded at each
    assignment step and is non-increasing.

    Raises:
        ValueError: if k < 1 or k exceeds the number of points.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError("expected a 2-D point matrix")
    n = points.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    if rng is None:
        rng = rng_from_seed(0)

    unique = np.unique(points, axis=0)
    if unique.shape[0] >= k:
        centroids = unique[rng.choice(unique.shape[0], size=k, replace=False)]
    else:
        centroids = points[rng.choice(n, size=k, replace=False)]
    centroids = centroids.copy()

    sq_norms = (points**2).sum(axis=1)
    assignment = np.full(n, -1, dtype=np.int64)
    trace = []
    for _ in range(max_iterations):
        d2 = sq_norms[:, None] - 2.0 * points @ centroids.T + (centroids**2).sum(axis=1)
        np.maximum(d2, 0.0, out=d2)
        new_assignment = d2.argmin(axis=1)
        trace.append(float(d2[np.arange(n), new_assignment].sum()))
        if np.array_equal(new_assignment, assignment):
            break
        assignment = new_assignment
        for c in range(k):
            members = assignment == c
            if members.any():
                centroids[c] = points[members].mean(axis=0)
            else:
                centroids[c] = points[d2[:, c].argmax()]
    return centroids, assignment, np.asarray(trace)
