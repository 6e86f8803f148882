"""Unsupervised code trainers.

All trainers share one pipeline: descriptors are mapped to real vectors
(+/-1 by default), mean-centered, and fed to the method-specific fit.  The
common preconditions are enforced uniformly: enough training descriptors,
usable variance, and (for PCA-backed methods) code length at most the
descriptor length.
"""

from __future__ import annotations

import numpy as np

from hashlab import bits
from hashlab.framework import (
    BaseHasher,
    DegenerateDataError,
    KernelHasher,
    LinearHasher,
    TrainingError,
    register,
)
from hashlab.numeric import kmeans, sym_eig


def _pca(xc: np.ndarray, k: int, tag: str) -> tuple[np.ndarray, np.ndarray]:
    """Top-k principal values/directions of centered data."""
    n, d = xc.shape
    if k > d:
        raise TrainingError(f"{tag}: code length {k} exceeds descriptor length {d}")
    values, vectors = sym_eig(xc.T @ xc / n)
    return values[:k], vectors[:, :k]


def _random_rotation(k: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((k, k)))
    return q * np.sign(np.diag(r))


def equalize_variances(
    values: np.ndarray,
    rng: np.random.Generator,
    max_iterations: int = 100,
    tolerance: float = 1e-5,
) -> tuple[np.ndarray, int, float]:
    """Rotation R such that diag(R' diag(values) R) is constant.

    Alternates between projecting onto the equal-diagonal set and lifting
    back onto the orthogonal orbit of diag(values).  Starts from a seeded
    random orthogonal similarity: a diagonal start is a fixed point of the
    alternation and cannot make progress.  Returns (rotation, iterations,
    relative deviation of the final diagonal from the mean eigenvalue).
    """
    values = np.asarray(values, dtype=np.float64)
    k = values.shape[0]
    spectrum = np.diag(values)
    target = float(values.mean())
    r0 = _random_rotation(k, rng)
    current = r0.T @ spectrum @ r0
    rotation = r0
    deviation = float(
        np.abs(np.diag(current) - target).max() / max(abs(target), 1e-300)
    )
    if deviation <= tolerance:
        return rotation, 0, deviation
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        projected = current - np.diag(np.diag(current)) + target * np.eye(k)
        _, u = sym_eig(projected)
        current = u @ spectrum @ u.T
        rotation = u.T
        deviation = float(
            np.abs(np.diag(current) - target).max() / max(abs(target), 1e-300)
        )
        if deviation <= tolerance:
            break
    return rotation, iterations, deviation


@register
class RandomHyperplaneHasher(LinearHasher):
    """Data-independent baseline: random Gaussian hyperplanes through the mean."""

    method_tag = "lsh"

    def fit(self, X, y=None):
        m, _ = self._training_bits(X)
        xc = self._center_fit(self._mapped(m))
        self._require_variance(xc)
        self.input_dim_ = m.shape[1]
        self.weights_ = self._rng().standard_normal((m.shape[1], self.code_length))
        self.biases_ = np.zeros(self.code_length)
        return self._finish_fit(m)


@register
class SpectralHasher(BaseHasher):
    """Analytic one-dimensional Laplacian eigenfunctions on PCA directions.

    Candidate bits are (direction, frequency) pairs scored by frequency^2 /
    range^2; the code keeps the lowest-scoring candidates.  Bit value is the
    sign of sin(pi/2 + freq * pi * (projection - min) / range).
    """

    method_tag = "sh"

    def __init__(
        self,
        code_length: int = 64,
        bit_mapping: str = bits.PLUS_MINUS_ONE,
        center: bool = True,
        seed: int = 0,
        max_frequency_factor: int = 2,
    ):
        self.code_length = code_length
        self.bit_mapping = bit_mapping
        self.center = center
        self.seed = seed
        self.max_frequency_factor = max_frequency_factor

    def fit(self, X, y=None):
        m, _ = self._training_bits(X)
        xc = self._center_fit(self._mapped(m))
        self._require_variance(xc)
        k = self.code_length
        _, directions = _pca(xc, min(k, m.shape[1]), self.method_tag)
        proj = xc @ directions
        mins = proj.min(axis=0)
        ranges = proj.max(axis=0) - mins
        usable = np.nonzero(ranges > 1e-9 * max(ranges.max(), 1e-300))[0]
        if usable.size == 0:
            raise DegenerateDataError(f"{self.method_tag}: no direction has spread")

        max_freq = self.max_frequency_factor * k
        dir_idx, freqs = np.meshgrid(usable, np.arange(1, max_freq + 1), indexing="ij")
        dir_idx, freqs = dir_idx.ravel(), freqs.ravel()
        scores = (freqs / ranges[dir_idx]) ** 2
        order = np.lexsort((freqs, dir_idx, scores))[:k]

        self.input_dim_ = m.shape[1]
        self.directions_ = directions
        self.mins_ = mins
        self.ranges_ = ranges
        self.bit_directions_ = dir_idx[order].astype(np.int64)
        self.bit_frequencies_ = freqs[order].astype(np.int64)
        return self._finish_fit(m)

    def _encode_bits(self, m: np.ndarray) -> np.ndarray:
        proj = (self._mapped(m) - self.mean_) @ self.directions_
        t = (proj[:, self.bit_directions_] - self.mins_[self.bit_directions_]) / (
            self.ranges_[self.bit_directions_]
        )
        return np.sin(np.pi / 2.0 + self.bit_frequencies_ * np.pi * t) > 0

    def _state_arrays(self):
        return {
            "directions": self.directions_,
            "mins": self.mins_,
            "ranges": self.ranges_,
            "bit_directions": self.bit_directions_,
            "bit_frequencies": self.bit_frequencies_,
        }

    def _restore_state(self, arrays):
        self.directions_ = arrays["directions"]
        self.mins_ = arrays["mins"]
        self.ranges_ = arrays["ranges"]
        self.bit_directions_ = arrays["bit_directions"]
        self.bit_frequencies_ = arrays["bit_frequencies"]


@register
class ItqHasher(LinearHasher):
    """PCA projection followed by an alternating rotation/quantization fit.

    Each iteration quantizes the rotated projections to +/-1 and re-solves
    the rotation as an orthogonal Procrustes problem; the quantization loss
    |B - V R|^2 never increases.
    """

    method_tag = "itq"

    def __init__(
        self,
        code_length: int = 64,
        n_iterations: int = 50,
        bit_mapping: str = bits.PLUS_MINUS_ONE,
        center: bool = True,
        seed: int = 0,
    ):
        self.code_length = code_length
        self.n_iterations = n_iterations
        self.bit_mapping = bit_mapping
        self.center = center
        self.seed = seed

    def fit(self, X, y=None):
        m, _ = self._training_bits(X)
        xc = self._center_fit(self._mapped(m))
        self._require_variance(xc)
        k = self.code_length
        _, p = _pca(xc, k, self.method_tag)
        v = xc @ p

        rotation = _random_rotation(k, self._rng())
        trace = []
        for _ in range(self.n_iterations):
            b = np.where(v @ rotation > 0, 1.0, -1.0)
            u, _, vt = np.linalg.svd(b.T @ v)
            rotation = vt.T @ u.T
            trace.append(float(((b - v @ rotation) ** 2).sum()))

        self.input_dim_ = m.shape[1]
        self.rotation_ = rotation
        self.loss_trace_ = np.asarray(trace)
        self.weights_ = p @ rotation
        self.biases_ = np.zeros(k)
        return self._finish_fit(m)


@register
class IsotropicHasher(LinearHasher):
    """PCA projection rotated so every output dimension has equal variance.

    Uses alternating lift-and-projection between matrices with the PCA
    spectrum and matrices whose diagonal equals the mean eigenvalue, started
    from a seeded random orthogonal similarity (a diagonal start is a fixed
    point and cannot make progress).
    """

    method_tag = "isoh"

    def __init__(
        self,
        code_length: int = 64,
        max_iterations: int = 100,
        tolerance: float = 1e-5,
        bit_mapping: str = bits.PLUS_MINUS_ONE,
        center: bool = True,
        seed: int = 0,
    ):
        self.code_length = code_length
        self.max_iterations = max_iterations
        self.tolerance = tolerance
        self.bit_mapping = bit_mapping
        self.center = center
        self.seed = seed

    def fit(self, X, y=None):
        m, _ = self._training_bits(X)
        xc = self._center_fit(self._mapped(m))
        self._require_variance(xc)
        k = self.code_length
        values, p = _pca(xc, k, self.method_tag)
        rotation, iterations, deviation = equalize_variances(
            values, self._rng(), self.max_iterations, self.tolerance
        )
        self.iterations_ = iterations
        self.variance_deviation_ = deviation
        self.warnings_ = []
        if deviation > self.tolerance:
            self.warnings_.append(
                f"isoh: variance equalization stopped at relative deviation "
                f"{deviation:.2e} after {iterations} iterations"
            )

        self.input_dim_ = m.shape[1]
        self.rotation_ = rotation
        self.weights_ = p @ rotation
        self.biases_ = np.zeros(k)
        return self._finish_fit(m)


@register
class DensitySensitiveHasher(LinearHasher):
    """Hyperplanes from the geometry of k-means groups.

    Candidate hyperplanes are perpendicular bisectors of mutually r-nearest
    group centroids, scored by the binary entropy of the split they induce on
    the training data; the most balanced candidates become the code.
    """

    method_tag = "dsh"

    def __init__(
        self,
        code_length: int = 64,
        n_groups: int | None = None,
        r_adjacent: int = 3,
        min_balance: float = 0.05,
        kmeans_iterations: int = 25,
        bit_mapping: str = bits.PLUS_MINUS_ONE,
        center: bool = True,
        seed: int = 0,
    ):
        self.code_length = code_length
        self.n_groups = n_groups
        self.r_adjacent = r_adjacent
        self.min_balance = min_balance
        self.kmeans_iterations = kmeans_iterations
        self.bit_mapping = bit_mapping
        self.center = center
        self.seed = seed

    def fit(self, X, y=None):
        m, _ = self._training_bits(X)
        xc = self._center_fit(self._mapped(m))
        self._require_variance(xc)
        k = self.code_length
        groups = self.n_groups or max(2, round(1.5 * k))
        try:
            centroids, _, _ = kmeans(
                xc, groups, max_iterations=self.kmeans_iterations, rng=self._rng()
            )
        except ValueError as exc:
            raise TrainingError(f"{self.method_tag}: {exc}") from exc

        d2 = ((centroids[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        np.fill_diagonal(d2, np.inf)
        r = min(self.r_adjacent, groups - 1)
        neighbours = np.argsort(d2, axis=1, kind="stable")[:, :r]
        near = np.zeros((groups, groups), dtype=bool)
        np.put_along_axis(near, neighbours, True, axis=1)
        mutual = near & near.T

        weights, biases, entropies = [], [], []
        for i, j in zip(*np.nonzero(np.triu(mutual, 1))):
            w = centroids[i] - centroids[j]
            b = -float(w @ (centroids[i] + centroids[j]) / 2.0)
            p = float((xc @ w + b > 0).mean())
            if min(p, 1.0 - p) < self.min_balance:
                continue
            entropy = -(p * np.log(p) + (1.0 - p) * np.log(1.0 - p))
            weights.append(w)
            biases.append(b)
            entropies.append(entropy)
        if len(weights) < k:
            raise TrainingError(
                f"{self.method_tag}: only {len(weights)} balanced candidate "
                f"hyperplanes for {k} bits; increase n_groups or r_adjacent"
            )
        keep = np.argsort(-np.asarray(entropies), kind="stable")[:k]
        self.input_dim_ = m.shape[1]
        self.candidate_count_ = len(weights)
        self.weights_ = np.stack([weights[i] for i in keep], axis=1)
        self.biases_ = np.asarray([biases[i] for i in keep])
        return self._finish_fit(m)


@register
class SphericalHasher(BaseHasher):
    """Hypersphere partitions: bit k is 1 inside sphere k.

    Each radius is set to the distance cut that puts the count of enclosed
    training points closest to n/2; pivots repel or attract in pairs until
    the mean deviation of pairwise overlaps from n/4 is within tolerance.
    """

    method_tag = "sph"

    def __init__(
        self,
        code_length: int = 64,
        max_iterations: int = 100,
        overlap_tolerance: float = 0.15,
        balance_tolerance: float = 0.02,
        bit_mapping: str = bits.PLUS_MINUS_ONE,
        center: bool = True,
        seed: int = 0,
    ):
        self.code_length = code_length
        self.max_iterations = max_iterations
        self.overlap_tolerance = overlap_tolerance
        self.balance_tolerance = balance_tolerance
        self.bit_mapping = bit_mapping
        self.center = center
        self.seed = seed

    @staticmethod
    def _distances(pivots: np.ndarray, xc: np.ndarray) -> np.ndarray:
        d2 = (
            (pivots**2).sum(axis=1)[:, None]
            - 2.0 * pivots @ xc.T
            + (xc**2).sum(axis=1)
        )
        return np.sqrt(np.maximum(d2, 0.0))

    def _balanced_radius(self, dist_row: np.ndarray) -> float:
        """Largest-count-closest-to-half cut through the distance multiset.

        Membership is boundary-inclusive, so the radius must be an actual
        distance value; duplicated distances (binary descriptors give a
        discrete distance set) make the interpolated median overshoot the
        half-inside target, so the cut with inclusive count nearest n/2 is
        used instead.  Ties prefer the smaller radius.
        """
        order = np.sort(dist_row)
        n = order.size
        values, first = np.unique(order, return_index=True)
        counts = np.append(first[1:], n)  # inclusive count at each cut
        usable = values > 0.0
        if not usable.any():
            raise DegenerateDataError(
                f"{self.method_tag}: every distance to a pivot is zero"
            )
        values, counts = values[usable], counts[usable]
        return float(values[np.argmin(np.abs(counts - n / 2.0))])

    def fit(self, X, y=None):
        m, _ = self._training_bits(X)
        xc = self._center_fit(self._mapped(m))
        self._require_variance(xc)
        k = self.code_length
        n = xc.shape[0]
        rng = self._rng()
        pivots = xc[rng.choice(n, size=k, replace=False)].copy()
        target = n / 4.0

        converged = k < 2
        radii = inside = None
        iterations = 0
        deviation = 0.0
        for it in range(self.max_iterations + 1):
            dists = self._distances(pivots, xc)
            radii = np.asarray([self._balanced_radius(row) for row in dists])
            inside = dists <= radii[:, None]
            iterations = it
            if k < 2:
                break
            overlaps = (inside @ inside.T.astype(np.float64))
            off = ~np.eye(k, dtype=bool)
            deviation = float(np.abs(overlaps[off] - target).mean())
            if deviation <= self.overlap_tolerance * target:
                converged = True
                break
            if it == self.max_iterations:
                break
            coef = 0.5 * (overlaps - target) / target
            np.fill_diagonal(coef, 0.0)
            forces = (coef.sum(axis=1)[:, None] * pivots - coef @ pivots) / (k - 1)
            pivots = pivots + forces

        self.input_dim_ = m.shape[1]
        self.pivots_ = pivots
        self.radii_ = radii
        self.iterations_ = iterations
        self.overlap_deviation_ = deviation
        self.warnings_ = []
        if not converged:
            self.warnings_.append(
                f"sph: overlap balancing stopped at mean deviation {deviation:.1f} "
                f"(target {self.overlap_tolerance * target:.1f}) "
                f"after {iterations} iterations"
            )
        balance = inside.mean(axis=1)
        if np.abs(balance - 0.5).max() > self.balance_tolerance:
            self.warnings_.append(
                f"sph: sphere occupancy outside 50% +/- "
                f"{self.balance_tolerance:.0%} on training data"
            )
        return self._finish_fit(m)

    def _encode_bits(self, m: np.ndarray) -> np.ndarray:
        xc = self._mapped(m) - self.mean_
        return (self._distances(self.pivots_, xc) <= self.radii_[:, None]).T

    def _state_arrays(self):
        return {"pivots": self.pivots_, "radii": self.radii_}

    def _restore_state(self, arrays):
        self.pivots_ = arrays["pivots"]
        self.radii_ = arrays["radii"]


@register
class KernelLshHasher(KernelHasher):
    """Kernelized hyperplanes from the inverse square root of an anchor kernel.

    A Gaussian kernel over a random anchor sample is double-centered; each
    bit draws a small anchor subset indicator z and uses w = K^(-1/2) z.  The
    centering terms are folded into the stored weights and bias so encoding
    needs only raw kernel values against the anchors.
    """

    method_tag = "klsh"

    def __init__(
        self,
        code_length: int = 64,
        n_anchors: int = 300,
        subset_size: int = 30,
        bandwidth: float | None = None,
        bit_mapping: str = bits.PLUS_MINUS_ONE,
        center: bool = True,
        seed: int = 0,
    ):
        self.code_length = code_length
        self.n_anchors = n_anchors
        self.subset_size = subset_size
        self.bandwidth = bandwidth
        self.bit_mapping = bit_mapping
        self.center = center
        self.seed = seed

    def fit(self, X, y=None):
        m, _ = self._training_bits(X)
        xc = self._center_fit(self._mapped(m))
        self._require_variance(xc)
        rng = self._rng()
        n = xc.shape[0]
        t_anchors = min(self.n_anchors, n)
        if t_anchors < 2:
            raise DegenerateDataError(
                f"{self.method_tag}: a centered kernel matrix over "
                f"{t_anchors} anchor(s) is not invertible"
            )
        anchors = xc[rng.choice(n, size=t_anchors, replace=False)]

        d2 = (
            (anchors**2).sum(axis=1)[:, None]
            - 2.0 * anchors @ anchors.T
            + (anchors**2).sum(axis=1)
        )
        np.maximum(d2, 0.0, out=d2)
        dists = np.sqrt(d2)
        if self.bandwidth is not None:
            bandwidth = float(self.bandwidth)
            if bandwidth <= 0:
                raise ValueError("bandwidth must be positive")
        else:
            bandwidth = float(np.median(dists[~np.eye(t_anchors, dtype=bool)]))
            if bandwidth <= 0:
                raise DegenerateDataError(
                    f"{self.method_tag}: median anchor distance is zero"
                )
        kernel = np.exp(-d2 / (2.0 * bandwidth**2))

        col_means = kernel.mean(axis=0)
        grand_mean = float(kernel.mean())
        centered = kernel - col_means[None, :] - col_means[:, None] + grand_mean
        values, vectors = sym_eig(centered)
        if values.min() < -1e-9 * max(1.0, values.max()):
            raise TrainingError(
                f"{self.method_tag}: centered kernel matrix is not positive "
                f"semidefinite (min eigenvalue {values.min():.3e})"
            )
        positive = values > 1e-10
        if not positive.any():
            raise DegenerateDataError(
                f"{self.method_tag}: centered kernel matrix has no usable spectrum"
            )
        inv_sqrt = (vectors[:, positive] / np.sqrt(values[positive])) @ vectors[
            :, positive
        ].T

        subset = min(self.subset_size, t_anchors)
        weights = np.empty((t_anchors, self.code_length))
        biases = np.empty(self.code_length)
        for k in range(self.code_length):
            z = np.zeros(t_anchors)
            z[rng.choice(t_anchors, size=subset, replace=False)] = 1.0
            w_raw = inv_sqrt @ z
            weights[:, k] = w_raw - w_raw.mean()
            biases[k] = -float(w_raw @ col_means) + float(w_raw.sum()) * grand_mean

        self.input_dim_ = m.shape[1]
        self.anchors_ = anchors
        self.weights_ = weights
        self.biases_ = biases
        self.bandwidth_ = bandwidth
        return self._finish_fit(m)
