"""Similarity-pair encodings and the supervised/semi-supervised trainers.

Pair relations are +1 (similar) and -1 (dissimilar); every encoding derives
the relation from label equality, measures closeness by Hamming distance on
the raw descriptors, and breaks distance ties toward the lower index.
"""

from __future__ import annotations

import warnings as _warnings
from dataclasses import dataclass, field

import numpy as np

from hashlab import bits
from hashlab.dataset import LabeledDataset, _atomic_write_bytes
from hashlab.framework import (
    BaseHasher,
    LinearHasher,
    TrainingError,
    register,
)
from hashlab.numeric import sym_eig

SIMILAR = 1
DISSIMILAR = -1

ENCODINGS = ("none", "hard_triplets", "knn", "fasthash_budget")

DEFAULT_MAX_PAIRS = 20_000_000  # beyond this the pair store stops fitting in memory


class PairBudgetError(TrainingError):
    """More similarity pairs than the configured cap."""


@dataclass
class SimilarityPairs:
    """Flat (i, j, relation) triples with i < j and no duplicate pairs."""

    i: np.ndarray
    j: np.ndarray
    relation: np.ndarray
    skipped: int = 0
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.i = np.asarray(self.i, dtype=np.int64)
        self.j = np.asarray(self.j, dtype=np.int64)
        self.relation = np.asarray(self.relation, dtype=np.int8)
        if not (self.i.shape == self.j.shape == self.relation.shape):
            raise ValueError("i, j, relation must have equal shapes")
        if (self.i == self.j).any():
            raise ValueError("self-pairs are not allowed")
        lo = np.minimum(self.i, self.j)
        hi = np.maximum(self.i, self.j)
        self.i, self.j = lo, hi
        if len(self.i):
            order = np.lexsort((self.j, self.i))
            self.i, self.j, self.relation = (
                self.i[order],
                self.j[order],
                self.relation[order],
            )
            dup = (self.i[1:] == self.i[:-1]) & (self.j[1:] == self.j[:-1])
            if dup.any():
                raise ValueError("duplicate unordered pairs")
        if not np.isin(self.relation, (SIMILAR, DISSIMILAR)).all():
            raise ValueError("relations must be +1 or -1")

    def __len__(self) -> int:
        return int(self.i.shape[0])

    def check_range(self, n: int) -> None:
        if len(self) and (self.i.min() < 0 or self.j.max() >= n):
            raise ValueError(f"pair indices out of range for {n} elements")

    def export_csv(self, path: str) -> None:
        """Write `i,j,relation` rows; relation is +1 or -1."""
        lines = ["i,j,relation"]
        lines += [f"{a},{b},{r}" for a, b, r in zip(self.i, self.j, self.relation)]
        _atomic_write_bytes(path, ("\n".join(lines) + "\n").encode())

    @classmethod
    def empty(cls) -> "SimilarityPairs":
        return cls(np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0, np.int8))


def _dedupe(ii, jj, rel, max_pairs, skipped=0, notes=()):
    ii = np.asarray(ii, dtype=np.int64)
    jj = np.asarray(jj, dtype=np.int64)
    rel = np.asarray(rel, dtype=np.int8)
    lo, hi = np.minimum(ii, jj), np.maximum(ii, jj)
    keys = lo * np.int64(2**32) + hi  # indices stay far below 2^32
    _, first = np.unique(keys, return_index=True)
    first.sort()
    if first.size > max_pairs:
        raise PairBudgetError(
            f"{first.size} similarity pairs exceed the cap of {max_pairs}"
        )
    return SimilarityPairs(
        lo[first], hi[first], rel[first], skipped=skipped, warnings=list(notes)
    )


def _nearest_in_mask(distances: np.ndarray, mask: np.ndarray) -> int:
    # argmin over a masked row; assumes mask has at least one True
    d = np.where(mask, distances, np.iinfo(np.int64).max)
    return int(d.argmin())  # ties resolve to the lower index


def encode_similarity(
    data: LabeledDataset,
    scheme: str,
    seed: int = 0,
    knn: int = 20,
    dissimilar_budget: int = 100,
    max_pairs: int = DEFAULT_MAX_PAIRS,
) -> SimilarityPairs:
    """Derive similarity pairs from labels and raw-descriptor distances.

    Schemes:
        none: no pairs.
        hard_triplets: per element, its closest same-label element as a
            similar pair and its closest different-label element as a
            dissimilar pair; singleton-label elements are skipped and counted.
        knn: per element, its knn nearest elements; relation = labels match.
        fasthash_budget: per element, every other same-label element as
            similar plus dissimilar_budget random different-label elements.

    Raises:
        PairBudgetError: if the deduplicated pair count exceeds max_pairs.
    """
    if scheme not in ENCODINGS:
        raise ValueError(f"unknown encoding scheme {scheme!r}, expected {ENCODINGS}")
    if scheme == "none":
        return SimilarityPairs.empty()
    n = len(data)
    labels = data.labels
    rng = np.random.default_rng(int(seed))

    if scheme == "hard_triplets":
        ii, jj, rel = [], [], []
        skipped = 0
        for q in range(n):
            same = labels == labels[q]
            diff = ~same
            same[q] = False
            if not (same.any() or diff.any()):
                skipped += 1
                continue
            d = bits.hamming_to_all(data.packed[q], data.packed).astype(np.int64)
            d[q] = np.iinfo(np.int64).max
            if same.any():
                ii.append(q)
                jj.append(_nearest_in_mask(d, same))
                rel.append(SIMILAR)
            else:
                skipped += 1
            if diff.any():
                ii.append(q)
                jj.append(_nearest_in_mask(d, diff))
                rel.append(DISSIMILAR)
        notes = []
        if skipped:
            notes.append(f"hard_triplets: skipped {skipped} singleton-label elements")
            _warnings.warn(notes[-1])
        return _dedupe(ii, jj, rel, max_pairs, skipped=skipped, notes=notes)

    if scheme == "knn":
        k = min(knn, n - 1)
        if k * n > 2 * max_pairs:
            raise PairBudgetError(
                f"knn encoding would emit about {k * n} pairs, cap is {max_pairs}"
            )
        ii = np.repeat(np.arange(n, dtype=np.int64), k)
        jj = np.empty(n * k, dtype=np.int64)
        for q in range(n):
            d = bits.hamming_to_all(data.packed[q], data.packed).astype(np.int64)
            d[q] = np.iinfo(np.int64).max
            jj[q * k : (q + 1) * k] = np.argsort(d, kind="stable")[:k]
        rel = np.where(labels[ii] == labels[jj], SIMILAR, DISSIMILAR)
        return _dedupe(ii, jj, rel, max_pairs)

    # fasthash_budget
    order = np.argsort(labels, kind="stable")
    similar_bound = 0
    for lab in np.unique(labels):
        g = int((labels == lab).sum())
        similar_bound += g * (g - 1) // 2
    if similar_bound + n * dissimilar_budget > 2 * max_pairs:
        raise PairBudgetError(
            f"fasthash_budget encoding would emit about "
            f"{similar_bound + n * dissimilar_budget} pairs, cap is {max_pairs}"
        )
    ii_parts, jj_parts, rel_parts = [], [], []
    for lab in np.unique(labels):
        members = np.flatnonzero(labels == lab)
        others = np.flatnonzero(labels != lab)
        if members.size > 1:
            a, b = np.triu_indices(members.size, k=1)
            ii_parts.append(members[a])
            jj_parts.append(members[b])
            rel_parts.append(np.full(a.size, SIMILAR, np.int8))
        if others.size and dissimilar_budget > 0:
            take = min(dissimilar_budget, others.size)
            for q in members:
                picked = others[rng.choice(others.size, size=take, replace=False)]
                ii_parts.append(np.full(take, q, np.int64))
                jj_parts.append(picked)
                rel_parts.append(np.full(take, DISSIMILAR, np.int8))
    return _dedupe(
        np.concatenate(ii_parts) if ii_parts else np.empty(0, np.int64),
        np.concatenate(jj_parts) if jj_parts else np.empty(0, np.int64),
        np.concatenate(rel_parts) if rel_parts else np.empty(0, np.int8),
        max_pairs,
    )


class _PairConsumer(BaseHasher):
    """Mixin resolving the pairs argument / encoding parameter in fit."""

    def _resolve_pairs(self, m, labels, pairs) -> SimilarityPairs:
        if pairs is not None:
            pairs.check_range(m.shape[0])
            return pairs
        if self.encoding == "none":
            return SimilarityPairs.empty()
        if labels is None:
            raise TrainingError(
                f"{self.method_tag}: encoding {self.encoding!r} needs labels"
            )
        ds = LabeledDataset(bits.pack_rows(m), m.shape[1], labels)
        return encode_similarity(
            ds,
            self.encoding,
            seed=self.seed,
            knn=self.knn,
            dissimilar_budget=self.dissimilar_budget,
            max_pairs=self.max_pairs,
        )


def _pair_outer_sum(x, ii, jj, pair_weights):
    """Sum of w_p * (x_i x_j^T + x_j x_i^T) over pairs, chunked."""
    d = x.shape[1]
    m = np.zeros((d, d))
    for s in range(0, len(ii), 65536):
        sl = slice(s, s + 65536)
        m += (x[ii[sl]] * pair_weights[sl, None]).T @ x[jj[sl]]
    return m + m.T


def _sequential_directions(xc, code_length, eta, pairs, alpha, joint, tag):
    """Shared per-bit eigenvector extraction for the sequential trainers.

    Bit k maximizes w' (pair_term + eta * X'X) w on residualized data; after
    each bit the pair penalties are updated (incrementally for SPLH, or
    rebuilt from the joint per-pair error count for BTSPLH) and the data is
    residualized against the chosen direction.  With no pairs the pair term
    is identically zero and is skipped, so eta never enters the arithmetic.
    """
    n, d = xc.shape
    if code_length > d:
        raise TrainingError(f"{tag}: code length {code_length} exceeds descriptor length {d}")
    have_pairs = len(pairs) > 0
    x_res = xc.copy()
    directions = np.empty((d, code_length))
    weight_trace = []
    if have_pairs:
        ii, jj = pairs.i, pairs.j
        rel = pairs.relation.astype(np.float64)
        pair_weights = rel.copy()
        error_counts = np.zeros(len(pairs))
    for k in range(code_length):
        if have_pairs:
            if joint:
                pair_weights = rel * (1.0 + alpha * error_counts)
            weight_trace.append(pair_weights.copy())
            m = _pair_outer_sum(x_res, ii, jj, pair_weights) + eta * (x_res.T @ x_res)
        else:
            m = x_res.T @ x_res
        _, vectors = sym_eig(m)
        w = vectors[:, 0]
        directions[:, k] = w
        x_res -= np.outer(x_res @ w, w)
        if have_pairs:
            h = xc @ w > 0  # bits on the original centered data
            split = h[ii] != h[jj]
            violated = np.where(rel > 0, split, ~split)
            if joint:
                error_counts += violated
            else:
                pair_weights = pair_weights + alpha * rel * violated
    return directions, weight_trace


@register
class SplhHasher(_PairConsumer, LinearHasher):
    """Sequential projections balancing pair agreement and data variance.

    Each bit takes the top eigenvector of pair_term + eta * X'X; pairs the
    new bit hashes inconsistently get their penalty bumped by penalty_step
    in the relation direction before the next bit.
    """

    method_tag = "splh"

    def __init__(
        self,
        code_length: int = 64,
        eta: float = 1.0,
        encoding: str = "none",
        knn: int = 20,
        dissimilar_budget: int = 100,
        penalty_step: float = 0.1,
        max_pairs: int = DEFAULT_MAX_PAIRS,
        bit_mapping: str = bits.PLUS_MINUS_ONE,
        center: bool = True,
        seed: int = 0,
    ):
        self.code_length = code_length
        self.eta = eta
        self.encoding = encoding
        self.knn = knn
        self.dissimilar_budget = dissimilar_budget
        self.penalty_step = penalty_step
        self.max_pairs = max_pairs
        self.bit_mapping = bit_mapping
        self.center = center
        self.seed = seed

    _joint_correction = False

    def _unsupervised_weight(self) -> float:
        return self.eta

    def fit(self, X, y=None, pairs=None):
        m, labels = self._training_bits(X, y)
        xc = self._center_fit(self._mapped(m))
        self._require_variance(xc)
        resolved = self._resolve_pairs(m, labels, pairs)
        directions, trace = _sequential_directions(
            xc,
            self.code_length,
            self._unsupervised_weight(),
            resolved,
            self.penalty_step,
            self._joint_correction,
            self.method_tag,
        )
        self.input_dim_ = m.shape[1]
        self.n_pairs_ = len(resolved)
        self.pair_weight_trace_ = trace
        self.weights_ = directions
        self.biases_ = np.zeros(self.code_length)
        return self._finish_fit(m)


@register
class BtsplhHasher(SplhHasher):
    """SPLH skeleton with penalties rebuilt from the joint code so far.

    Before bit k the pair penalties are recomputed as rel * (1 + penalty_step
    * e), where e counts how many of bits 1..k-1 disagree with the pair's
    relation; with no pairs this is exactly the SPLH no-pair path.
    """

    method_tag = "btsplh"
    _joint_correction = True

    def __init__(
        self,
        code_length: int = 64,
        lam: float = 1.0,
        encoding: str = "none",
        knn: int = 20,
        dissimilar_budget: int = 100,
        penalty_step: float = 0.1,
        max_pairs: int = DEFAULT_MAX_PAIRS,
        bit_mapping: str = bits.PLUS_MINUS_ONE,
        center: bool = True,
        seed: int = 0,
    ):
        self.code_length = code_length
        self.lam = lam
        self.encoding = encoding
        self.knn = knn
        self.dissimilar_budget = dissimilar_budget
        self.penalty_step = penalty_step
        self.max_pairs = max_pairs
        self.bit_mapping = bit_mapping
        self.center = center
        self.seed = seed

    def _unsupervised_weight(self) -> float:
        return self.lam


def _fit_tree(bits_real, bits_u8, y_pos, w, max_depth):
    """Weighted depth-limited decision tree on binary features.

    Nodes are parallel arrays; feature -1 marks a leaf carrying value +/-1.
    """
    feat, left, right, value = [], [], [], []

    def build(idx, depth_left):
        node = len(feat)
        feat.append(-1)
        left.append(-1)
        right.append(-1)
        w_sub = w[idx]
        pos = y_pos[idx]
        total_p = float(w_sub[pos].sum())
        total_n = float(w_sub[~pos].sum())
        value.append(1.0 if total_p >= total_n else -1.0)
        leaf_err = min(total_p, total_n)
        if depth_left == 0 or leaf_err <= 1e-15 or idx.size < 2:
            return node
        sub = bits_real[idx]
        w1p = (w_sub * pos) @ sub
        w1n = (w_sub * ~pos) @ sub
        split_err = np.minimum(w1p, w1n) + np.minimum(total_p - w1p, total_n - w1n)
        f = int(split_err.argmin())
        if split_err[f] >= leaf_err - 1e-12:
            return node
        ones = bits_u8[idx, f] == 1
        if not ones.any() or ones.all():
            return node
        feat[node] = f
        value[node] = 0.0
        left[node] = build(idx[~ones], depth_left - 1)
        right[node] = build(idx[ones], depth_left - 1)
        return node

    build(np.arange(bits_u8.shape[0]), max_depth)
    return (
        np.asarray(feat, np.int64),
        np.asarray(left, np.int64),
        np.asarray(right, np.int64),
        np.asarray(value, np.float64),
    )


def _eval_tree(tree, bits_u8, max_depth):
    feat, left, right, value = tree
    cur = np.zeros(bits_u8.shape[0], dtype=np.int64)
    for _ in range(max_depth):
        f = feat[cur]
        interior = f >= 0
        if not interior.any():
            break
        taken = bits_u8[np.arange(bits_u8.shape[0]), np.where(interior, f, 0)] == 1
        nxt = np.where(taken, right[cur], left[cur])
        cur = np.where(interior, nxt, cur)
    return value[cur]


@register
class FastTreeHasher(_PairConsumer):
    """Two-step supervised hashing: infer target bits, then learn trees.

    Step 1 seeds random +/-1 target codes and runs sequential greedy
    coordinate flips (all bits updated per element visit) minimizing the
    pairwise disagreement loss for code_inference_sweeps passes.  Step 2
    fits, per bit, a boosted ensemble of depth-limited decision trees on the
    raw descriptor bits to predict the inferred targets.
    """

    method_tag = "fasthash"
    uses_raw_bits = True

    def __init__(
        self,
        code_length: int = 64,
        tree_depth: int = 4,
        trees_per_bit: int = 4,
        code_inference_sweeps: int = 2,
        encoding: str = "fasthash_budget",
        knn: int = 20,
        dissimilar_budget: int = 100,
        max_pairs: int = DEFAULT_MAX_PAIRS,
        seed: int = 0,
    ):
        self.code_length = code_length
        self.tree_depth = tree_depth
        self.trees_per_bit = trees_per_bit
        self.code_inference_sweeps = code_inference_sweeps
        self.encoding = encoding
        self.knn = knn
        self.dissimilar_budget = dissimilar_budget
        self.max_pairs = max_pairs
        self.seed = seed

    def _infer_codes(self, n, pairs, rng):
        k = self.code_length
        codes = rng.integers(0, 2, size=(n, k)).astype(np.int8) * 2 - 1
        ii, jj = pairs.i, pairs.j
        rel = pairs.relation.astype(np.int64)

        owner = np.concatenate([ii, jj])
        nbr = np.concatenate([jj, ii])
        rel2 = np.concatenate([rel, rel])
        order = np.argsort(owner, kind="stable")
        nbr, rel2 = nbr[order], rel2[order]
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(owner, minlength=n), out=indptr[1:])

        def total_loss():
            agree = np.zeros(k, dtype=np.int64)
            for s in range(0, len(ii), 262144):
                sl = slice(s, s + 262144)
                agree += (
                    rel[sl, None] * codes[ii[sl]].astype(np.int64) * codes[jj[sl]]
                ).sum(axis=0)
            return (len(ii) - agree) / 2.0

        trace = [float(total_loss().sum())]
        rel2_col = rel2[:, None].astype(np.int8)
        for _ in range(self.code_inference_sweeps):
            for q in range(n):
                lo, hi = indptr[q], indptr[q + 1]
                if lo == hi:
                    continue
                s = (rel2_col[lo:hi] * codes[nbr[lo:hi]]).sum(
                    axis=0, dtype=np.int64
                )
                nz = s != 0
                codes[q, nz] = np.where(s[nz] > 0, 1, -1).astype(np.int8)
            trace.append(float(total_loss().sum()))
        return codes, np.asarray(trace)

    def fit(self, X, y=None, pairs=None):
        m, labels = self._training_bits(X, y)
        rng = self._rng()
        resolved = self._resolve_pairs(m, labels, pairs)
        if len(resolved) == 0:
            raise TrainingError(
                f"{self.method_tag}: needs similarity pairs (supervised only)"
            )
        codes, self.inference_loss_trace_ = self._infer_codes(m.shape[0], resolved, rng)

        n = m.shape[0]
        bits_real = m.astype(np.float64)
        ensembles = []
        alphas = []
        accuracy = np.empty(self.code_length)
        for k in range(self.code_length):
            y_pos = codes[:, k] > 0
            target = np.where(y_pos, 1.0, -1.0)
            w = np.full(n, 1.0 / n)
            trees_k, alphas_k = [], []
            score = np.zeros(n)
            for _ in range(self.trees_per_bit):
                tree = _fit_tree(bits_real, m, y_pos, w, self.tree_depth)
                pred = _eval_tree(tree, m, self.tree_depth)
                err = float(w[pred != target].sum())
                if err >= 0.5:
                    break  # no better than chance; boosting cannot continue
                alpha = 0.5 * np.log((1.0 - err) / max(err, 1e-12))
                trees_k.append(tree)
                alphas_k.append(alpha)
                score += alpha * pred
                if err <= 1e-12:
                    break  # already exact; further rounds would be copies
                w *= np.exp(-alpha * target * pred)
                w /= w.sum()
            ensembles.append(trees_k)
            alphas.append(np.asarray(alphas_k))
            accuracy[k] = float(((score > 0) == y_pos).mean())

        self.input_dim_ = m.shape[1]
        self.n_pairs_ = len(resolved)
        self.trees_ = ensembles
        self.alphas_ = alphas
        self.bit_train_accuracy_ = accuracy
        return self._finish_fit(m)

    def _encode_bits(self, m: np.ndarray) -> np.ndarray:
        out = np.zeros((m.shape[0], self.code_length))
        for k, (trees_k, alphas_k) in enumerate(zip(self.trees_, self.alphas_)):
            for tree, alpha in zip(trees_k, alphas_k):
                out[:, k] += alpha * _eval_tree(tree, m, self.tree_depth)
        return out > 0

    def _state_arrays(self):
        feat, left, right, value, offsets = [], [], [], [], [0]
        counts = []
        flat_alphas = []
        for trees_k, alphas_k in zip(self.trees_, self.alphas_):
            counts.append(len(trees_k))
            flat_alphas.extend(alphas_k.tolist())
            for tree in trees_k:
                feat.append(tree[0])
                left.append(tree[1])
                right.append(tree[2])
                value.append(tree[3])
                offsets.append(offsets[-1] + len(tree[0]))
        cat = lambda parts, dt: (
            np.concatenate(parts) if parts else np.empty(0, dt)
        )
        return {
            "tree_feat": cat(feat, np.int64),
            "tree_left": cat(left, np.int64),
            "tree_right": cat(right, np.int64),
            "tree_value": cat(value, np.float64),
            "tree_offsets": np.asarray(offsets, np.int64),
            "tree_counts": np.asarray(counts, np.int64),
            "alphas": np.asarray(flat_alphas, np.float64),
            "depth": np.asarray([self.tree_depth], np.int64),
            "bit_accuracy": getattr(
                self, "bit_train_accuracy_", np.empty(0)
            ),
        }

    def _restore_state(self, arrays):
        self.tree_depth = int(arrays["depth"][0])
        offsets = arrays["tree_offsets"]
        counts = arrays["tree_counts"]
        alphas = arrays["alphas"]
        self.trees_ = []
        self.alphas_ = []
        t = 0
        pos = 0
        for count in counts:
            trees_k = []
            for _ in range(count):
                lo, hi = offsets[t], offsets[t + 1]
                trees_k.append(
                    (
                        arrays["tree_feat"][lo:hi],
                        arrays["tree_left"][lo:hi],
                        arrays["tree_right"][lo:hi],
                        arrays["tree_value"][lo:hi],
                    )
                )
                t += 1
            self.trees_.append(trees_k)
            self.alphas_.append(alphas[pos : pos + count])
            pos += count
        acc = arrays.get("bit_accuracy")
        if acc is not None and acc.size:
            self.bit_train_accuracy_ = acc
