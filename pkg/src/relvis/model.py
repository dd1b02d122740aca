"""Two-view latent factorization: pair distributions, cost and gradient.

Both views share one latent matrix ``Y`` (N x K).  Each view scales the
latent dimensions by its own diagonal weight vector; the first two
weights of both views are pinned to one, so columns 0-1 of ``Y`` are the
shared display coordinates and the remaining columns are free to be
claimed by either view.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

PRIMARY = "primary"
USER = "user"
VIEWS = (PRIMARY, USER)


def _check_view(view):
    if view not in VIEWS:
        raise ValueError(f"unknown view {view!r}; expected one of {VIEWS}")


def _canonical_pairs(n_items, rows, cols):
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    if rows.shape != cols.shape:
        raise ValueError("row and column index arrays differ in length")
    if rows.size and (rows.min() < 0 or cols.min() < 0
                      or rows.max() >= n_items or cols.max() >= n_items):
        raise IndexError(f"pair index out of range for n_items={n_items}")
    if np.any(rows == cols):
        raise ValueError("self-pairs (i == j) are not allowed")
    return np.minimum(rows, cols), np.maximum(rows, cols)


def all_pairs(n_items):
    """Upper-triangle index arrays ``(rows, cols)`` for every pair i < j."""
    return np.triu_indices(n_items, k=1)


@dataclass(frozen=True)
class CountMatrix:
    """Symmetric nonnegative pair counts for one view.

    Only pairs with ``i < j`` are stored.  The stored pairs *are* the
    observed pairs; an observed pair may carry a zero count.
    """

    n_items: int
    rows: np.ndarray
    cols: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        if self.n_items < 1:
            raise ValueError("n_items must be positive")
        rows, cols = _canonical_pairs(self.n_items, self.rows, self.cols)
        counts = np.asarray(self.counts, dtype=float).ravel()
        if counts.shape != rows.shape:
            raise ValueError("counts and pair indices differ in length")
        if not np.all(np.isfinite(counts)) or np.any(counts < 0):
            raise ValueError("counts must be finite and nonnegative")
        # merge duplicates and sort lexicographically
        key = rows * self.n_items + cols
        uniq, inverse = np.unique(key, return_inverse=True)
        if uniq.size != key.size:
            counts = np.bincount(inverse, weights=counts, minlength=uniq.size)
        else:
            counts = counts[np.argsort(key, kind="stable")]
        object.__setattr__(self, "rows", uniq // self.n_items)
        object.__setattr__(self, "cols", uniq % self.n_items)
        object.__setattr__(self, "counts", counts)
        if not np.any(counts > 0):
            raise ValueError("count matrix has no strictly positive count")

    @classmethod
    def from_dense(cls, matrix, observed=None):
        """Build from a symmetric N x N array, optionally masked by ``observed``."""
        matrix = np.asarray(matrix, dtype=float)
        n = matrix.shape[0]
        rows, cols = all_pairs(n)
        if observed is not None:
            keep = np.asarray(observed, dtype=bool)[rows, cols]
            rows, cols = rows[keep], cols[keep]
        return cls(n, rows, cols, matrix[rows, cols])

    @property
    def observed_pairs(self):
        return set(zip(self.rows.tolist(), self.cols.tolist()))

    @property
    def entries(self):
        return list(zip(self.rows.tolist(), self.cols.tolist(), self.counts.tolist()))

    @property
    def total(self):
        return float(self.counts.sum())

    def covers_all_pairs(self):
        return self.rows.size == self.n_items * (self.n_items - 1) // 2

    def with_all_pairs(self):
        """Return a copy observed on every pair, unlisted pairs counting zero."""
        if self.covers_all_pairs():
            return self
        dense = self.dense()
        return CountMatrix.from_dense(dense)

    def dense(self):
        out = np.zeros((self.n_items, self.n_items))
        out[self.rows, self.cols] = self.counts
        out[self.cols, self.rows] = self.counts
        return out


@dataclass(frozen=True)
class PairDistribution:
    """Probability distribution over a support of unordered pairs."""

    n_items: int
    rows: np.ndarray
    cols: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        if self.rows.size == 0:
            raise ValueError("empty support")
        total = float(np.sum(self.probs))
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {total!r}, not 1")

    @property
    def support(self):
        return set(zip(self.rows.tolist(), self.cols.tolist()))

    def as_dict(self):
        return {(int(i), int(j)): float(p)
                for i, j, p in zip(self.rows, self.cols, self.probs)}

    def dense(self):
        out = np.zeros((self.n_items, self.n_items))
        out[self.rows, self.cols] = self.probs
        out[self.cols, self.rows] = self.probs
        return out


@dataclass(frozen=True)
class ModelConfig:
    K: int = 6
    view_balance: float = 1.0
    sparsity_coeff: float = 0.0

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 2:
            raise ValueError(f"K must be an integer >= 2, got {self.K!r}")
        if not self.view_balance >= 0:
            raise ValueError("view_balance must be nonnegative")
        if not self.sparsity_coeff >= 0:
            raise ValueError("sparsity_coeff must be nonnegative")


@dataclass
class LatentState:
    """Latent coordinates ``Y`` (N x K) and per-view diagonal weights."""

    Y: np.ndarray
    wD: np.ndarray
    wF: np.ndarray
    K: int = field(init=False)

    def __post_init__(self):
        self.Y = np.asarray(self.Y, dtype=float)
        self.wD = np.asarray(self.wD, dtype=float)
        self.wF = np.asarray(self.wF, dtype=float)
        if self.Y.ndim != 2 or self.Y.shape[1] < 2:
            raise ValueError("Y must be an N x K matrix with K >= 2")
        self.K = self.Y.shape[1]
        for name, w in (("wD", self.wD), ("wF", self.wF)):
            if w.shape != (self.K,):
                raise ValueError(f"{name} must have length K={self.K}")
            if w[0] != 1.0 or w[1] != 1.0:
                raise ValueError(f"{name}[0:2] is pinned to (1, 1)")

    @property
    def n_items(self):
        return self.Y.shape[0]

    def weights(self, view):
        _check_view(view)
        return self.wD if view == PRIMARY else self.wF

    def is_finite(self):
        return bool(np.all(np.isfinite(self.Y)) and np.all(np.isfinite(self.wD))
                    and np.all(np.isfinite(self.wF)))

    def copy(self):
        return LatentState(self.Y.copy(), self.wD.copy(), self.wF.copy())


def weighted_sq_distance(state, view, i, j):
    """Squared distance ``sum_k w_k^2 (y_ik - y_jk)^2`` under one view's weights."""
    n = state.n_items
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"item index out of range for N={n}: ({i}, {j})")
    if i == j:
        raise ValueError("weighted_sq_distance needs i != j")
    w = state.weights(view)
    diff = state.Y[i] - state.Y[j]
    return float(np.sum((w * w) * (diff * diff)))


def _pair_log_probs(Y, w, rows, cols):
    """Pair differences and log-softmax of ``-delta`` over the given support."""
    diff = Y[rows] - Y[cols]
    delta = (diff * diff) @ (w * w)
    log_p = -delta - logsumexp(-delta)
    return diff, log_p


def model_distribution(state, view, support):
    """Model pair distribution ``p_ij ∝ exp(-delta_ij)`` normalized over ``support``.

    ``support`` is either a ``(rows, cols)`` pair of index arrays or an
    iterable of ``(i, j)`` tuples.
    """
    if not state.is_finite():
        raise ValueError("latent state has non-finite entries")
    if isinstance(support, tuple) and len(support) == 2 and np.ndim(support[0]) == 1:
        rows, cols = support
    else:
        pairs = sorted((min(a, b), max(a, b)) for a, b in support)
        rows = [p[0] for p in pairs]
        cols = [p[1] for p in pairs]
    rows, cols = _canonical_pairs(state.n_items, rows, cols)
    if rows.size == 0:
        raise ValueError("empty support")
    _, log_p = _pair_log_probs(state.Y, state.weights(view), rows, cols)
    return PairDistribution(state.n_items, rows, cols, np.exp(log_p))


def _check_supports(state, d_tilde, f_tilde):
    n = state.n_items
    if d_tilde.n_items != n:
        raise ValueError(f"primary distribution has {d_tilde.n_items} items, state has {n}")
    if d_tilde.rows.size != n * (n - 1) // 2:
        raise ValueError("support mismatch: primary distribution must cover all pairs")
    if f_tilde is not None and f_tilde.n_items != n:
        raise ValueError(f"user distribution has {f_tilde.n_items} items, state has {n}")


def _view_terms(Y, w, dist, with_grad):
    diff, log_p = _pair_log_probs(Y, w, dist.rows, dist.cols)
    value = -float(np.dot(dist.probs, log_p))
    if not with_grad:
        return value, None, None
    # d(cost)/d(delta_ij) = dtilde_ij - p_ij
    g = dist.probs - np.exp(log_p)
    w2 = w * w
    contrib = 2.0 * g[:, None] * diff * w2
    n, K = Y.shape
    grad_Y = np.empty_like(Y)
    for k in range(K):
        grad_Y[:, k] = (np.bincount(dist.rows, weights=contrib[:, k], minlength=n)
                        - np.bincount(dist.cols, weights=contrib[:, k], minlength=n))
    grad_w = 2.0 * w * (g @ (diff * diff))
    return value, grad_Y, grad_w


def _objective(Y, wD, wF, d_tilde, f_tilde, config, with_grad=True):
    """Cost and (optionally) gradients on raw arrays; used by the optimizer."""
    cost, gY, gD = _view_terms(Y, wD, d_tilde, with_grad)
    gF = np.zeros_like(wF) if with_grad else None
    beta = config.view_balance
    if f_tilde is not None and beta != 0:
        cF, gYF, gF = _view_terms(Y, wF, f_tilde, with_grad)
        cost += beta * cF
        if with_grad:
            gY += beta * gYF
            gF = beta * gF
    lam = config.sparsity_coeff
    if lam != 0:
        cost += lam * (np.abs(wD[2:]).sum() + np.abs(wF[2:]).sum())
        if with_grad:
            gD[2:] += lam * np.sign(wD[2:])
            gF[2:] += lam * np.sign(wF[2:])
    if with_grad:
        gD[:2] = 0.0
        gF[:2] = 0.0
    return cost, gY, gD, gF


def cost(state, d_tilde, f_tilde, config):
    """Mean-normalized negative log-likelihood of both views.

    ``f_tilde`` may be ``None`` to drop the user view entirely.
    """
    _check_supports(state, d_tilde, f_tilde)
    return _objective(state.Y, state.wD, state.wF, d_tilde, f_tilde, config,
                      with_grad=False)[0]


def gradient(state, d_tilde, f_tilde, config):
    """Analytic gradient of :func:`cost`.

    Returns
    -------
    grad_Y : ndarray, shape (N, K)
    grad_wD, grad_wF : ndarray, shape (K,)
        Entries 0 and 1 are always zero (pinned weights).
    """
    _check_supports(state, d_tilde, f_tilde)
    _, gY, gD, gF = _objective(state.Y, state.wD, state.wF, d_tilde, f_tilde, config)
    return gY, gD, gF


def cost_and_gradient(state, d_tilde, f_tilde, config):
    _check_supports(state, d_tilde, f_tilde)
    c, gY, gD, gF = _objective(state.Y, state.wD, state.wF, d_tilde, f_tilde, config)
    return c, (gY, gD, gF)


def shared_coordinates(state):
    """The 2-D display: columns 0-1 of ``Y``."""
    return state.Y[:, :2].copy()


def view_specific_coordinates(state, view):
    """Two strongest free dimensions of one view, scaled by their weights.

    Picks the two indices ``k >= 2`` with the largest ``|w_k|`` (ties go to
    the lower index) and returns those columns of ``Y`` in index order,
    each multiplied by ``|w_k|``.
    """
    if state.K < 4:
        raise ValueError("insufficient view-specific dimensions (need K >= 4)")
    mag = np.abs(state.weights(view)[2:])
    order = np.argsort(-mag, kind="stable")[:2]
    picked = np.sort(order) + 2
    return state.Y[:, picked] * np.abs(state.weights(view)[picked])
