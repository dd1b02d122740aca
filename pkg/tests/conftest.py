import math

import numpy as np
import pytest

from relvis.data import normalize
from relvis.model import CountMatrix, LatentState, ModelConfig

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_instance(rng, n, K, user_density=0.6, balance=None, sparsity=None):
    """Random state plus normalized views; the user view has a random sparse support."""
    Y = rng.standard_normal((n, K))
    w = lambda: np.r_[1.0, 1.0, rng.choice([-1, 1], K - 2) * rng.uniform(0.3, 1.5, K - 2)]
    state = LatentState(Y, w(), w())
    rows, cols = np.triu_indices(n, k=1)
    d = CountMatrix(n, rows, cols, rng.gamma(1.0, 1.0, rows.size))
    keep = rng.random(rows.size) < user_density
    keep[rng.integers(rows.size)] = True
    counts = rng.integers(0, 4, keep.sum()).astype(float)
    counts[0] += 1
    f = CountMatrix(n, rows[keep], cols[keep], counts)
    config = ModelConfig(
        K=K,
        view_balance=rng.uniform(0.2, 2.0) if balance is None else balance,
        sparsity_coeff=rng.uniform(0.0, 0.1) if sparsity is None else sparsity,
    )
    return state, normalize(d), normalize(f), config


def direct_cost(state, d_tilde, f_tilde, config):
    """Straight double-loop evaluation of the two-view cost, pure Python floats."""

    def view_term(w, dist):
        deltas = {}
        for i, j in zip(dist.rows.tolist(), dist.cols.tolist()):
            deltas[i, j] = sum(w[k] ** 2 * (state.Y[i, k] - state.Y[j, k]) ** 2
                               for k in range(state.K))
        m = min(deltas.values())
        log_z = -m + math.log(sum(math.exp(-(v - m)) for v in deltas.values()))
        return -sum(p * (-deltas[i, j] - log_z)
                    for i, j, p in zip(dist.rows.tolist(), dist.cols.tolist(),
                                       dist.probs.tolist()))

    total = view_term(state.wD.tolist(), d_tilde)
    if f_tilde is not None and config.view_balance:
        total += config.view_balance * view_term(state.wF.tolist(), f_tilde)
    total += config.sparsity_coeff * (sum(abs(v) for v in state.wD[2:])
                                      + sum(abs(v) for v in state.wF[2:]))
    return total


def textbook_sne(Y, P_pairs):
    """Symmetric SNE with Gaussian output kernel on ordered pairs.

    ``P_pairs`` is an N x N symmetric matrix of unordered-pair probabilities;
    the ordered-pair joint is half of it.  Returns (cross-entropy, gradient).
    """
    n = Y.shape[0]
    P = P_pairs / 2.0
    D = ((Y[:, None, :] - Y[None, :, :]) ** 2).sum(-1)
    E = np.exp(-D)
    np.fill_diagonal(E, 0.0)
    Q = E / E.sum()
    off = ~np.eye(n, dtype=bool)
    ce = -np.sum(P[off] * np.log(Q[off]))
    grad = 4.0 * ((P - Q)[:, :, None] * (Y[:, None, :] - Y[None, :, :])).sum(1)
    return ce, grad


def brute_knn(coords, labels, k):
    """Quadratic-scan LOO k-NN written with plain Python lists."""
    items = sorted(i for i, s in labels.assignments.items() if s)
    if len(items) < k + 1:
        raise ValueError("too few labeled items")
    hits, total, seen, good = 0, 0, {}, {}
    for i in items:
        own = labels.assignments[i]
        if len(own) != 1:
            continue
        cands = []
        for j in items:
            if j == i:
                continue
            dx = float(coords[i][0]) - float(coords[j][0])
            dy = float(coords[i][1]) - float(coords[j][1])
            cands.append((dx * dx + dy * dy, j))
        cands.sort()
        votes = {}
        for sq, j in cands[:k]:
            for lab in labels.assignments[j]:
                n, s = votes.get(lab, (0, 0.0))
                votes[lab] = (n + 1, s + math.sqrt(sq))
        best = max(n for n, _ in votes.values())
        pred = sorted((s, lab) for lab, (n, s) in votes.items() if n == best)[0][1]
        truth = next(iter(own))
        total += 1
        seen[truth] = seen.get(truth, 0) + 1
        if pred == truth:
            hits += 1
            good[truth] = good.get(truth, 0) + 1
    return hits / total, total, {lab: good.get(lab, 0) / n for lab, n in seen.items()}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
