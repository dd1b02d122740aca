"""Leave-one-out k-NN separability of class labels on 2-D coordinates."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import PRIMARY, USER, ModelConfig, shared_coordinates, view_specific_coordinates
from .optim import fit


@dataclass(frozen=True)
class KnnReport:
    k: int
    accuracy: float
    n_evaluated: int
    per_class_accuracy: dict

    def to_dict(self):
        return {"k": self.k, "accuracy": self.accuracy, "n_evaluated": self.n_evaluated,
                "per_class_accuracy": dict(sorted(self.per_class_accuracy.items()))}


def _vote(neighbor_labels, neighbor_dists):
    votes, dist_sum = {}, {}
    for labs, dist in zip(neighbor_labels, neighbor_dists):
        for lab in labs:
            votes[lab] = votes.get(lab, 0) + 1
            dist_sum[lab] = dist_sum.get(lab, 0.0) + dist
    top = max(votes.values())
    return min((dist_sum[lab], lab) for lab, n in votes.items() if n == top)[1]


def loo_knn_accuracy(coords, labels, k=5):
    """Leave-one-out k-NN accuracy over single-labeled items.

    Neighbours are the ``k`` nearest other labeled items (Euclidean; equal
    distances go to the lower index).  Every label a neighbour carries gets
    one vote.  Vote ties go to the tied label with the smallest summed
    neighbour distance, then to the lexicographically smallest label.
    """
    coords = np.asarray(coords, dtype=float)
    if k < 1:
        raise ValueError("k must be at least 1")
    labeled = np.array(sorted(i for i, s in labels.assignments.items() if s), dtype=np.int64)
    if labeled.size < k + 1:
        raise ValueError(f"need at least k+1={k + 1} labeled items, have {labeled.size}")
    pts = coords[labeled]
    correct, seen = {}, {}
    for r, i in enumerate(labeled):
        own = labels.assignments[int(i)]
        if len(own) != 1:
            continue
        diff = pts - pts[r]
        sq = diff[:, 0] * diff[:, 0] + diff[:, 1] * diff[:, 1]
        sq[r] = np.inf
        # lexsort: primary key last; labeled is sorted so position order == index order
        order = np.lexsort((labeled, sq))[:k]
        nb_labels = [labels.assignments[int(labeled[j])] for j in order]
        nb_dists = [float(np.sqrt(sq[j])) for j in order]
        (truth,) = own
        seen[truth] = seen.get(truth, 0) + 1
        if _vote(nb_labels, nb_dists) == truth:
            correct[truth] = correct.get(truth, 0) + 1
    n_eval = sum(seen.values())
    acc = sum(correct.values()) / n_eval if n_eval else 0.0
    per_class = {lab: correct.get(lab, 0) / n for lab, n in seen.items()}
    return KnnReport(k, acc, n_eval, per_class)


def sne_baseline(d, optim):
    """Single-view SNE: the model with the user view dropped and K = 2."""
    state, report = fit(d, None, ModelConfig(K=2, view_balance=0.0), optim)
    return shared_coordinates(state), report


def separability_report(state, relevant, irrelevant, k=5):
    """k-NN separability of both label sets on the shared and view-specific displays.

    Returns a nested dict ``{display: {labelset: KnnReport}}``; the
    view-specific displays are present only when ``K >= 4``.
    """
    shared = shared_coordinates(state)
    out = {"shared": {"relevant": loo_knn_accuracy(shared, relevant, k),
                      "irrelevant": loo_knn_accuracy(shared, irrelevant, k)}}
    if state.K >= 4:
        out["user_specific"] = {
            "irrelevant": loo_knn_accuracy(view_specific_coordinates(state, USER), irrelevant, k)}
        out["primary_specific"] = {
            "relevant": loo_knn_accuracy(view_specific_coordinates(state, PRIMARY), relevant, k)}
    return out


def report_to_json(report):
    return {view: {name: r.to_dict() for name, r in sets.items()}
            for view, sets in report.items()}
