"""Exit criteria for the package, one test per criterion.

Each test appends a PASS/FAIL line that is printed in the terminal summary.
"""
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, brute_knn, random_instance, textbook_sne
from relvis.cli import main
from relvis.data import (
    FeatureMatrix, LabelSet, SyntheticSpec, gaussian_similarity, labels_to_counts, median_sigma,
    normalize, synth_generate, synth_two_aspects,
)
from relvis.evaluation import loo_knn_accuracy, separability_report, sne_baseline
from relvis.model import (
    CountMatrix, ModelConfig, cost, gradient, model_distribution, shared_coordinates,
)
from relvis.optim import OptimConfig, finite_diff_gradient, fit, fit_distributions


def record(number, name, passed, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] {number}. {name}: {detail}")
    return passed


def test_1_gradient_correctness():
    start = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    ok = True
    for t in range(20):
        n = int(rng.integers(3, 16))
        K = (2, 4, 6)[t % 3]
        state, d, f, config = random_instance(rng, n, K, user_density=rng.uniform(0.2, 0.8))
        for a, num in zip(gradient(state, d, f, config),
                          finite_diff_gradient(state, d, f, config, h=1e-5)):
            err = np.abs(a - num)
            ok &= bool(np.all(err <= np.maximum(1e-4 * np.abs(num), 1e-8)))
            big = np.abs(num) > 1e-8
            if big.any():
                worst = max(worst, float(np.max(err[big] / np.abs(num[big]))))
    elapsed = time.perf_counter() - start
    ok &= elapsed < 30
    assert record(1, "gradient vs finite differences", ok,
                  f"20 instances, worst rel err {worst:.2e}, {elapsed:.1f}s")


def test_2_invariance_suite():
    start = time.perf_counter()
    rng = np.random.default_rng(2)
    worst = {"norm": 0.0, "translate": 0.0, "rotate": 0.0, "sign": 0.0}
    for _ in range(25):
        state, d, f, config = random_instance(rng, int(rng.integers(2, 14)),
                                              int(rng.integers(2, 7)))
        base = cost(state, d, f, config)
        for view, dist in (("primary", d), ("user", f)):
            p = model_distribution(state, view, (dist.rows, dist.cols))
            worst["norm"] = max(worst["norm"], abs(p.probs.sum() - 1))
        moved = state.copy()
        moved.Y += rng.uniform(-20, 20, state.K)
        worst["translate"] = max(worst["translate"], abs(cost(moved, d, f, config) - base))
        angle = rng.uniform(0, 2 * np.pi)
        R = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
        R = R @ np.diag([1.0, rng.choice([-1.0, 1.0])])
        turned = state.copy()
        turned.Y[:, :2] = state.Y[:, :2] @ R.T
        worst["rotate"] = max(worst["rotate"], abs(cost(turned, d, f, config) - base))
        flipped = state.copy()
        flipped.Y[:, rng.integers(state.K)] *= -1
        if state.K > 2:
            flipped.wF[rng.integers(2, state.K)] *= -1
            flipped.wD[rng.integers(2, state.K)] *= -1
        worst["sign"] = max(worst["sign"], abs(cost(flipped, d, f, config) - base))
    state, d, f, config = random_instance(rng, 12, 6)
    out, report = fit_distributions(d, f, config, OptimConfig(max_iters=500, grad_tol=1e-300),
                                    state=state)
    pinned = (out.wD[:2].tolist() == [1.0, 1.0] and out.wF[:2].tolist() == [1.0, 1.0]
              and report.iterations_run == 500)
    elapsed = time.perf_counter() - start
    ok = (worst["norm"] <= 1e-12 and worst["translate"] <= 1e-12 and worst["rotate"] <= 1e-10
          and worst["sign"] <= 1e-12 and pinned and elapsed < 10)
    assert record(2, "invariance suite", ok,
                  ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
                  + f", pinned after 500 steps {pinned}, {elapsed:.1f}s")


def test_3_sne_reduction():
    start = time.perf_counter()
    rng = np.random.default_rng(3)
    worst_c = worst_g = 0.0
    for _ in range(5):
        n = int(rng.integers(3, 15))
        state, d, f, _ = random_instance(rng, n, 2)
        config = ModelConfig(K=2, view_balance=0.0)
        ce, g_ref = textbook_sne(state.Y, d.dense())
        worst_c = max(worst_c, abs(cost(state, d, f, config) - (ce - math.log(2))))
        worst_g = max(worst_g, float(np.max(np.abs(gradient(state, d, f, config)[0] - g_ref))))
    X = FeatureMatrix.from_array(rng.standard_normal((30, 4)) + np.repeat(np.eye(3, 4) * 5, 10, 0))
    d = gaussian_similarity(X, median_sigma(X))
    f = labels_to_counts(LabelSet.from_sequence([i % 3 for i in range(30)]), 30)
    opt = OptimConfig(seed=17, max_iters=800)
    full, _ = fit(d, f, ModelConfig(K=2, view_balance=0.0), opt)
    base, _ = sne_baseline(d, opt)
    bitwise = np.array_equal(shared_coordinates(full), base)
    elapsed = time.perf_counter() - start
    ok = worst_c <= 1e-12 and worst_g <= 1e-12 and bitwise and elapsed < 30
    assert record(3, "SNE reduction", ok, f"cost diff {worst_c:.1e}, grad diff {worst_g:.1e}, "
                  f"coords bitwise {bitwise}, {elapsed:.1f}s")


@pytest.fixture(scope="module")
def relevance_run():
    start = time.perf_counter()
    spec = SyntheticSpec(n_items=200, n_relevant_classes=4, n_irrelevant_classes=4,
                         feature_dim=10, cluster_separation=6.0, noise_rate=0.1, seed=0)
    features, user, relevant, irrelevant = synth_generate(spec)
    d = gaussian_similarity(features, median_sigma(features))
    runs = [fit(d, user, ModelConfig(K=6), OptimConfig(seed=s)) for s in range(3)]
    state, _ = min(runs, key=lambda r: r[1].final_cost)
    report = separability_report(state, relevant, irrelevant, k=5)
    sne_coords, _ = sne_baseline(user, OptimConfig(seed=0))
    sne_acc = loo_knn_accuracy(sne_coords, relevant, 5).accuracy
    return report, sne_acc, time.perf_counter() - start


def test_4_relevance_recovery(relevance_run):
    report, sne_acc, elapsed = relevance_run
    acc = report["shared"]["relevant"].accuracy
    ok = acc >= 0.85 and acc >= sne_acc and elapsed < 300
    assert record(4, "relevance recovery", ok, f"shared/relevant 5-NN {acc:.3f} "
                  f"(SNE on user view {sne_acc:.3f}), {elapsed:.1f}s")


def test_5_explaining_away(relevance_run):
    report, _, _ = relevance_run
    specific = report["user_specific"]["irrelevant"].accuracy
    shared = report["shared"]["irrelevant"].accuracy
    ok = specific - shared >= 0.10
    assert record(5, "explaining away", ok, f"irrelevant 5-NN user-specific {specific:.3f} "
                  f"vs shared {shared:.3f} (gap {specific - shared:+.3f})")


def test_6_dual_user_divergence():
    start = time.perf_counter()
    features, labels_a, labels_b = synth_two_aspects(n_items=150, seed=0)
    d = gaussian_similarity(features, median_sigma(features))
    acc = {}
    for used, labels in (("A", labels_a), ("B", labels_b)):
        f = labels_to_counts(labels, features.n_items)
        state, _ = fit(d, f, ModelConfig(K=6), OptimConfig(seed=0))
        coords = shared_coordinates(state)
        acc[used] = (loo_knn_accuracy(coords, labels_a, 5).accuracy,
                     loo_knn_accuracy(coords, labels_b, 5).accuracy)
    elapsed = time.perf_counter() - start
    ok = acc["A"][0] > acc["A"][1] and acc["B"][1] > acc["B"][0] and elapsed < 300
    assert record(6, "dual-user divergence", ok,
                  f"user A run: A {acc['A'][0]:.3f} / B {acc['A'][1]:.3f}; "
                  f"user B run: A {acc['B'][0]:.3f} / B {acc['B'][1]:.3f}; {elapsed:.1f}s")


def test_7_knn_oracle_equivalence():
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    mismatches = 0
    for t in range(50):
        n = int(rng.integers(8, 201))
        n_classes = int(rng.integers(2, 6))
        if t % 2:
            coords = rng.integers(0, 6, (n, 2)).astype(float)  # heavy distance ties
        else:
            coords = rng.standard_normal((n, 2))
            coords[rng.integers(n, size=n // 4)] = coords[0]
        assignments = {i: {f"c{rng.integers(n_classes)}"} for i in range(n)
                       if rng.random() < 0.9}
        for i in rng.integers(n, size=3):
            assignments[int(i)] = {"c0", "c1"}
        labels = LabelSet(assignments)
        k = int(rng.integers(1, 8))
        r = loo_knn_accuracy(coords, labels, k)
        if (r.accuracy, r.n_evaluated, r.per_class_accuracy) != brute_knn(coords, labels, k):
            mismatches += 1
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and elapsed < 20
    assert record(7, "kNN oracle equivalence", ok,
                  f"{mismatches} mismatches in 50 instances, {elapsed:.1f}s")


def test_8_data_path_exactness():
    checks = []
    fm = lambda rows: FeatureMatrix.from_array(np.array(rows, dtype=float))
    checks.append(gaussian_similarity(fm([[1.0, 1.0], [1.0, 1.0]]), 2.0).counts.tolist() == [1.0])
    checks.append(abs(gaussian_similarity(fm([[0.0, 0.0], [3.0, 4.0]]), 5.0).counts[0]
                      - math.exp(-1)) <= 1e-12)
    col = gaussian_similarity(fm([[0.0], [1.5], [3.0]]), 1.5).counts
    checks.append(np.all(np.abs(col - [math.exp(-1), math.exp(-4), math.exp(-1)]) <= 1e-12))
    checks.append(median_sigma(fm([[0.0], [3.0]])) == 3.0)
    checks.append(median_sigma(fm([[0.0], [1.0], [3.0]])) == 2.0)
    checks.append(median_sigma(fm([[0.0], [1.0], [3.0], [6.0]])) == 3.0)
    two = labels_to_counts(LabelSet({0: {"A", "B"}, 1: {"A"}, 2: {"A", "B"}}), 4)
    checks.append(two.entries == [(0, 1, 1.0), (0, 2, 2.0), (1, 2, 1.0)])
    checks.append(two.observed_pairs == {(0, 1), (0, 2), (1, 2)})
    checks.append(normalize(CountMatrix(3, [0, 0], [1, 2], [2.0, 2.0])).as_dict()
                  == {(0, 1): 0.5, (0, 2): 0.5})
    checks.append(normalize(CountMatrix(3, [1], [2], [7.0])).as_dict() == {(1, 2): 1.0})
    rng = np.random.default_rng(8)
    rows, cols = np.triu_indices(40, 1)
    keep = rng.random(rows.size) < 0.1
    keep[0] = True
    p = normalize(CountMatrix(40, rows[keep], cols[keep], rng.exponential(size=keep.sum())))
    checks.append(abs(p.probs.sum() - 1) <= 1e-12)
    ok = all(bool(c) for c in checks)
    assert record(8, "data-path exactness", ok, f"{sum(map(bool, checks))}/{len(checks)} checks")


def test_9_cli_determinism_and_contract(tmp_path):
    syn = tmp_path / "syn"
    assert main(["--seed", "3", "synth", "--output", str(syn), "--n-items", "40"]) == 0
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"features = {syn / 'features.csv'}\ncounts = {syn / 'user_counts.csv'}\n"
                   "max_iters = 300\n")
    same = True
    for run in ("a", "b"):
        out = tmp_path / run
        assert main(["--seed", "9", "--config", str(cfg), "fit", "--output", str(out)]) == 0
        assert main(["plot", str(out / "coords_shared.csv"), str(syn / "labels_relevant.csv"),
                     str(out / "shared.svg")]) == 0
    for name in ("coords_shared.csv", "coords_view_D.csv", "coords_view_F.csv", "shared.svg"):
        same &= (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    bad_features = tmp_path / "bad_features.csv"
    bad_features.write_text("id,f1\nx,1\ny,not-a-number\n")
    codes = {
        "missing output key -> 1": main(["--config", str(cfg), "fit"]),
        "malformed features row -> 2": main(["fit", "--features", str(bad_features), "--counts",
                                             str(syn / "user_counts.csv"), "--output",
                                             str(tmp_path / "x")]),
        "k too large -> 2": main(["eval", str(tmp_path / "a" / "coords_shared.csv"),
                                  str(syn / "labels_relevant.csv"), "--k", "40"]),
    }
    expected = {"missing output key -> 1": 1, "malformed features row -> 2": 2,
                "k too large -> 2": 2}
    ok = same and codes == expected and not (tmp_path / "x").exists()
    assert record(9, "CLI determinism and exit codes", ok,
                  f"byte-identical outputs {same}, exit codes {list(codes.values())}")
