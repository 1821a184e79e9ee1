import pytest

import numpy as np
import gadguard as gg


def brute_force_auc(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def brute_force_ap(scores, labels):
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    hits, total = 0, 0.0
    for k, i in enumerate(order, start=1):
        if labels[i] == 1:
            hits += 1
            total += hits / k
    return total / hits


def random_case(rng):
    n = int(rng.integers(2, 40))
    labels = rng.integers(0, 2, size=n)
    labels[rng.integers(0, n)] = 1
    labels[(np.flatnonzero(labels == 1)[0] + 1) % n] = 0
    if rng.random() < 0.5:
        scores = rng.integers(0, 4, size=n).astype(float)  # plenty of ties
    else:
        scores = rng.normal(size=n)
    return scores, labels


def test_against_brute_force():
    rng = np.random.default_rng(42)
    for _ in range(1000):
        scores, labels = random_case(rng)
        assert gg.roc_auc(scores, labels) == brute_force_auc(scores, labels)
        assert gg.average_precision(scores, labels) == pytest.approx(
            brute_force_ap(scores, labels), abs=1e-12)


def test_examples():
    assert gg.roc_auc([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0]) == 1.0
    assert gg.roc_auc([0.1, 0.2, 0.9, 0.8], [1, 1, 0, 0]) == 0.0
    assert gg.roc_auc([0.5] * 6, [1, 0, 1, 0, 0, 0]) == 0.5
    assert gg.average_precision([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0]) == 1.0
    # ranking [0, 2, 1, 3]: hits at positions 1 and 3
    assert gg.average_precision([0.9, 0.1, 0.8, 0.0], [1, 1, 0, 0]) == pytest.approx(
        (1 + 2 / 3) / 2)
    # ties are broken by ascending node index
    assert gg.average_precision([1.0, 1.0], [0, 1]) == 0.5
    assert gg.average_precision([1.0, 1.0], [1, 0]) == 1.0


def test_accepts_ground_truth(planted):
    _, truth = planted
    scores = truth.labels.astype(float)
    assert gg.roc_auc(scores, truth) == 1.0
    assert gg.average_precision(scores, truth) == 1.0


def test_monotone_invariance(rng):
    scores, labels = rng.normal(size=50), rng.integers(0, 2, size=50)
    labels[:2] = [0, 1]
    transformed = np.exp(3 * scores) + 7
    assert gg.roc_auc(transformed, labels) == gg.roc_auc(scores, labels)
    assert gg.average_precision(transformed, labels) == gg.average_precision(scores, labels)


def test_auc_symmetry(rng):
    for _ in range(50):
        scores, labels = random_case(rng)
        assert gg.roc_auc(scores, labels) + gg.roc_auc(-scores, labels) == pytest.approx(1)


def test_ap_bounds(rng):
    for _ in range(50):
        scores, labels = random_case(rng)
        ap = gg.average_precision(scores, labels)
        assert 0 < ap <= 1


invalid_inputs = {
    "single class": ([0.1, 0.2, 0.3], [0, 0, 0], "both"),
    "only anomalies": ([0.1, 0.2], [1, 1], "both"),
    "length mismatch": ([0.1, 0.2], [0, 1, 1], "2 scores for 3 labels"),
    "not finite": ([0.1, np.nan], [0, 1], "finite"),
    "bad label": ([0.1, 0.2], [0, 2], "0 or 1"),
}


@pytest.mark.parametrize("scores, labels, message", invalid_inputs.values(),
                         ids=list(invalid_inputs.keys()))
def test_auc_errors(scores, labels, message):
    with pytest.raises(gg.MetricError) as excinfo:
        gg.roc_auc(scores, labels)
    assert message in str(excinfo.value)


def test_ap_errors():
    with pytest.raises(gg.MetricError):
        gg.average_precision([0.1, 0.2], [0, 0])
    # AP only needs one anomaly
    assert gg.average_precision([0.1, 0.2], [1, 1]) == 1.0
