import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qreform.metrics import (
    EvalReport,
    average_precision_at_k,
    evaluate_rankings,
    map_at_k,
    precision_at_k,
    recall_at_k,
    reward,
)


def test_recall_examples():
    assert recall_at_k([1, 2, 3], {2, 4}, 3) == 0.5
    assert recall_at_k([], {1, 2}, 40) == 0.0
    assert recall_at_k([3, 1, 2], {1, 2, 3}, 3) == 1.0


def test_recall_requires_relevant():
    with pytest.raises(ValueError):
        recall_at_k([1], set(), 5)


@given(
    retrieved=st.lists(st.integers(0, 30), max_size=25, unique=True),
    relevant=st.sets(st.integers(0, 30), min_size=1, max_size=10),
    k1=st.integers(1, 30),
    k2=st.integers(1, 30),
)
@settings(max_examples=150)
def test_recall_monotone_in_k(retrieved, relevant, k1, k2):
    lo, hi = sorted((k1, k2))
    assert recall_at_k(retrieved, relevant, lo) <= recall_at_k(retrieved, relevant, hi)


def test_precision_examples():
    assert precision_at_k([1, 2, 3], {2, 4}, 3) == pytest.approx(1 / 3)
    assert precision_at_k([5], {5}, 10) == 1.0
    assert precision_at_k([], {1}, 10) == 0.0


def scalar_average_precision(retrieved, relevant, k):
    """Literal transcription: sum of P@j * rel(j) over j <= k, divided by |relevant|."""
    total = 0.0
    for j in range(1, min(k, len(retrieved)) + 1):
        if retrieved[j - 1] in relevant:
            top = retrieved[:j]
            p_at_j = len([d for d in top if d in relevant]) / len(top)
            total += p_at_j
    return total / len(relevant)


def test_average_precision_examples():
    assert average_precision_at_k(["d1", "d2"], {"d2"}, 2) == 0.5
    assert average_precision_at_k([1, 2, 3], {1, 2, 3}, 3) == 1.0


def test_average_precision_random_permutations_match_oracle():
    rng = np.random.default_rng(0)
    docs = list(range(10))
    relevant = {2, 5, 7}
    for _ in range(20):
        perm = [int(x) for x in rng.permutation(docs)]
        for k in (1, 3, 5, 10):
            assert average_precision_at_k(perm, relevant, k) == pytest.approx(
                scalar_average_precision(perm, relevant, k), abs=1e-12
            )


def test_ap_bounded_and_tight():
    rng = np.random.default_rng(1)
    for _ in range(50):
        perm = [int(x) for x in rng.permutation(12)]
        relevant = set(int(x) for x in rng.choice(12, 4, replace=False))
        ap = average_precision_at_k(perm, relevant, 12)
        assert 0.0 <= ap <= 1.0
        front_loaded = sorted(relevant) + [d for d in perm if d not in relevant]
        assert average_precision_at_k(front_loaded, relevant, 12) == 1.0


def test_map_examples():
    assert map_at_k([0.5, 0.5]) == 0.5
    assert map_at_k([0.7]) == 0.7
    with pytest.raises(ValueError):
        map_at_k([])


def test_map_matches_independent_summation():
    rng = np.random.default_rng(2)
    values = [float(x) for x in rng.random(100)]
    total = 0.0
    for v in values:
        total += v
    assert map_at_k(values) == pytest.approx(total / 100, abs=1e-12)


def test_reward_is_recall_at_default_k():
    relevant = set(range(20))
    perfect = list(range(20))
    assert reward(perfect, relevant) == 1.0
    assert reward([100, 101], relevant) == 0.0
    half = list(range(10)) + [100 + i for i in range(30)]
    assert reward(half, relevant) == 0.5


def test_relabeling_invariance():
    retrieved = [3, 1, 4, 1, 5]
    relevant = {1, 5}
    mapping = {1: 10, 3: 30, 4: 40, 5: 50}
    relabeled = [mapping[d] for d in retrieved]
    relabeled_relevant = {mapping[d] for d in relevant}
    for k in (1, 2, 5):
        assert recall_at_k(retrieved, relevant, k) == recall_at_k(relabeled, relabeled_relevant, k)
        assert precision_at_k(retrieved, relevant, k) == precision_at_k(
            relabeled, relabeled_relevant, k
        )
        assert average_precision_at_k(retrieved, relevant, k) == average_precision_at_k(
            relabeled, relabeled_relevant, k
        )


def test_eval_report_means_and_tsv(tmp_path):
    rankings = {0: [1, 2], 1: [3]}
    relevant = {0: frozenset({1}), 1: frozenset({4})}
    report = evaluate_rankings(rankings, relevant, recall_k=2, precision_k=2, map_k=2)
    assert report.mean["R@2"] == pytest.approx(0.5)
    path = tmp_path / "report.tsv"
    report.write_tsv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "qid\tR@2\tP@2\tMAP@2"
    assert lines[-1].startswith("mean\t")
    assert len(lines) == 4


def test_eval_report_empty_mean_errors():
    report = EvalReport(columns=["R@1"])
    with pytest.raises(ValueError):
        _ = report.mean
