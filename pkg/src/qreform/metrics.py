"""Retrieval quality metrics (R@K, P@K, MAP@K) and the training reward."""

from __future__ import annotations

from dataclasses import dataclass, field

DEFAULT_REWARD_K = 40
DEFAULT_EVAL_KS = {"recall": 40, "precision": 10, "map": 40}


def recall_at_k(retrieved, relevant, k: int) -> float:
    """|top-k retrieved ∩ relevant| / |relevant|."""
    if not relevant:
        raise ValueError("relevant set must be non-empty")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    top = retrieved[:k]
    return len(set(top) & set(relevant)) / len(set(relevant))


def precision_at_k(retrieved, relevant, k: int) -> float:
    """|top-k retrieved ∩ relevant| / |top-k retrieved|; 0 when nothing retrieved."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    top = retrieved[:k]
    if not top:
        return 0.0
    return len(set(top) & set(relevant)) / len(top)


def average_precision_at_k(retrieved, relevant, k: int) -> float:
    """Sum over relevant ranks j <= k of P@j, divided by |relevant|."""
    if not relevant:
        raise ValueError("relevant set must be non-empty")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    relevant = set(relevant)
    hits = 0
    total = 0.0
    for j, doc_id in enumerate(retrieved[:k], start=1):
        if doc_id in relevant:
            hits += 1
            total += hits / j
    return total / len(relevant)


def map_at_k(ap_values) -> float:
    """Arithmetic mean of per-query AP@K values."""
    values = list(ap_values)
    if not values:
        raise ValueError("map_at_k needs at least one query")
    return sum(values) / len(values)


def reward(retrieved, relevant, k: int = DEFAULT_REWARD_K) -> float:
    """Training reward: recall of the top-k retrieved documents."""
    return recall_at_k(retrieved, relevant, k)


@dataclass
class EvalReport:
    """Per-query and mean metric values for a fixed set of metric columns."""

    columns: list[str]
    per_query: dict[int, dict[str, float]] = field(default_factory=dict)

    def add(self, qid: int, values: dict[str, float]) -> None:
        self.per_query[qid] = values

    @property
    def mean(self) -> dict[str, float]:
        if not self.per_query:
            raise ValueError("report has no queries")
        n = len(self.per_query)
        return {
            col: sum(row[col] for row in self.per_query.values()) / n for col in self.columns
        }

    def write_tsv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("qid\t" + "\t".join(self.columns) + "\n")
            for qid in sorted(self.per_query):
                row = self.per_query[qid]
                fh.write(f"{qid}\t" + "\t".join(f"{row[c]:.6f}" for c in self.columns) + "\n")
            mean = self.mean
            fh.write("mean\t" + "\t".join(f"{mean[c]:.6f}" for c in self.columns) + "\n")


def evaluate_rankings(
    rankings: dict[int, list[int]],
    relevant_by_qid: dict[int, frozenset[int]],
    recall_k: int = DEFAULT_EVAL_KS["recall"],
    precision_k: int = DEFAULT_EVAL_KS["precision"],
    map_k: int = DEFAULT_EVAL_KS["map"],
) -> EvalReport:
    """Score ranked id lists against ground truth for the configured K values."""
    columns = [f"R@{recall_k}", f"P@{precision_k}", f"MAP@{map_k}"]
    report = EvalReport(columns=columns)
    for qid, retrieved in rankings.items():
        relevant = relevant_by_qid[qid]
        report.add(
            qid,
            {
                columns[0]: recall_at_k(retrieved, relevant, recall_k),
                columns[1]: precision_at_k(retrieved, relevant, precision_k),
                columns[2]: average_precision_at_k(retrieved, relevant, map_k),
            },
        )
    return report
