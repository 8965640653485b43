"""Detection scores over embeddings.

Every detector in the engine uses the convention that a larger score means
"more likely produced by the target machine source".
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import IO, Iterable

import numpy as np

from .errors import MetricError


@dataclass(frozen=True)
class ScoreRecord:
    """One scored query: (query id, score, binary label, support id)."""

    query_id: str
    score: float
    label: int
    support_id: str

    def __post_init__(self):
        if self.label not in (0, 1):
            raise MetricError("bad-label", f"label must be 0 or 1, got {self.label!r}")
        if not np.isfinite(self.score):
            raise MetricError("bad-score", f"score must be finite, got {self.score!r}")


def cosine_score(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity in [-1, 1]; errors on zero vectors."""
    av = np.asarray(a, dtype=np.float64)
    bv = np.asarray(b, dtype=np.float64)
    if av.shape != bv.shape:
        raise MetricError("dim-mismatch", f"cosine dims differ: {av.shape} vs {bv.shape}")
    na = np.linalg.norm(av)
    nb = np.linalg.norm(bv)
    if na == 0.0 or nb == 0.0:
        raise MetricError("zero-vector", "cosine undefined for a zero vector")
    return float(np.clip(av @ bv / (na * nb), -1.0, 1.0))


def prototype_score(supports: list[np.ndarray], query: np.ndarray) -> float:
    """Negative squared Euclidean distance to the support mean (prototype)."""
    if not supports:
        raise MetricError("empty-supports", "prototype needs at least one support")
    qv = np.asarray(query, dtype=np.float64)
    mats = [np.asarray(s, dtype=np.float64) for s in supports]
    if any(m.shape != qv.shape for m in mats):
        raise MetricError("dim-mismatch", "prototype supports/query dims differ")
    proto = np.mean(mats, axis=0)
    diff = qv - proto
    return float(-(diff @ diff))


def multi_target_score(
    support_embs: list[np.ndarray], query_emb: np.ndarray, aggregation: str = "min"
) -> float:
    """Aggregate per-support cosine scores; min is the default."""
    if not support_embs:
        raise MetricError("empty-supports", "multi-target score needs >= 1 support")
    if aggregation not in ("min", "max"):
        raise MetricError("bad-aggregation", f"aggregation must be min or max, got {aggregation!r}")
    scores = [cosine_score(s, query_emb) for s in support_embs]
    return min(scores) if aggregation == "min" else max(scores)


def defended_score(
    support_emb: np.ndarray, paraphrased_support_emb: np.ndarray, query_emb: np.ndarray
) -> float:
    """Min of the plain and paraphrased-support cosine scores."""
    return min(cosine_score(support_emb, query_emb), cosine_score(paraphrased_support_emb, query_emb))


def write_scores_csv(records: Iterable[ScoreRecord], fh: IO[str]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["query_id", "support_id", "score", "label"])
    for r in records:
        writer.writerow([r.query_id, r.support_id, repr(r.score), r.label])


def read_scores_csv(fh: IO[str]) -> list[ScoreRecord]:
    reader = csv.DictReader(fh)
    out = []
    for row in reader:
        out.append(
            ScoreRecord(
                query_id=row["query_id"],
                score=float(row["score"]),
                label=int(row["label"]),
                support_id=row["support_id"],
            )
        )
    return out
