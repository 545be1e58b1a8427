"""
Link Prediction Evaluation Module

Filtered ranking of head and tail queries, MRR / Hits@k metrics, per
direction and per relation-category breakdowns.
"""

import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from .data import EncodedSplit, FilterIndex, RelationCategory
from .exceptions import EmptyDatasetError, MissingCategoryError
from .models import Model, entity_points, score_all_heads, score_all_tails

logger = logging.getLogger(__name__)

HITS_AT = (1, 3, 10)


class Direction(str, Enum):
    """Which side of the triple a query hides."""

    HEAD = "head"
    TAIL = "tail"


@dataclass(frozen=True)
class RankResult:
    """Filtered rank of one query; fractional when ties are split."""

    triple_index: int
    direction: Direction
    rank: float

    @property
    def reciprocal_rank(self) -> float:
        return 1.0 / self.rank


@dataclass(frozen=True)
class Metrics:
    """Aggregate ranking metrics over a set of queries."""

    mrr: float
    hits1: float
    hits3: float
    hits10: float
    count: int
    mean_rank: float

    def to_dict(self) -> Dict:
        return {
            "mrr": self.mrr,
            "hits1": self.hits1,
            "hits3": self.hits3,
            "hits10": self.hits10,
            "n_queries": self.count,
            "mean_rank": self.mean_rank,
        }


@dataclass
class EvaluationResult:
    """Metrics of a split plus every per-query rank in query order."""

    metrics: Metrics
    ranks: List[RankResult]
    by_direction: Dict[str, Optional[Metrics]] = field(default_factory=dict)

    def to_dict(self) -> Dict:
        report = self.metrics.to_dict()
        report["by_direction"] = {
            name: metrics.to_dict() if metrics else None for name, metrics in self.by_direction.items()
        }
        return report


@dataclass
class CategoryBucket:
    """Queries whose relation falls in one cardinality category."""

    count: int
    metrics: Optional[Metrics]
    by_direction: Dict[str, Optional[Metrics]] = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {
            "count": self.count,
            "metrics": self.metrics.to_dict() if self.metrics else None,
            "by_direction": {
                name: metrics.to_dict() if metrics else None for name, metrics in self.by_direction.items()
            },
        }


def compute_metrics(ranks: Iterable) -> Optional[Metrics]:
    """
    Aggregate ranks into MRR, Hits@1/3/10 and mean rank.

    Args:
        ranks: RankResult objects or plain rank values

    Returns:
        Metrics, or None when there are no ranks
    """
    values = np.array([r.rank if isinstance(r, RankResult) else r for r in ranks], dtype=np.float64)
    if values.size == 0:
        return None
    hits = {k: float(np.mean(values <= k)) for k in HITS_AT}
    return Metrics(
        mrr=float(np.mean(1.0 / values)),
        hits1=hits[1],
        hits3=hits[3],
        hits10=hits[10],
        count=int(values.size),
        mean_rank=float(np.mean(values)),
    )


def filtered_rank(scores: np.ndarray, target: int, known: Iterable[int]) -> float:
    """
    Rank of ``target`` among candidates that are not other known triples.

    Lower scores rank first; each exact tie with the target counts one half.
    """
    mask = np.ones(scores.shape[0], dtype=bool)
    known = [k for k in known if k != target]
    if known:
        mask[known] = False
    mask[target] = False

    target_score = scores[target]
    candidates = scores[mask]
    better = np.count_nonzero(candidates < target_score)
    ties = np.count_nonzero(candidates == target_score)
    return 1.0 + better + ties / 2.0


def rank_query(model: Model, triple: Sequence[int], direction, filter_index: FilterIndex,
               triple_index: int = 0, points: Optional[np.ndarray] = None) -> RankResult:
    """
    Filtered rank of the hidden entity of one triple.

    Args:
        model: Model to rank with
        triple: (h, r, t) ids, the hidden side being the ground truth
        direction: ``head`` or ``tail``
        filter_index: Known triples over every split
        triple_index: Position of the triple in its split, kept on the result
        points: Optional precomputed entity representations

    Returns:
        Rank result
    """
    h, r, t = (int(x) for x in triple)
    direction = Direction(direction)
    if direction is Direction.TAIL:
        scores = score_all_tails(model, h, r, points)
        rank = filtered_rank(scores, t, filter_index.tails_of(h, r))
    else:
        scores = score_all_heads(model, r, t, points)
        rank = filtered_rank(scores, h, filter_index.heads_of(r, t))
    return RankResult(triple_index=triple_index, direction=direction, rank=rank)


def _queries(split: EncodedSplit) -> List[Tuple[int, Direction]]:
    return [(i, direction) for i in range(len(split)) for direction in (Direction.TAIL, Direction.HEAD)]


def query_fingerprint(ranks: Sequence[RankResult]) -> str:
    """SHA-256 over the ordered (triple_index, direction) sequence."""
    digest = hashlib.sha256()
    for result in ranks:
        digest.update(f"{result.triple_index}:{Direction(result.direction).value}\n".encode("utf-8"))
    return digest.hexdigest()


def _split_metrics(ranks: Sequence[RankResult]) -> Dict[str, Optional[Metrics]]:
    return {
        direction.value: compute_metrics(r for r in ranks if r.direction is direction)
        for direction in (Direction.HEAD, Direction.TAIL)
    }


def evaluate(model: Model, split: EncodedSplit, filter_index: FilterIndex, threads: int = 1,
             progress: bool = False, desc: str = "Evaluating") -> EvaluationResult:
    """
    Rank both directions of every triple in a split.

    Queries are ordered (triple 0 tail, triple 0 head, triple 1 tail, ...)
    regardless of how many worker threads are used.

    Args:
        model: Model to evaluate (read only)
        split: Triples to query
        filter_index: Known triples over every split
        threads: Worker threads
        progress: Show a progress bar
        desc: Progress bar label

    Returns:
        Evaluation result
    """
    if len(split) == 0:
        raise EmptyDatasetError("Cannot evaluate an empty split")

    points = entity_points(model)
    queries = _queries(split)
    triples = split.triples

    def run(chunk: Sequence[int]) -> List[RankResult]:
        return [
            rank_query(model, triples[queries[q][0]], queries[q][1], filter_index,
                       triple_index=queries[q][0], points=points)
            for q in chunk
        ]

    threads = max(1, int(threads))
    chunk_size = max(1, min(256, -(-len(queries) // threads)))
    chunks = [range(start, min(start + chunk_size, len(queries))) for start in range(0, len(queries), chunk_size)]
    ranks: List[RankResult] = []

    with tqdm(total=len(queries), desc=desc, unit="query", disable=not progress, leave=False) as bar:
        if threads == 1:
            for chunk in chunks:
                ranks.extend(run(chunk))
                bar.update(len(chunk))
        else:
            with ThreadPoolExecutor(max_workers=threads) as executor:
                # map preserves submission order, so assembly stays deterministic
                for chunk, results in zip(chunks, executor.map(run, chunks)):
                    ranks.extend(results)
                    bar.update(len(chunk))

    metrics = compute_metrics(ranks)
    logger.debug(f"Evaluated {len(ranks)} queries: MRR {metrics.mrr:.4f}, Hits@10 {metrics.hits10:.4f}")
    return EvaluationResult(metrics=metrics, ranks=ranks, by_direction=_split_metrics(ranks))


def evaluate_by_category(model: Model, split: EncodedSplit, filter_index: FilterIndex,
                         categories: Mapping[int, RelationCategory],
                         result: Optional[EvaluationResult] = None,
                         threads: int = 1) -> Dict[str, CategoryBucket]:
    """
    Partition queries by their relation's category and compute metrics per bucket.

    Every category is reported; empty buckets have count 0 and no metrics.

    Args:
        model: Model to evaluate
        split: Triples to query
        filter_index: Known triples
        categories: Relation id to category
        result: Reuse an existing evaluation of the same split instead of re-ranking
        threads: Worker threads when ranking is needed

    Returns:
        Category name to bucket

    Raises:
        MissingCategoryError: If a relation of the split has no category
    """
    for relation in np.unique(split.relations).tolist():
        if relation not in categories:
            raise MissingCategoryError(relation)

    if result is None:
        result = evaluate(model, split, filter_index, threads=threads)

    grouped: Dict[RelationCategory, List[RankResult]] = {category: [] for category in RelationCategory}
    relations = split.relations
    for rank in result.ranks:
        grouped[RelationCategory(categories[int(relations[rank.triple_index])])].append(rank)

    return {
        category.value: CategoryBucket(
            count=len(ranks),
            metrics=compute_metrics(ranks),
            by_direction=_split_metrics(ranks),
        )
        for category, ranks in grouped.items()
    }
