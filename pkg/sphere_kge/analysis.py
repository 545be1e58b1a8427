"""
Embedding Space Analysis Module

Score distribution of uniformly sampled negatives and nearest-neighbour
reports over the learned entity representations.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, NamedTuple, Optional

import numpy as np

from .data import EncodedSplit, Vocab
from .exceptions import EmptyDatasetError, UnknownLabelError
from .models import Model, entity_points, score

logger = logging.getLogger(__name__)

DEFAULT_QUERIES = 1000
DEFAULT_NEGATIVES = 1024
DEFAULT_BINS = 100


@dataclass
class NegDistReport:
    """Moments and histogram of negative-triple scores."""

    kind: str
    n_samples: int
    mean: float
    variance: float
    std: float
    minimum: float
    maximum: float
    bin_edges: List[float] = field(default_factory=list)
    counts: List[int] = field(default_factory=list)

    def moments(self) -> Dict:
        return {
            "kind": self.kind,
            "n_samples": self.n_samples,
            "mean": self.mean,
            "variance": self.variance,
            "std": self.std,
            "min": self.minimum,
            "max": self.maximum,
        }

    def histogram_rows(self):
        """(bin_lo, bin_hi, count) per bin."""
        return [
            (self.bin_edges[i], self.bin_edges[i + 1], self.counts[i]) for i in range(len(self.counts))
        ]


class Neighbor(NamedTuple):
    label: str
    distance: float
    name: Optional[str] = None


def negative_score_distribution(model: Model, split: EncodedSplit, n_queries: int = DEFAULT_QUERIES,
                                n_negatives: int = DEFAULT_NEGATIVES,
                                rng: Optional[np.random.Generator] = None,
                                bins: int = DEFAULT_BINS) -> NegDistReport:
    """
    Score uniformly drawn tails for (h, r) pairs sampled from a split.

    Args:
        model: Trained model
        split: Split providing the (h, r) pairs, usually test
        n_queries: Pairs sampled without replacement (all if the split is smaller)
        n_negatives: Uniform tails drawn per pair
        rng: Random generator
        bins: Uniform histogram bins over [0, max observed score]

    Returns:
        Report with moments computed from the raw scores
    """
    if len(split) == 0:
        raise EmptyDatasetError("Negative-score analysis needs at least one triple")
    if model.n_entities < 2:
        raise ValueError("Negative-score analysis needs at least 2 entities")
    rng = rng if rng is not None else np.random.default_rng()

    n_queries = min(int(n_queries), len(split))
    chosen = rng.choice(len(split), size=n_queries, replace=False)
    heads = np.repeat(split.heads[chosen], n_negatives)
    relations = np.repeat(split.relations[chosen], n_negatives)
    tails = rng.integers(0, model.n_entities, size=heads.size)

    scores = score(model, heads, relations, tails).astype(np.float64)
    maximum = float(scores.max())
    counts, edges = np.histogram(scores, bins=bins, range=(0.0, maximum if maximum > 0 else 1.0))

    report = NegDistReport(
        kind=model.kind.value,
        n_samples=int(scores.size),
        mean=float(np.mean(scores)),
        variance=float(np.var(scores)),
        std=float(np.std(scores)),
        minimum=float(scores.min()),
        maximum=maximum,
        bin_edges=[float(edge) for edge in edges],
        counts=[int(count) for count in counts],
    )
    logger.info(f"Negative scores ({report.kind}): mean {report.mean:.4f}, variance {report.variance:.4f} "
                f"over {report.n_samples} samples")
    return report


def resolve_entity(label: str, vocab: Vocab, names: Optional[Mapping[str, str]] = None) -> int:
    """Entity id for a raw label, or for a display name from ``names`` when unambiguous."""
    if label in vocab.entity_to_id:
        return vocab.entity_to_id[label]
    if names:
        matches = [raw for raw, name in names.items() if name == label and raw in vocab.entity_to_id]
        if len(matches) == 1:
            return vocab.entity_to_id[matches[0]]
    raise UnknownLabelError(label)


def knn(model: Model, label: str, k: int, vocab: Vocab,
        names: Optional[Mapping[str, str]] = None) -> List[Neighbor]:
    """
    Nearest entities to an anchor.

    SKGE variants compare sphere points by chord distance, TransE compares
    latent vectors by Euclidean distance. The anchor itself is excluded and
    ties are broken by entity id.

    Args:
        model: Trained model
        label: Anchor label (or display name when ``names`` is given)
        k: Number of neighbours, below |E|
        vocab: Vocabulary of the model's dataset
        names: Optional label to display-name map

    Returns:
        Neighbours in ascending distance
    """
    anchor = resolve_entity(label, vocab, names)
    if not 0 < k < model.n_entities:
        raise ValueError(f"k must lie in [1, {model.n_entities - 1}], got {k}")

    points = entity_points(model).astype(np.float64)
    distances = np.linalg.norm(points - points[anchor], axis=1)
    ids = np.arange(model.n_entities)
    order = np.lexsort((ids, distances))
    order = order[order != anchor][:k]

    names = names or {}
    return [
        Neighbor(label=vocab.id_to_entity[i], distance=float(distances[i]),
                 name=names.get(vocab.id_to_entity[i]))
        for i in order.tolist()
    ]
