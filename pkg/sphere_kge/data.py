"""
Knowledge Graph Data Module

Reads tab-separated triple files, builds vocabularies and integer encodings,
indexes every known triple for filtered ranking, and derives dataset
statistics and relation cardinality categories.
"""

import logging
import os
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .exceptions import (
    DatasetFileError,
    DuplicateTripleError,
    EmptyDatasetError,
    MalformedTripleError,
    UnknownLabelError,
)

logger = logging.getLogger(__name__)

SPLIT_NAMES = ("train", "valid", "test")
CATEGORY_THRESHOLD = 1.5


class RawTriple(NamedTuple):
    """A (head, relation, tail) fact as it appears in the split file."""

    head: str
    relation: str
    tail: str


class RelationCategory(str, Enum):
    """Relation cardinality category from average heads/tails per pair."""

    ONE_TO_ONE = "1-to-1"
    ONE_TO_N = "1-to-N"
    N_TO_ONE = "N-to-1"
    N_TO_N = "N-to-N"


@dataclass(frozen=True)
class Vocab:
    """Bijective label/id maps for entities and relations."""

    entity_to_id: Mapping[str, int]
    relation_to_id: Mapping[str, int]
    id_to_entity: Tuple[str, ...]
    id_to_relation: Tuple[str, ...]

    @property
    def n_entities(self) -> int:
        return len(self.id_to_entity)

    @property
    def n_relations(self) -> int:
        return len(self.id_to_relation)

    def entity_id(self, label: str) -> int:
        try:
            return self.entity_to_id[label]
        except KeyError:
            raise UnknownLabelError(label) from None


@dataclass(frozen=True)
class EncodedSplit:
    """Integer triples of one split, shape (n, 3) in (head, relation, tail) order."""

    triples: np.ndarray
    name: str = ""

    def __post_init__(self):
        array = np.asarray(self.triples, dtype=np.int64).reshape(-1, 3)
        array.setflags(write=False)
        object.__setattr__(self, "triples", array)

    def __len__(self) -> int:
        return int(self.triples.shape[0])

    @property
    def heads(self) -> np.ndarray:
        return self.triples[:, 0]

    @property
    def relations(self) -> np.ndarray:
        return self.triples[:, 1]

    @property
    def tails(self) -> np.ndarray:
        return self.triples[:, 2]

    def subset(self, indices: Sequence[int]) -> "EncodedSplit":
        return EncodedSplit(self.triples[np.asarray(indices, dtype=np.int64)], name=self.name)


@dataclass(frozen=True)
class FilterIndex:
    """Every known-true triple, indexed by (h, r) and by (r, t)."""

    known_tails: Mapping[Tuple[int, int], FrozenSet[int]]
    known_heads: Mapping[Tuple[int, int], FrozenSet[int]]
    n_triples: int

    def tails_of(self, head: int, relation: int) -> FrozenSet[int]:
        return self.known_tails.get((head, relation), frozenset())

    def heads_of(self, relation: int, tail: int) -> FrozenSet[int]:
        return self.known_heads.get((relation, tail), frozenset())

    def contains(self, head: int, relation: int, tail: int) -> bool:
        return tail in self.tails_of(head, relation)


@dataclass(frozen=True)
class StatsReport:
    """Entity, relation and per-split triple counts."""

    entities: int
    relations: int
    train: int
    valid: int
    test: int
    categories: Dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> Dict:
        report = {
            "entities": self.entities,
            "relations": self.relations,
            "train": self.train,
            "valid": self.valid,
            "test": self.test,
        }
        if self.categories:
            report["categories"] = dict(self.categories)
        return report

    def to_table(self) -> str:
        rows = [
            ("Entities", self.entities),
            ("Relations", self.relations),
            ("Train", self.train),
            ("Valid", self.valid),
            ("Test", self.test),
        ]
        rows.extend((f"Relations {name}", count) for name, count in self.categories.items())
        width = max(len(name) for name, _ in rows)
        value_width = max(len(f"{value:,}") for _, value in rows)
        return "\n".join(f"{name:<{width}}  {value:>{value_width},}" for name, value in rows)


@dataclass(frozen=True)
class TripleStore:
    """A loaded dataset: shared vocabulary, three encoded splits and the filter index."""

    vocab: Vocab
    train: EncodedSplit
    valid: EncodedSplit
    test: EncodedSplit
    filter_index: FilterIndex
    source: str = ""

    def split(self, name: str) -> EncodedSplit:
        if name not in SPLIT_NAMES:
            raise ValueError(f"Unknown split '{name}', expected one of {', '.join(SPLIT_NAMES)}")
        return getattr(self, name)


def load_triples(path) -> List[RawTriple]:
    """
    Read a UTF-8 triple file with one tab-separated (head, relation, tail) per line.

    Blank lines are skipped. Labels are trimmed of surrounding whitespace.

    Args:
        path: File to read

    Returns:
        Triples in file order

    Raises:
        DatasetFileError: If the file cannot be opened
        MalformedTripleError: If a line does not have exactly three non-empty fields
    """
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = f.read().splitlines()
    except FileNotFoundError:
        raise DatasetFileError(path) from None
    except (OSError, UnicodeDecodeError) as e:
        raise DatasetFileError(path, str(e)) from e

    triples = []
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise MalformedTripleError(path, line_no, len(fields))
        head, relation, tail = (value.strip() for value in fields)
        if not (head and relation and tail):
            raise MalformedTripleError(path, line_no, len(fields), "empty label")
        triples.append(RawTriple(head, relation, tail))

    logger.debug(f"Read {len(triples)} triples from {path}")
    return triples


def build_vocab(splits: Iterable[Sequence[RawTriple]]) -> Vocab:
    """
    Assign dense ids to every entity and relation label, in order of first appearance.

    Args:
        splits: Raw triples of every split (train, valid, test)

    Returns:
        Vocabulary covering all labels

    Raises:
        EmptyDatasetError: If no triple is present
    """
    entities: Dict[str, int] = {}
    relations: Dict[str, int] = {}
    seen = 0
    for split in splits:
        for head, relation, tail in split:
            seen += 1
            entities.setdefault(head, len(entities))
            relations.setdefault(relation, len(relations))
            entities.setdefault(tail, len(entities))

    if seen == 0:
        raise EmptyDatasetError("Cannot build a vocabulary from zero triples")

    return Vocab(
        entity_to_id=entities,
        relation_to_id=relations,
        id_to_entity=tuple(entities),
        id_to_relation=tuple(relations),
    )


def encode(raw: Sequence[RawTriple], vocab: Vocab, name: str = "") -> EncodedSplit:
    """
    Map labelled triples to ids.

    Raises:
        UnknownLabelError: If a label is missing from the vocabulary
        DuplicateTripleError: If a triple occurs twice in ``raw``
    """
    encoded = np.empty((len(raw), 3), dtype=np.int64)
    first_seen: Dict[Tuple[int, int, int], int] = {}

    for position, (head, relation, tail) in enumerate(raw):
        try:
            triple = (
                vocab.entity_to_id[head],
                vocab.relation_to_id[relation],
                vocab.entity_to_id[tail],
            )
        except KeyError as e:
            raise UnknownLabelError(e.args[0], position) from None

        if triple in first_seen:
            raise DuplicateTripleError(RawTriple(head, relation, tail), first_seen[triple], position)
        first_seen[triple] = position
        encoded[position] = triple

    return EncodedSplit(encoded, name=name)


def decode(split: EncodedSplit, vocab: Vocab) -> List[RawTriple]:
    """Inverse of :func:`encode`."""
    return [
        RawTriple(vocab.id_to_entity[h], vocab.id_to_relation[r], vocab.id_to_entity[t])
        for h, r, t in split.triples.tolist()
    ]


def build_filter_index(*splits: EncodedSplit) -> FilterIndex:
    """
    Index every triple of the given splits for filtered ranking.

    Args:
        *splits: Encoded splits sharing one vocabulary (train, valid, test)

    Returns:
        Filter index over their union
    """
    tails = defaultdict(set)
    heads = defaultdict(set)
    distinct = set()
    for split in splits:
        for h, r, t in split.triples.tolist():
            tails[(h, r)].add(t)
            heads[(r, t)].add(h)
            distinct.add((h, r, t))

    return FilterIndex(
        known_tails={key: frozenset(values) for key, values in tails.items()},
        known_heads={key: frozenset(values) for key, values in heads.items()},
        n_triples=len(distinct),
    )


def dataset_stats(splits: Mapping[str, EncodedSplit], vocab: Vocab,
                  categories: Optional[Mapping[int, RelationCategory]] = None) -> StatsReport:
    """
    Count entities, relations and triples per split.

    Args:
        splits: Split name to encoded split; missing splits count as 0
        vocab: Shared vocabulary
        categories: Optional relation categories to tally

    Returns:
        Statistics report
    """
    counts = {}
    if categories:
        for category in RelationCategory:
            counts[category.value] = sum(1 for value in categories.values() if value == category)

    return StatsReport(
        entities=vocab.n_entities,
        relations=vocab.n_relations,
        train=len(splits["train"]) if "train" in splits else 0,
        valid=len(splits["valid"]) if "valid" in splits else 0,
        test=len(splits["test"]) if "test" in splits else 0,
        categories=counts,
    )


def categorize_relations(train: EncodedSplit, n_relations: Optional[int] = None,
                         threshold: float = CATEGORY_THRESHOLD) -> Dict[int, RelationCategory]:
    """
    Label each relation 1-to-1, 1-to-N, N-to-1 or N-to-N from the training split.

    tph is the mean number of distinct tails per (h, r) pair and hpt the mean
    number of distinct heads per (r, t) pair; a side counts as "N" when its
    mean reaches ``threshold``.

    Args:
        train: Training triples
        n_relations: Vocabulary size; relations without training triples get 1-to-1
        threshold: Cardinality cut-off

    Returns:
        Relation id to category
    """
    if len(train) == 0:
        raise EmptyDatasetError("Cannot categorize relations of an empty training split")

    tails_per_pair: Dict[int, Dict[int, set]] = defaultdict(lambda: defaultdict(set))
    heads_per_pair: Dict[int, Dict[int, set]] = defaultdict(lambda: defaultdict(set))
    for h, r, t in train.triples.tolist():
        tails_per_pair[r][h].add(t)
        heads_per_pair[r][t].add(h)

    categories = {}
    for relation in sorted(tails_per_pair):
        tph = np.mean([len(v) for v in tails_per_pair[relation].values()])
        hpt = np.mean([len(v) for v in heads_per_pair[relation].values()])
        many_tails = tph >= threshold
        many_heads = hpt >= threshold
        if not many_tails and not many_heads:
            categories[relation] = RelationCategory.ONE_TO_ONE
        elif many_tails and not many_heads:
            categories[relation] = RelationCategory.ONE_TO_N
        elif not many_tails and many_heads:
            categories[relation] = RelationCategory.N_TO_ONE
        else:
            categories[relation] = RelationCategory.N_TO_N

    if n_relations is not None:
        missing = [r for r in range(n_relations) if r not in categories]
        if missing:
            logger.warning(f"{len(missing)} relation(s) have no training triples; labelled {RelationCategory.ONE_TO_ONE.value}")
        for relation in missing:
            categories[relation] = RelationCategory.ONE_TO_ONE

    return dict(sorted(categories.items()))


def load_entity_names(path) -> Dict[str, str]:
    """
    Read an optional ``label<TAB>display name`` file.

    Lines without a tab are ignored; later lines win on repeated labels.
    """
    path = Path(path)
    names = {}
    try:
        with open(path, "r", encoding="utf-8") as f:
            for line in f:
                label, sep, name = line.rstrip("\n").partition("\t")
                if sep and label.strip() and name.strip():
                    names[label.strip()] = name.strip()
    except FileNotFoundError:
        raise DatasetFileError(path) from None
    logger.debug(f"Read {len(names)} entity names from {path}")
    return names


def resolve_data_dir(data_dir) -> Path:
    """Resolve a relative dataset directory against ``SPHERE_KGE_DATA_ROOT`` when it is set."""
    path = Path(data_dir)
    root = os.getenv("SPHERE_KGE_DATA_ROOT")
    if not path.is_absolute() and root and not path.exists():
        path = Path(root) / path
    return path


def load_dataset(data_dir, train_file: str = "train.txt", valid_file: str = "valid.txt",
                 test_file: str = "test.txt") -> TripleStore:
    """
    Load the three splits of a dataset directory into a :class:`TripleStore`.

    Args:
        data_dir: Directory holding the split files
        train_file: Training split file name
        valid_file: Validation split file name
        test_file: Test split file name

    Returns:
        Loaded dataset
    """
    directory = resolve_data_dir(data_dir)
    paths = {
        "train": directory / train_file,
        "valid": directory / valid_file,
        "test": directory / test_file,
    }
    for path in paths.values():
        if not path.is_file():
            raise DatasetFileError(path)

    raw = {name: load_triples(path) for name, path in paths.items()}
    vocab = build_vocab([raw[name] for name in SPLIT_NAMES])
    encoded = {name: encode(raw[name], vocab, name=name) for name in SPLIT_NAMES}
    filter_index = build_filter_index(*(encoded[name] for name in SPLIT_NAMES))

    logger.info(
        f"Loaded {directory}: {vocab.n_entities} entities, {vocab.n_relations} relations, "
        f"{len(encoded['train'])}/{len(encoded['valid'])}/{len(encoded['test'])} train/valid/test triples"
    )
    return TripleStore(
        vocab=vocab,
        train=encoded["train"],
        valid=encoded["valid"],
        test=encoded["test"],
        filter_index=filter_index,
        source=str(directory),
    )
