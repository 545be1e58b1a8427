"""
Shared fixtures for the Sphere KGE tests.
"""

import os
import sys
from pathlib import Path

import numpy as np
import pytest

# Add the package to the path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from sphere_kge.data import EncodedSplit, build_filter_index


TOY_TRAIN = [
    ("alice", "knows", "bob"),
    ("bob", "knows", "carol"),
    ("carol", "knows", "dave"),
    ("alice", "likes", "pizza"),
    ("bob", "likes", "pizza"),
    ("carol", "likes", "sushi"),
    ("dave", "likes", "sushi"),
    ("alice", "lives_in", "paris"),
    ("bob", "lives_in", "paris"),
    ("carol", "lives_in", "rome"),
    ("pizza", "from", "rome"),
    ("sushi", "from", "tokyo"),
]
TOY_VALID = [
    ("dave", "lives_in", "tokyo"),
    ("dave", "knows", "alice"),
]
TOY_TEST = [
    ("alice", "likes", "sushi"),
    ("bob", "knows", "dave"),
    ("carol", "lives_in", "paris"),
]


def write_triples(path: Path, triples) -> Path:
    path.write_text("".join(f"{h}\t{r}\t{t}\n" for h, r, t in triples), encoding="utf-8")
    return path


@pytest.fixture
def toy_dir(tmp_path):
    """Directory with train/valid/test files of a small social graph."""
    directory = tmp_path / "toy"
    directory.mkdir()
    write_triples(directory / "train.txt", TOY_TRAIN)
    write_triples(directory / "valid.txt", TOY_VALID)
    write_triples(directory / "test.txt", TOY_TEST)
    return directory


def random_kg(rng: np.random.Generator, n_entities: int, n_relations: int, n_triples: int):
    """Distinct random id triples as an EncodedSplit plus its filter index."""
    seen = set()
    while len(seen) < n_triples:
        seen.add((int(rng.integers(n_entities)), int(rng.integers(n_relations)), int(rng.integers(n_entities))))
    split = EncodedSplit(np.array(sorted(seen), dtype=np.int64), name="random")
    return split, build_filter_index(split)


def memorization_kg(n_triples: int = 20, n_relations: int = 4) -> EncodedSplit:
    """Each triple links its own head to its own tail, so every fact can be stored independently."""
    triples = [(i, i % n_relations, n_triples + i) for i in range(n_triples)]
    return EncodedSplit(np.array(triples, dtype=np.int64), name="train")
