"""
Checkpoint Module

Binary model checkpoints: one JSON header line followed by the entity and
relation tables as row-major little-endian float32 arrays.
"""

import json
import logging
from pathlib import Path
from typing import Dict

import numpy as np

from .exceptions import CheckpointSizeError, CheckpointVersionError, SphereKGEError
from .geometry import SpherizationParams
from .models import Model, ModelKind, parameter_shapes

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
PAYLOAD_DTYPE = np.dtype("<f4")


def checkpoint_header(model: Model) -> Dict:
    """Header fields describing a model's shapes and spherization settings."""
    sphere = model.spherization
    return {
        "format_version": FORMAT_VERSION,
        "kind": model.kind.value,
        "n_entities": model.n_entities,
        "n_relations": model.n_relations,
        "dim": model.dim,
        "radius": sphere.radius if sphere else None,
        "delta": sphere.delta if sphere else None,
        "epsilon": sphere.epsilon if sphere else None,
        "scale": sphere.scale if sphere else None,
    }


def save_checkpoint(model: Model, path) -> Path:
    """
    Write a model checkpoint, keeping the previous file as ``.bak``.

    Args:
        model: Model to save
        path: Target file

    Returns:
        Path written
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    header = json.dumps(checkpoint_header(model), sort_keys=True).encode("utf-8")
    payload = (
        np.ascontiguousarray(model.entity_latent, dtype=PAYLOAD_DTYPE).tobytes()
        + np.ascontiguousarray(model.relation_vecs, dtype=PAYLOAD_DTYPE).tobytes()
    )

    if path.exists():
        backup = path.with_suffix(path.suffix + ".bak")
        if backup.exists():
            backup.unlink()
        path.rename(backup)

    with open(path, "wb") as f:
        f.write(header + b"\n")
        f.write(payload)

    logger.debug(f"Saved {model.kind.value} checkpoint to {path} ({len(payload)} payload bytes)")
    return path


def load_checkpoint(path) -> Model:
    """
    Read a checkpoint written by :func:`save_checkpoint`.

    Raises:
        CheckpointVersionError: If the header carries another format version
        CheckpointSizeError: If the payload is truncated or too long
        SphereKGEError: If the header cannot be parsed
    """
    path = Path(path)
    with open(path, "rb") as f:
        header_line = f.readline()
        payload = f.read()

    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise SphereKGEError(f"Checkpoint {path} has an unreadable header: {e}") from e

    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(FORMAT_VERSION, version)

    kind = ModelKind.parse(header["kind"])
    n_entities, n_relations, dim = int(header["n_entities"]), int(header["n_relations"]), int(header["dim"])
    entity_shape, relation_shape = parameter_shapes(kind, n_entities, n_relations, dim)
    entity_count = entity_shape[0] * entity_shape[1]
    relation_count = relation_shape[0] * relation_shape[1]

    expected = (entity_count + relation_count) * PAYLOAD_DTYPE.itemsize
    if len(payload) != expected:
        raise CheckpointSizeError(expected, len(payload))

    values = np.frombuffer(payload, dtype=PAYLOAD_DTYPE)
    entity_latent = values[:entity_count].reshape(entity_shape).astype(np.float32)
    relation_vecs = values[entity_count:].reshape(relation_shape).astype(np.float32)

    spherization = None
    if kind.spherical:
        spherization = SpherizationParams(
            dim=dim,
            radius=float(header["radius"]),
            scale=float(header["scale"]),
            delta=float(header["delta"]),
            epsilon=float(header["epsilon"]),
        )

    logger.debug(f"Loaded {kind.value} checkpoint from {path}")
    return Model(kind=kind, entity_latent=entity_latent, relation_vecs=relation_vecs,
                 dim=dim, spherization=spherization)
