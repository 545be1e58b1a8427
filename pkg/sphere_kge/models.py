"""
Models Module

Parameter containers and scoring functions for TransE, SKGE and the two
SKGE ablations (fixed L2 normalisation, learnable spherization scale),
including all-entity scoring for ranking and the backward pass used by the
trainer.
"""

import dataclasses
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from .exceptions import DimensionMismatchError, EntityIndexError, ModelKindError
from .geometry import (
    DEFAULT_DELTA,
    DEFAULT_EPSILON,
    DEFAULT_RADIUS,
    DEFAULT_SCALE,
    SpherizationParams,
    SpherizeCache,
    chord_backward,
    chord_distance,
    project_backward,
    project_to_sphere,
    spherize_backward,
    spherize_forward,
)

logger = logging.getLogger(__name__)


class ModelKind(str, Enum):
    """Which scoring path and parameter shapes a model uses."""

    TRANSE = "transe"
    SKGE = "skge"
    SKGE_FIXED_NORM = "skge-fixednorm"
    SKGE_LEARNABLE_SCALE = "skge-learnablescale"

    @classmethod
    def parse(cls, value) -> "ModelKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        for kind in cls:
            if kind.value == key:
                return kind
        raise ValueError(f"Unknown model kind '{value}', expected one of {', '.join(k.value for k in cls)}")

    @property
    def spherical(self) -> bool:
        return self is not ModelKind.TRANSE


@dataclass
class Model:
    """
    Embedding parameters of one model.

    ``entity_latent`` holds the TransE entity vectors, or the latent vectors
    that the SKGE variants map onto the sphere. ``relation_vecs`` holds
    translations in latent space for TransE and in ambient (D+1) space for
    the SKGE variants.
    """

    kind: ModelKind
    entity_latent: np.ndarray
    relation_vecs: np.ndarray
    dim: int
    spherization: Optional[SpherizationParams] = None

    @property
    def n_entities(self) -> int:
        return int(self.entity_latent.shape[0])

    @property
    def n_relations(self) -> int:
        return int(self.relation_vecs.shape[0])

    @property
    def radius(self) -> float:
        return self.spherization.radius if self.spherization else math.inf

    def copy(self) -> "Model":
        return Model(
            kind=self.kind,
            entity_latent=self.entity_latent.copy(),
            relation_vecs=self.relation_vecs.copy(),
            dim=self.dim,
            spherization=dataclasses.replace(self.spherization) if self.spherization else None,
        )


@dataclass
class ParameterGradients:
    """Accumulated loss gradients for every trainable parameter."""

    entity: np.ndarray
    relation: np.ndarray
    scale: float = 0.0


def parameter_shapes(kind: ModelKind, n_entities: int, n_relations: int, dim: int) -> Tuple[Tuple[int, int], Tuple[int, int]]:
    """Entity and relation table shapes for a model kind."""
    if kind is ModelKind.TRANSE:
        return (n_entities, dim), (n_relations, dim)
    if kind is ModelKind.SKGE_FIXED_NORM:
        # L2 normalisation keeps the ambient width, so latents already live in D+1
        return (n_entities, dim + 1), (n_relations, dim + 1)
    return (n_entities, dim), (n_relations, dim + 1)


def init_model(kind, n_entities: int, n_relations: int, dim: int, seed: int = 0,
               radius: float = DEFAULT_RADIUS, scale: float = DEFAULT_SCALE,
               delta: float = DEFAULT_DELTA, epsilon: float = DEFAULT_EPSILON,
               dtype=np.float32) -> Model:
    """
    Create a model with parameters drawn i.i.d. from U[-6/sqrt(D), 6/sqrt(D)].

    Args:
        kind: Model kind (or its name)
        n_entities: Number of entities
        n_relations: Number of relations
        dim: Latent dimension D
        seed: Seed of the parameter generator
        radius: Sphere radius (SKGE variants)
        scale: Initial spherization scale (SKGE variants)
        delta: Angle margin (SKGE variants)
        epsilon: Projection stabilizer (SKGE variants)
        dtype: Parameter precision

    Returns:
        Freshly initialised model
    """
    kind = ModelKind.parse(kind)
    if n_entities < 1 or n_relations < 1 or dim < 1:
        raise ValueError(f"Model sizes must be positive, got |E|={n_entities}, |R|={n_relations}, D={dim}")

    rng = np.random.default_rng(seed)
    bound = 6.0 / math.sqrt(dim)
    entity_shape, relation_shape = parameter_shapes(kind, n_entities, n_relations, dim)
    entity_latent = rng.uniform(-bound, bound, size=entity_shape).astype(dtype)
    relation_vecs = rng.uniform(-bound, bound, size=relation_shape).astype(dtype)

    spherization = None
    if kind.spherical:
        spherization = SpherizationParams(dim=dim, radius=radius, scale=scale, delta=delta, epsilon=epsilon)

    logger.debug(f"Initialised {kind.value} model: |E|={n_entities}, |R|={n_relations}, D={dim}, seed={seed}")
    return Model(kind=kind, entity_latent=entity_latent, relation_vecs=relation_vecs,
                 dim=dim, spherization=spherization)


def fixednorm_map(v, radius: float = DEFAULT_RADIUS, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """Plain L2 normalisation onto the sphere, used by the fixed-norm ablation."""
    return project_to_sphere(v, radius, epsilon)


def _require_spherical(model: Model) -> None:
    if not model.kind.spherical:
        raise ModelKindError("an SKGE variant", model.kind.value)


def _require_transe(model: Model) -> None:
    if model.kind is not ModelKind.TRANSE:
        raise ModelKindError(ModelKind.TRANSE.value, model.kind.value)


def _check_index(index, limit: int, what: str) -> np.ndarray:
    index = np.asarray(index, dtype=np.int64)
    if index.size:
        low, high = int(index.min()), int(index.max())
        if low < 0:
            raise EntityIndexError(low, limit, what)
        if high >= limit:
            raise EntityIndexError(high, limit, what)
    return index


def _check_triples(model: Model, h, r, t) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    h = _check_index(h, model.n_entities, "entity")
    r = _check_index(r, model.n_relations, "relation")
    t = _check_index(t, model.n_entities, "entity")
    if not (h.shape == r.shape == t.shape):
        raise DimensionMismatchError(h.shape, (r.shape, t.shape), "index vectors")
    return h, r, t


def embed_entities(model: Model, index) -> np.ndarray:
    """Entity representations used for scoring: sphere points for SKGE variants, latent rows for TransE."""
    index = _check_index(index, model.n_entities, "entity")
    latent = model.entity_latent[index]
    if model.kind is ModelKind.TRANSE:
        return latent
    if model.kind is ModelKind.SKGE_FIXED_NORM:
        return fixednorm_map(latent, model.spherization.radius, model.spherization.epsilon)
    points, _ = spherize_forward(latent, model.spherization)
    return points


def entity_points(model: Model) -> np.ndarray:
    """Representations of every entity, computed once for ranking and neighbourhoods."""
    return embed_entities(model, np.arange(model.n_entities))


def entity_norms(model: Model) -> np.ndarray:
    """L2 norm of every latent entity row."""
    return np.linalg.norm(model.entity_latent, axis=1)


def transe_score(model: Model, h, r, t) -> np.ndarray:
    """||e_h + r_r - e_t|| for each triple."""
    _require_transe(model)
    h, r, t = _check_triples(model, h, r, t)
    diff = model.entity_latent[h] + model.relation_vecs[r] - model.entity_latent[t]
    return np.linalg.norm(diff, axis=-1)


def skge_score(model: Model, h, r, t) -> np.ndarray:
    """
    Translate-then-project score for each triple.

    The head point is translated by the ambient relation vector, projected
    back onto the sphere, and compared with the tail point by chord distance.
    """
    _require_spherical(model)
    h, r, t = _check_triples(model, h, r, t)
    sphere = model.spherization
    head = embed_entities(model, h)
    tail = embed_entities(model, t)
    predicted = project_to_sphere(head + model.relation_vecs[r], sphere.radius, sphere.epsilon)
    return chord_distance(predicted, tail)


def score(model: Model, h, r, t) -> np.ndarray:
    """Score triples with the path matching the model kind."""
    if model.kind is ModelKind.TRANSE:
        return transe_score(model, h, r, t)
    return skge_score(model, h, r, t)


def score_all_tails(model: Model, h: int, r: int, points: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Score (h, r, t) for every candidate tail t.

    Args:
        model: Model to score with
        h: Head entity id
        r: Relation id
        points: Optional precomputed :func:`entity_points`

    Returns:
        Scores of shape (|E|,)
    """
    _check_index(h, model.n_entities, "entity")
    _check_index(r, model.n_relations, "relation")
    if points is None:
        points = entity_points(model)

    relation = model.relation_vecs[r]
    if model.kind is ModelKind.TRANSE:
        return np.linalg.norm(points[h] + relation - points, axis=-1)

    sphere = model.spherization
    predicted = project_to_sphere(points[h] + relation, sphere.radius, sphere.epsilon)
    return np.linalg.norm(predicted - points, axis=-1)


def score_all_heads(model: Model, r: int, t: int, points: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Score (h, r, t) for every candidate head h.

    For SKGE variants every candidate is translated and projected on its own,
    as the operator has no closed-form inverse.
    """
    _check_index(r, model.n_relations, "relation")
    _check_index(t, model.n_entities, "entity")
    if points is None:
        points = entity_points(model)

    relation = model.relation_vecs[r]
    if model.kind is ModelKind.TRANSE:
        return np.linalg.norm(points + relation - points[t], axis=-1)

    sphere = model.spherization
    predicted = project_to_sphere(points + relation, sphere.radius, sphere.epsilon)
    return np.linalg.norm(predicted - points[t], axis=-1)


def _embed_with_cache(model: Model, latent: np.ndarray):
    if model.kind is ModelKind.SKGE_FIXED_NORM:
        return fixednorm_map(latent, model.spherization.radius, model.spherization.epsilon), latent
    return spherize_forward(latent, model.spherization)


def _embed_backward(model: Model, cache, grad_points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    if model.kind is ModelKind.SKGE_FIXED_NORM:
        sphere = model.spherization
        grad_v = project_backward(cache, sphere.radius, sphere.epsilon, grad_points)
        return grad_v, np.zeros(grad_v.shape[:-1], dtype=grad_v.dtype)
    assert isinstance(cache, SpherizeCache)
    return spherize_backward(cache, grad_points)


def model_gradients(model: Model, h, r, t, upstream) -> ParameterGradients:
    """
    Backpropagate per-triple score gradients into the parameter tables.

    Repeated indices accumulate additively.

    Args:
        model: Model whose parameters are differentiated
        h, r, t: Index vectors of equal length
        upstream: dLoss/dScore per triple

    Returns:
        Gradients shaped like the parameters
    """
    h, r, t = _check_triples(model, h, r, t)
    upstream = np.asarray(upstream, dtype=model.entity_latent.dtype)
    if upstream.shape != h.shape:
        raise DimensionMismatchError(h.shape, upstream.shape, "upstream gradient")

    grad_entity = np.zeros_like(model.entity_latent)
    grad_relation = np.zeros_like(model.relation_vecs)
    grad_scale = 0.0

    if model.kind is ModelKind.TRANSE:
        diff = model.entity_latent[h] + model.relation_vecs[r] - model.entity_latent[t]
        grad_diff, _ = chord_backward(diff, np.zeros_like(diff), upstream)
        grad_diff = grad_diff.astype(grad_entity.dtype, copy=False)
        np.add.at(grad_entity, h, grad_diff)
        np.add.at(grad_entity, t, -grad_diff)
        np.add.at(grad_relation, r, grad_diff)
        return ParameterGradients(entity=grad_entity, relation=grad_relation)

    sphere = model.spherization
    head, head_cache = _embed_with_cache(model, model.entity_latent[h])
    tail, tail_cache = _embed_with_cache(model, model.entity_latent[t])
    translated = head + model.relation_vecs[r]
    predicted = project_to_sphere(translated, sphere.radius, sphere.epsilon)

    grad_predicted, grad_tail = chord_backward(predicted, tail, upstream)
    grad_translated = project_backward(translated, sphere.radius, sphere.epsilon, grad_predicted)
    grad_head_latent, scale_head = _embed_backward(model, head_cache, grad_translated)
    grad_tail_latent, scale_tail = _embed_backward(model, tail_cache, grad_tail)

    dtype = grad_entity.dtype
    np.add.at(grad_entity, h, grad_head_latent.astype(dtype, copy=False))
    np.add.at(grad_entity, t, grad_tail_latent.astype(dtype, copy=False))
    np.add.at(grad_relation, r, grad_translated.astype(dtype, copy=False))

    if model.kind is ModelKind.SKGE_LEARNABLE_SCALE:
        grad_scale = float(np.sum(scale_head, dtype=np.float64) + np.sum(scale_tail, dtype=np.float64))

    return ParameterGradients(entity=grad_entity, relation=grad_relation, scale=grad_scale)
