"""
Sphere Geometry Module

Spherization map from latent vectors to points on a radius-R hypersphere,
the ambient-space projection back onto that sphere, chord distance, and the
hand-derived backward pass of each. All functions work on the last axis, so
single vectors of shape (D,) and batches of shape (N, D) are both accepted.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np
from scipy.special import expit

from .exceptions import DegenerateProjectionError, DimensionMismatchError, NonFiniteInputError

logger = logging.getLogger(__name__)

DEFAULT_RADIUS = 1.0
DEFAULT_SCALE = 1.0
DEFAULT_DELTA = 1e-4
DEFAULT_EPSILON = 1e-9


@dataclass
class SpherizationParams:
    """
    Settings of the spherization map.

    Args:
        dim: Latent dimension D; points live in D+1 ambient dimensions
        radius: Sphere radius R
        scale: Sigmoid input scale s (learned only by the learnable-scale variant)
        delta: Angle margin keeping every angle inside (delta, pi/2 - delta)
        epsilon: Projection stabilizer
    """

    dim: int
    radius: float = DEFAULT_RADIUS
    scale: float = DEFAULT_SCALE
    delta: float = DEFAULT_DELTA
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        if int(self.dim) < 1:
            raise ValueError(f"Spherization dimension must be >= 1, got {self.dim}")
        if not self.radius > 0:
            raise ValueError(f"Radius must be positive, got {self.radius}")
        if not self.scale > 0:
            raise ValueError(f"Scale must be positive, got {self.scale}")
        if not 0 < self.delta < math.pi / 4:
            raise ValueError(f"Angle margin must lie in (0, pi/4), got {self.delta}")
        if not self.epsilon > 0:
            raise ValueError(f"Epsilon must be positive, got {self.epsilon}")
        self.dim = int(self.dim)

    @property
    def ambient_dim(self) -> int:
        return self.dim + 1


@dataclass
class SpherizeCache:
    """Forward-pass intermediates needed by :func:`spherize_backward`."""

    v: np.ndarray
    sigmoid: np.ndarray
    sin: np.ndarray
    cos: np.ndarray
    prefix: np.ndarray
    coords: np.ndarray
    radius: float
    scale: float
    delta: float


def _float_array(x) -> np.ndarray:
    array = np.asarray(x)
    if not np.issubdtype(array.dtype, np.floating):
        array = array.astype(np.float64)
    return array


def angles(v, params: SpherizationParams) -> np.ndarray:
    """Angles theta_i = delta + (pi/2 - 2 delta) * sigmoid(s * v_i)."""
    v = _float_array(v)
    span = math.pi / 2 - 2 * params.delta
    return params.delta + span * expit(params.scale * v)


def spherize_forward(v, params: SpherizationParams) -> Tuple[np.ndarray, SpherizeCache]:
    """
    Map latent vectors onto the radius-R sphere in the positive orthant.

    x_1 = R cos(theta_1), x_k = R (prod_{j<k} sin theta_j) cos theta_k for
    k = 2..D, and x_{D+1} = R prod_j sin theta_j.

    Args:
        v: Latent vectors, shape (..., D)
        params: Spherization settings

    Returns:
        Points of shape (..., D+1) and the cache for the backward pass

    Raises:
        DimensionMismatchError: If the last axis is not D
        NonFiniteInputError: If v holds NaN or infinity
    """
    v = _float_array(v)
    if v.shape[-1] != params.dim:
        raise DimensionMismatchError(params.dim, v.shape[-1], "latent vector")
    if not np.all(np.isfinite(v)):
        raise NonFiniteInputError("Spherization input contains non-finite values")

    span = math.pi / 2 - 2 * params.delta
    sig = expit(params.scale * v)
    theta = params.delta + span * sig
    sin = np.sin(theta)
    cos = np.cos(theta)

    prefix = np.ones(v.shape[:-1] + (params.dim + 1,), dtype=v.dtype)
    prefix[..., 1:] = np.cumprod(sin, axis=-1)

    coords = np.empty_like(prefix)
    coords[..., :-1] = params.radius * prefix[..., :-1] * cos
    coords[..., -1] = params.radius * prefix[..., -1]

    cache = SpherizeCache(
        v=v, sigmoid=sig, sin=sin, cos=cos, prefix=prefix, coords=coords,
        radius=params.radius, scale=params.scale, delta=params.delta,
    )
    return coords, cache


def spherize_backward(cache: SpherizeCache, grad_out) -> Tuple[np.ndarray, np.ndarray]:
    """
    Pull an upstream gradient on the sphere points back to the latent vectors.

    Args:
        cache: Cache from :func:`spherize_forward`
        grad_out: Gradient with respect to the points, shape (..., D+1)

    Returns:
        (grad_v of shape (..., D), grad_s of shape (...)); grad_s is the
        gradient with respect to the scale for each vector

    Raises:
        DimensionMismatchError: If grad_out does not match the cached points
    """
    grad_out = np.asarray(grad_out, dtype=cache.coords.dtype)
    if grad_out.shape != cache.coords.shape:
        raise DimensionMismatchError(cache.coords.shape, grad_out.shape, "spherize upstream gradient")

    # tail[k] = sum_{j >= k} g_j x_j; coordinate k > i depends on theta_i through sin(theta_i)
    weighted = grad_out * cache.coords
    tail = np.cumsum(weighted[..., ::-1], axis=-1)[..., ::-1]
    later = tail[..., 1:]

    grad_theta = (
        -cache.radius * cache.prefix[..., :-1] * cache.sin * grad_out[..., :-1]
        + (cache.cos / cache.sin) * later
    )
    span = math.pi / 2 - 2 * cache.delta
    grad_z = grad_theta * span * cache.sigmoid * (1.0 - cache.sigmoid)

    grad_v = grad_z * cache.scale
    grad_s = np.sum(grad_z * cache.v, axis=-1)
    return grad_v, grad_s


def project_to_sphere(p, radius: float = DEFAULT_RADIUS, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """
    Rescale ambient points onto the sphere: R * p / (||p|| + epsilon).

    The zero vector maps to itself.
    """
    p = _float_array(p)
    norm = np.linalg.norm(p, axis=-1, keepdims=True)
    return radius * p / (norm + epsilon)


def project_backward(p, radius: float, epsilon: float, grad_out) -> np.ndarray:
    """
    Gradient of :func:`project_to_sphere` with respect to its input.

    Raises:
        DegenerateProjectionError: If any input point is the zero vector
        DimensionMismatchError: If grad_out and p differ in shape
    """
    p = _float_array(p)
    grad_out = np.asarray(grad_out, dtype=p.dtype)
    if grad_out.shape != p.shape:
        raise DimensionMismatchError(p.shape, grad_out.shape, "projection upstream gradient")

    norm = np.linalg.norm(p, axis=-1, keepdims=True)
    if np.any(norm == 0):
        raise DegenerateProjectionError("Projection gradient is undefined at the zero vector")

    denom = norm + epsilon
    radial = np.sum(p * grad_out, axis=-1, keepdims=True)
    return (radius / denom) * grad_out - (radius / (denom * denom * norm)) * radial * p


def chord_distance(a, b) -> np.ndarray:
    """Straight-line distance ||a - b|| along the last axis."""
    a = _float_array(a)
    b = _float_array(b)
    if a.shape[-1] != b.shape[-1]:
        raise DimensionMismatchError(a.shape[-1], b.shape[-1], "point")
    return np.linalg.norm(a - b, axis=-1)


def chord_backward(a, b, grad_out) -> Tuple[np.ndarray, np.ndarray]:
    """
    Gradients of :func:`chord_distance` with respect to both points.

    At a == b the subgradient 0 is returned.
    """
    a = _float_array(a)
    b = _float_array(b)
    diff = a - b
    dist = np.linalg.norm(diff, axis=-1, keepdims=True)
    safe = np.where(dist > 0, dist, 1.0)
    unit = np.where(dist > 0, diff / safe, 0.0)
    grad_a = np.asarray(grad_out, dtype=diff.dtype)[..., None] * unit
    return grad_a, -grad_a


def finite_diff_check(func: Callable[[np.ndarray], Tuple[float, np.ndarray]], x,
                      h: float = 1e-5) -> float:
    """
    Compare an analytic gradient against central finite differences.

    Args:
        func: Maps a point to (scalar value, analytic gradient of the same shape)
        x: Point to check, evaluated in float64
        h: Step size

    Returns:
        Max over coordinates of |analytic - numeric| / max(1, |analytic|)
    """
    x = np.array(x, dtype=np.float64)
    _, analytic = func(x.copy())
    analytic = np.asarray(analytic, dtype=np.float64)
    if analytic.shape != x.shape:
        raise DimensionMismatchError(x.shape, analytic.shape, "analytic gradient")

    numeric = np.zeros_like(x)
    for index in np.ndindex(x.shape):
        original = x[index]
        x[index] = original + h
        plus, _ = func(x.copy())
        x[index] = original - h
        minus, _ = func(x.copy())
        x[index] = original
        numeric[index] = (float(plus) - float(minus)) / (2 * h)

    error = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))
    worst = float(np.max(error)) if error.size else 0.0
    logger.debug(f"Finite-difference check over {x.size} coordinates: max relative error {worst:.3e}")
    return worst
