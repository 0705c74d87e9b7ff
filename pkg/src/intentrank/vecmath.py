"""Unit-norm embedding vectors: normalization, cosine similarity, query fusion.

Embeddings are plain float64 numpy arrays kept at unit L2 norm. All stored
vectors pass through :func:`l2_normalize` at ingest, so downstream cosine
computations reduce to dot products.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import DimensionError, EmptyQueryError, NormalizationError

# Unit vectors re-entering l2_normalize are returned unchanged so that
# serialize/load cycles are bit-stable; one normalization leaves the norm
# within a few ulps of 1, far inside this band.
_ALREADY_UNIT_TOL = 1e-12

NORM_TOL = 1e-6


def l2_normalize(values: Sequence[float] | np.ndarray) -> np.ndarray:
    """Return ``values`` scaled to unit L2 norm as a read-only float64 array.

    Raises NormalizationError for empty, non-finite, or zero-norm input.
    """
    vec = np.asarray(values, dtype=np.float64)
    if vec.ndim != 1 or vec.size == 0:
        raise NormalizationError(f"expected a non-empty 1-d vector, got shape {vec.shape}")
    if not np.all(np.isfinite(vec)):
        raise NormalizationError("vector contains NaN or Inf")
    norm = float(np.linalg.norm(vec))
    if norm <= 0.0:
        raise NormalizationError("cannot normalize a zero vector")
    if abs(norm - 1.0) > _ALREADY_UNIT_TOL:
        vec = vec / norm
    out = np.array(vec, dtype=np.float64)
    out.flags.writeable = False
    return out


def ensure_embedding(values: Sequence[float] | np.ndarray, dim: int | None = None) -> np.ndarray:
    """Validate an already-normalized embedding: finite, unit norm, optional dim."""
    vec = np.asarray(values, dtype=np.float64)
    if vec.ndim != 1 or vec.size == 0:
        raise DimensionError(f"expected a non-empty 1-d vector, got shape {vec.shape}")
    if dim is not None and vec.size != dim:
        raise DimensionError(f"embedding has dim {vec.size}, expected {dim}")
    if not np.all(np.isfinite(vec)):
        raise NormalizationError("embedding contains NaN or Inf")
    norm = float(np.linalg.norm(vec))
    if abs(norm - 1.0) > NORM_TOL:
        raise NormalizationError(f"embedding norm {norm!r} is not 1 within {NORM_TOL}")
    out = np.array(vec, dtype=np.float64)
    out.flags.writeable = False
    return out


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity of two unit vectors, clamped to [-1, 1].

    The clamp guards against floating-point accumulation pushing the dot
    product a few ulps outside the valid range.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.clip(np.dot(a, b), -1.0, 1.0))


def fuse_query(
    text_embedding: np.ndarray | None,
    image_embedding: np.ndarray | None,
    alpha: float,
) -> np.ndarray:
    """Fuse text and reference-image embeddings into one unit query vector.

    Both present: normalize ``alpha * text + (1 - alpha) * image``. A single
    modality passes through untouched (alpha is ignored). The convex
    combination is re-normalized; cosine scoring is scale-invariant, so this
    only restores the unit-norm storage invariant.
    """
    if text_embedding is None and image_embedding is None:
        raise EmptyQueryError("query carries neither a text nor an image embedding")
    if image_embedding is None:
        return l2_normalize(text_embedding)
    if text_embedding is None:
        return l2_normalize(image_embedding)
    text = np.asarray(text_embedding, dtype=np.float64)
    image = np.asarray(image_embedding, dtype=np.float64)
    if text.shape != image.shape:
        raise DimensionError(f"dimension mismatch: {text.shape} vs {image.shape}")
    return l2_normalize(alpha * text + (1.0 - alpha) * image)
