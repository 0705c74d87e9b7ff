"""Contrastive candidate scoring, its ablation variants, and the transport baseline.

The score of a region is its best similarity to any positive exemplar minus
a weighted penalty for its best similarity to any negative exemplar. The
``mean`` aggregation variant replaces both max operators with the cosine to
the normalized exemplar mean. The transport baseline distributes each
positive anchor's mass over the candidates through an entropic kernel and
ranks candidates by received mass.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    DimensionError,
    InvalidCostError,
    InvalidStateError,
    MaxIterationsWarning,
)
from .intent import IntentState

AGG_MAX = "max"
AGG_MEAN = "mean"


@dataclass(frozen=True)
class RankerConfig:
    """Scoring knobs: negative penalty weight and exemplar aggregation."""

    negative_weight: float = 1.0
    aggregation: str = AGG_MAX

    def __post_init__(self) -> None:
        if self.negative_weight < 0:
            raise ValueError("negative_weight must be >= 0")
        if self.aggregation not in (AGG_MAX, AGG_MEAN):
            raise ValueError(f"unknown aggregation {self.aggregation!r}")


@dataclass(frozen=True)
class SinkhornConfig:
    epsilon: float = 0.1
    max_iters: int = 500
    tol: float = 1e-6

    def __post_init__(self) -> None:
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be > 0")


@dataclass(frozen=True)
class ScoredRegion:
    region_id: int
    score: float
    s_pos: float
    s_neg: float


def _exemplar_matrix(exemplars: Sequence) -> np.ndarray:
    return np.stack([e.embedding for e in exemplars])


def _aggregate(regions: np.ndarray, exemplars: np.ndarray, aggregation: str) -> np.ndarray:
    """Per-region similarity to an exemplar set, clamped to [-1, 1]."""
    if aggregation == AGG_MAX:
        sims = regions @ exemplars.T
        out = sims.max(axis=1)
    else:
        mean = exemplars.mean(axis=0)
        norm = np.linalg.norm(mean)
        if norm <= 1e-12:
            # Exemplars cancel exactly; an undefined direction carries no signal.
            return np.zeros(regions.shape[0])
        out = regions @ (mean / norm)
    return np.clip(out, -1.0, 1.0)


def _score_terms(
    regions: np.ndarray, state: IntentState, cfg: RankerConfig
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized (score, s_pos, s_neg) for a stacked region matrix."""
    if not state.z_pos:
        raise InvalidStateError("cannot score with an empty positive set")
    s_pos = _aggregate(regions, _exemplar_matrix(state.z_pos), cfg.aggregation)
    if state.z_neg:
        s_neg = _aggregate(regions, _exemplar_matrix(state.z_neg), cfg.aggregation)
    else:
        s_neg = np.zeros(regions.shape[0])
    return s_pos - cfg.negative_weight * s_neg, s_pos, s_neg


def score_region(
    embedding: np.ndarray,
    state: IntentState,
    cfg: RankerConfig,
    region_id: int = -1,
) -> ScoredRegion:
    """Score a single candidate region against the current intent state."""
    regions = np.asarray(embedding, dtype=np.float64)[None, :]
    score, s_pos, s_neg = _score_terms(regions, state, cfg)
    return ScoredRegion(region_id, float(score[0]), float(s_pos[0]), float(s_neg[0]))


def _order(scores: np.ndarray, ids: np.ndarray) -> np.ndarray:
    # Descending score, ties broken by ascending region id.
    return np.lexsort((ids, -scores))


def rank_candidates(
    regions: Sequence[tuple[int, np.ndarray]],
    state: IntentState,
    cfg: RankerConfig,
) -> list[ScoredRegion]:
    """Score every candidate and return them sorted best-first.

    No region is ever dropped; rejected regions stay in the list with their
    penalty applied, and any presentation-level filtering happens elsewhere.
    """
    if not regions:
        raise DimensionError("cannot rank an empty region list")
    ids = np.array([rid for rid, _ in regions], dtype=np.int64)
    matrix = np.stack([np.asarray(emb, dtype=np.float64) for _, emb in regions])
    score, s_pos, s_neg = _score_terms(matrix, state, cfg)
    order = _order(score, ids)
    return [
        ScoredRegion(int(ids[i]), float(score[i]), float(s_pos[i]), float(s_neg[i]))
        for i in order
    ]


def sinkhorn_plan(
    cost: np.ndarray,
    row_marginals: np.ndarray,
    col_marginals: np.ndarray,
    cfg: SinkhornConfig = SinkhornConfig(),
) -> np.ndarray:
    """Entropic-regularized transport plan between two discrete distributions.

    Standard alternating scaling of the kernel exp(-cost/epsilon). Returns a
    non-negative plan whose marginals match the inputs within ``cfg.tol``;
    if the iteration cap is hit first, a MaxIterationsWarning reports the
    final residual and the current plan is returned.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.size == 0:
        raise DimensionError(f"cost must be a non-empty 2-d matrix, got shape {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise InvalidCostError("cost matrix contains non-finite entries")
    a = np.asarray(row_marginals, dtype=np.float64)
    b = np.asarray(col_marginals, dtype=np.float64)
    if a.shape != (cost.shape[0],) or b.shape != (cost.shape[1],):
        raise DimensionError("marginal lengths do not match the cost matrix")
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("marginals must be non-negative")
    if abs(a.sum() - 1.0) > 1e-9 or abs(b.sum() - 1.0) > 1e-9:
        raise ValueError("marginals must each sum to 1")

    # Shift per the global minimum; scaling cancels in the normalized plan
    # but keeps the kernel away from underflow.
    kernel = np.exp(-(cost - cost.min()) / cfg.epsilon)
    u = np.ones(cost.shape[0])
    v = np.ones(cost.shape[1])
    residual = np.inf
    for _ in range(cfg.max_iters):
        u = a / np.maximum(kernel @ v, 1e-300)
        v = b / np.maximum(kernel.T @ u, 1e-300)
        plan = u[:, None] * kernel * v[None, :]
        residual = max(
            float(np.abs(plan.sum(axis=1) - a).max()),
            float(np.abs(plan.sum(axis=0) - b).max()),
        )
        if residual < cfg.tol:
            return plan
    warnings.warn(
        f"sinkhorn stopped at {cfg.max_iters} iterations with marginal residual {residual:.3e}",
        MaxIterationsWarning,
        stacklevel=2,
    )
    return plan


def sinkhorn_cost_matrix(
    region_matrix: np.ndarray, state: IntentState, cfg: RankerConfig
) -> np.ndarray:
    """Anchor-to-region cost: (1 - cosine) plus the weighted negative penalty."""
    positives = _exemplar_matrix(state.z_pos)
    cost = 1.0 - positives @ region_matrix.T
    if state.z_neg:
        negatives = _exemplar_matrix(state.z_neg)
        penalty = (negatives @ region_matrix.T).max(axis=0)
        cost = cost + cfg.negative_weight * penalty[None, :]
    return np.maximum(cost, 0.0)


def sinkhorn_rank(
    regions: Sequence[tuple[int, np.ndarray]],
    state: IntentState,
    ranker_cfg: RankerConfig,
    sinkhorn_cfg: SinkhornConfig = SinkhornConfig(),
) -> list[ScoredRegion]:
    """Global-assignment baseline: rank regions by transported anchor mass.

    Each positive anchor holds 1/|Z_pos| mass and spreads it over the regions
    through the entropic kernel exp(-cost/epsilon); regions are ranked by the
    total mass they receive (the plan's column mass). Only the anchor-side
    marginal is enforced: pinning the region-side marginal as well would make
    every column mass equal by construction and erase the ranking signal.
    ``s_pos``/``s_neg`` carry the contrastive terms for diagnostics.
    """
    if not regions:
        raise DimensionError("cannot rank an empty region list")
    ids = np.array([rid for rid, _ in regions], dtype=np.int64)
    matrix = np.stack([np.asarray(emb, dtype=np.float64) for _, emb in regions])
    cost = sinkhorn_cost_matrix(matrix, state, ranker_cfg)
    if not np.all(np.isfinite(cost)):
        raise InvalidCostError("cost matrix contains non-finite entries")
    logits = -(cost - cost.min(axis=1, keepdims=True)) / sinkhorn_cfg.epsilon
    kernel = np.exp(logits)
    rows = kernel / kernel.sum(axis=1, keepdims=True)
    mass = rows.mean(axis=0)  # uniform 1/|Z_pos| anchor mass
    _, s_pos, s_neg = _score_terms(matrix, state, ranker_cfg)
    order = _order(mass, ids)
    return [
        ScoredRegion(int(ids[i]), float(mass[i]), float(s_pos[i]), float(s_neg[i]))
        for i in order
    ]
