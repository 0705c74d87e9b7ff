"""Shared fixtures: the two-region worked scenario and small bundle builders."""

from __future__ import annotations

import math

import numpy as np
import pytest

from intentrank.data import Bbox, Bundle, Query, Region
from intentrank.vecmath import l2_normalize


def unit(angle_deg: float) -> np.ndarray:
    """2-d unit vector at the given angle from (1, 0)."""
    rad = math.radians(angle_deg)
    return l2_normalize([math.cos(rad), math.sin(rad)])


def make_bundle(
    embeddings: list[np.ndarray], image_id: str = "img-0", ids: list[int] | None = None
) -> Bundle:
    """Bundle with pairwise-disjoint boxes on a grid, one per embedding."""
    if ids is None:
        ids = list(range(len(embeddings)))
    regions = tuple(
        Region(
            id=rid,
            bbox=Bbox(20.0 * (i % 10), 20.0 * (i // 10), 10.0, 10.0),
            embedding=l2_normalize(emb),
        )
        for i, (rid, emb) in enumerate(zip(ids, embeddings))
    )
    return Bundle(image_id=image_id, dim=regions[0].embedding.size, regions=regions)


@pytest.fixture
def query_vec() -> np.ndarray:
    return unit(0.0)


@pytest.fixture
def distractor_vec() -> np.ndarray:
    return unit(10.0)


@pytest.fixture
def target_vec() -> np.ndarray:
    return unit(-20.0)


@pytest.fixture
def ambiguous_bundle(distractor_vec, target_vec) -> Bundle:
    """Two regions: the distractor (id 0) outranks the target (id 1) at turn 0."""
    return make_bundle([distractor_vec, target_vec])


@pytest.fixture
def ambiguous_query(ambiguous_bundle, query_vec) -> Query:
    return Query(
        query_id="q-0",
        image_id=ambiguous_bundle.image_id,
        gt_bbox=ambiguous_bundle.regions[1].bbox,
        category="cup",
        text_embedding=query_vec,
    )
