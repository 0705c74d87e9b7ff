"""Synthetic desk-scale benchmark generator.

Each scene is one image bundle with a single target region, a set of
same-concept distractors packed into a tight angular cone around the query
direction, and filler regions orthogonal to the concept plane. Distractors
sit closer to the query than the target, so a stateless ranker picks a
distractor at turn 0 and the session has to recover through feedback.

Geometry per scene (angles measured from the query direction q):

* shallow scene: distractors at azimuth +e1 with polar angles in
  [0.8*spread, spread]; target mirrored at azimuth -e1 at ``target_angle``.
  One rejection separates the target from the whole cluster.
* deep scene (needs dim >= 3): distractors split into two clusters at
  azimuths +e1 and -e1; target at azimuth +e2, equidistant from both.
  Rejecting a member of one cluster still leaves the other cluster ahead of
  the target, so resolution takes two rounds and depends on the state
  remembering both rejections.
* easy scene: target closer to q than every distractor (no ambiguity).

All randomness flows from one 64-bit seed through a single
numpy.random.default_rng generator, so outputs are byte-reproducible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import (
    Bbox,
    Bundle,
    GroundTruth,
    Query,
    Region,
    bundle_to_document,
    query_to_document,
)
from .errors import ConfigError
from .vecmath import l2_normalize

BOX_SIZE = 10.0
BOX_PITCH = 20.0  # disjoint grid: every region box has IoU 0 with every other


@dataclass(frozen=True)
class SynthConfig:
    scenes: int
    distractors_min: int = 3
    distractors_max: int = 9
    spread_deg: float = 10.0
    target_angle_deg: float = 20.0
    dim: int = 32
    regions: int = 24
    deep_frac: float = 0.35
    ambiguous_frac: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.scenes < 1:
            raise ConfigError("scenes must be >= 1")
        if not 1 <= self.distractors_min <= self.distractors_max:
            raise ConfigError("need 1 <= distractors_min <= distractors_max")
        if self.dim < 2:
            raise ConfigError("dim must be >= 2")
        if self.regions < self.distractors_max + 1:
            raise ConfigError("regions must cover target plus distractors")
        if not 0 < self.spread_deg < self.target_angle_deg < 90:
            raise ConfigError("need 0 < spread_deg < target_angle_deg < 90")
        for name in ("deep_frac", "ambiguous_frac"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1]")


def _orthonormal_frame(rng: np.random.Generator, dim: int, count: int) -> np.ndarray:
    """Random orthonormal vectors via Gram-Schmidt on Gaussian draws."""
    basis: list[np.ndarray] = []
    while len(basis) < count:
        v = rng.standard_normal(dim)
        for b in basis:
            v = v - np.dot(v, b) * b
        norm = np.linalg.norm(v)
        if norm > 1e-8:
            basis.append(v / norm)
    return np.stack(basis)


def _on_cone(q: np.ndarray, azimuth: np.ndarray, angle_deg: float) -> np.ndarray:
    theta = math.radians(angle_deg)
    return l2_normalize(math.cos(theta) * q + math.sin(theta) * azimuth)


def _cluster_angles(spread_deg: float, count: int) -> list[float]:
    # Evenly spaced through the outer fifth of the cone; a single distractor
    # lands exactly at spread_deg, reproducing the two-region worked scenario.
    return [spread_deg * (0.8 + 0.2 * (i + 1) / count) for i in range(count)]


def generate_scene(
    rng: np.random.Generator, index: int, cfg: SynthConfig
) -> tuple[Bundle, Query, GroundTruth]:
    image_id = f"scene-{index:04d}"
    category = f"concept-{index:04d}"
    n_distractors = int(rng.integers(cfg.distractors_min, cfg.distractors_max + 1))
    ambiguous = bool(rng.random() < cfg.ambiguous_frac)
    deep = (
        ambiguous
        and cfg.dim >= 3
        and n_distractors >= 2
        and bool(rng.random() < cfg.deep_frac)
    )

    frame = _orthonormal_frame(rng, cfg.dim, 3 if cfg.dim >= 3 else 2)
    q = frame[0]
    e1 = frame[1]
    e2 = frame[2] if cfg.dim >= 3 else None

    distractors: list[np.ndarray] = []
    if deep:
        n_a = (n_distractors + 1) // 2
        n_b = n_distractors - n_a
        for angle in _cluster_angles(cfg.spread_deg, n_a):
            distractors.append(_on_cone(q, e1, angle))
        for angle in _cluster_angles(cfg.spread_deg, n_b):
            distractors.append(_on_cone(q, -e1, angle))
        target = _on_cone(q, e2, cfg.target_angle_deg)
    else:
        angles = _cluster_angles(cfg.spread_deg, n_distractors)
        for angle in angles:
            distractors.append(_on_cone(q, e1, angle))
        if ambiguous:
            target = _on_cone(q, -e1, cfg.target_angle_deg)
        else:
            # Easy case: target strictly closer to q than any distractor.
            target = _on_cone(q, -e1, 0.5 * min(angles))

    # Fillers live in the orthogonal complement of the concept frame, so they
    # score exactly zero against every query, distractor, and target vector.
    n_fill = cfg.regions - 1 - n_distractors
    fillers: list[np.ndarray] = []
    if cfg.dim > len(frame):
        for _ in range(n_fill):
            v = rng.standard_normal(cfg.dim)
            for b in frame:
                v = v - np.dot(v, b) * b
            fillers.append(l2_normalize(v))

    embeddings = [target] + distractors + fillers
    order = rng.permutation(len(embeddings))
    boxes = [
        Bbox(BOX_PITCH * (i % 10), BOX_PITCH * (i // 10), BOX_SIZE, BOX_SIZE)
        for i in range(len(embeddings))
    ]
    regions = tuple(
        Region(id=i, bbox=boxes[i], embedding=embeddings[order[i]])
        for i in range(len(embeddings))
    )
    target_id = int(np.nonzero(order == 0)[0][0])
    gt_bbox = regions[target_id].bbox

    bundle = Bundle(image_id=image_id, dim=cfg.dim, regions=regions)
    query = Query(
        query_id=f"{image_id}-q0",
        image_id=image_id,
        gt_bbox=gt_bbox,
        category=category,
        text_embedding=l2_normalize(q),
    )
    return bundle, query, GroundTruth(image_id=image_id, bbox=gt_bbox, category=category)


def generate_dataset(cfg: SynthConfig) -> list[tuple[Bundle, Query, GroundTruth]]:
    rng = np.random.default_rng(cfg.seed)
    return [generate_scene(rng, i, cfg) for i in range(cfg.scenes)]


def write_dataset(
    dataset: list[tuple[Bundle, Query, GroundTruth]], out_dir: str | Path
) -> None:
    """Write bundles/, queries.jsonl, and gt.jsonl under ``out_dir``."""
    out = Path(out_dir)
    (out / "bundles").mkdir(parents=True, exist_ok=True)
    for bundle, _, _ in dataset:
        doc = bundle_to_document(bundle)
        with open(out / "bundles" / f"{bundle.image_id}.json", "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
    with open(out / "queries.jsonl", "w", encoding="utf-8") as fh:
        for _, query, _ in dataset:
            fh.write(json.dumps(query_to_document(query)) + "\n")
    with open(out / "gt.jsonl", "w", encoding="utf-8") as fh:
        for _, _, gt in dataset:
            record = {"image_id": gt.image_id, "bbox": gt.bbox.as_list(), "category": gt.category}
            fh.write(json.dumps(record) + "\n")
