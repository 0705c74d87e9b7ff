"""Bundle ingestion, box geometry, and ambiguous-subset mining.

A bundle is one image's candidate regions: pixel boxes plus precomputed
embeddings, either inline in the JSON manifest or in a raw float32 sidecar.
All embeddings are normalized at ingest. Queries, ground truth, and probe
detections travel as JSON lines. The miner extracts the benchmark cases
where a same-category, low-overlap detection outranks the true target.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import FormatError
from .vecmath import l2_normalize

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Bbox:
    """Axis-aligned pixel box: top-left corner plus positive extents."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        for name in ("x", "y", "w", "h"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"bbox {name} is not finite")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"bbox extents must be positive, got w={self.w} h={self.h}")

    def as_list(self) -> list[float]:
        return [float(self.x), float(self.y), float(self.w), float(self.h)]

    @classmethod
    def from_list(cls, values: Sequence[float]) -> "Bbox":
        if len(values) != 4:
            raise FormatError(f"bbox needs 4 values, got {len(values)}")
        return cls(*(float(v) for v in values))


def iou(a: Bbox, b: Bbox) -> float:
    """Intersection over union of two boxes, in [0, 1]."""
    ix = max(a.x, b.x)
    iy = max(a.y, b.y)
    ix2 = min(a.x + a.w, b.x + b.w)
    iy2 = min(a.y + a.h, b.y + b.h)
    iw = max(0.0, ix2 - ix)
    ih = max(0.0, iy2 - iy)
    inter = iw * ih
    if inter <= 0.0:
        return 0.0
    union = a.w * a.h + b.w * b.h - inter
    # Clamp: rounding in the corner arithmetic can push a hair past 1.
    return min(inter / union, 1.0)


@dataclass(frozen=True, eq=False)
class Region:
    id: int
    bbox: Bbox
    embedding: np.ndarray


@dataclass(frozen=True, eq=False)
class Bundle:
    """One image's candidate regions with unit-norm embeddings."""

    image_id: str
    dim: int
    regions: tuple[Region, ...]
    image_uri: str | None = None

    def embedding_lookup(self) -> dict[int, np.ndarray]:
        return {r.id: r.embedding for r in self.regions}

    def region_by_id(self, region_id: int) -> Region:
        for r in self.regions:
            if r.id == region_id:
                return r
        raise KeyError(region_id)


@dataclass(frozen=True, eq=False)
class Query:
    query_id: str
    image_id: str
    gt_bbox: Bbox
    category: str
    text: str | None = None
    text_embedding: np.ndarray | None = None
    ref_image_embedding: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.text_embedding is None and self.ref_image_embedding is None:
            raise ValueError(f"query {self.query_id!r} carries no embedding")


@dataclass(frozen=True)
class GroundTruth:
    image_id: str
    bbox: Bbox
    category: str


@dataclass(frozen=True)
class Detection:
    image_id: str
    bbox: Bbox
    confidence: float
    category: str

    def __post_init__(self) -> None:
        if not np.isfinite(self.confidence):
            raise ValueError("detection confidence must be finite")


@dataclass(frozen=True)
class AmbiguousSample:
    image_id: str
    gt_bbox: Bbox
    category: str
    distractor_count: int
    true_target_rank: int  # 1-indexed rank of the best-IoU prediction


# ---------------------------------------------------------------------------
# Bundle manifests


def bundle_from_document(doc: Mapping, base_dir: Path | None = None) -> Bundle:
    """Build a Bundle from a parsed manifest document.

    Embeddings come either inline per region or from a float32 sidecar named
    by ``embedding_file`` (little-endian, row-major, rows in region order);
    declaring both or neither is a schema violation.
    """
    try:
        image_id = str(doc["image_id"])
        dim = int(doc["dim"])
        region_docs = list(doc["regions"])
    except (KeyError, TypeError) as exc:
        raise FormatError(f"manifest missing required field: {exc}") from exc
    if dim < 1:
        raise FormatError(f"dim must be positive, got {dim}")
    if not region_docs:
        raise FormatError("manifest declares no regions")

    inline = [("embedding" in rd) for rd in region_docs]
    sidecar_name = doc.get("embedding_file")
    if sidecar_name is not None and any(inline):
        raise FormatError("manifest declares both embedding_file and inline embeddings")
    if sidecar_name is None and not all(inline):
        raise FormatError("manifest declares neither embedding_file nor inline embeddings")

    if sidecar_name is not None:
        sidecar_path = Path(sidecar_name)
        if not sidecar_path.is_absolute() and base_dir is not None:
            sidecar_path = base_dir / sidecar_path
        blob = sidecar_path.read_bytes()
        expected = len(region_docs) * dim * 4
        if len(blob) != expected:
            raise FormatError(
                f"sidecar {sidecar_path.name} holds {len(blob)} bytes, expected {expected}"
            )
        rows = np.frombuffer(blob, dtype="<f4").reshape(len(region_docs), dim)
        embeddings = [rows[i].astype(np.float64) for i in range(len(region_docs))]
    else:
        embeddings = []
        for rd in region_docs:
            vec = np.asarray(rd["embedding"], dtype=np.float64)
            if vec.shape != (dim,):
                raise FormatError(
                    f"region {rd.get('id')} embedding has dim {vec.size}, expected {dim}"
                )
            embeddings.append(vec)

    regions = []
    seen_ids: set[int] = set()
    for rd, emb in zip(region_docs, embeddings):
        try:
            region_id = int(rd["id"])
            bbox = Bbox.from_list(rd["bbox"])
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"bad region record: {exc}") from exc
        if region_id < 0:
            raise FormatError(f"region id must be non-negative, got {region_id}")
        if region_id in seen_ids:
            raise FormatError(f"duplicate region id {region_id}")
        seen_ids.add(region_id)
        regions.append(Region(region_id, bbox, l2_normalize(emb)))

    return Bundle(
        image_id=image_id,
        dim=dim,
        regions=tuple(regions),
        image_uri=doc.get("image_uri"),
    )


def load_bundle(manifest_path: str | Path) -> Bundle:
    path = Path(manifest_path)
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path} is not valid JSON: {exc}") from exc
    return bundle_from_document(doc, base_dir=path.parent)


def bundle_to_document(bundle: Bundle, embedding_file: str | None = None) -> dict:
    doc: dict = {"image_id": bundle.image_id, "dim": bundle.dim}
    if bundle.image_uri is not None:
        doc["image_uri"] = bundle.image_uri
    if embedding_file is not None:
        doc["embedding_file"] = embedding_file
    doc["regions"] = [
        {"id": r.id, "bbox": r.bbox.as_list()}
        | ({} if embedding_file else {"embedding": [float(x) for x in r.embedding]})
        for r in bundle.regions
    ]
    return doc


def save_bundle(bundle: Bundle, manifest_path: str | Path, sidecar: bool = False) -> None:
    """Write a manifest, inline by default or with a float32 sidecar."""
    path = Path(manifest_path)
    sidecar_name = path.stem + ".f32" if sidecar else None
    doc = bundle_to_document(bundle, embedding_file=sidecar_name)
    if sidecar:
        rows = np.stack([r.embedding for r in bundle.regions]).astype("<f4")
        (path.parent / sidecar_name).write_bytes(rows.tobytes())
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# JSONL record files


def _load_jsonl(path: str | Path) -> Iterable[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: invalid JSON: {exc}") from exc


def _optional_embedding(doc: Mapping, key: str) -> np.ndarray | None:
    value = doc.get(key)
    return None if value is None else l2_normalize(value)


def load_queries(path: str | Path) -> list[Query]:
    queries = []
    for lineno, doc in _load_jsonl(path):
        try:
            queries.append(
                Query(
                    query_id=str(doc["query_id"]),
                    image_id=str(doc["image_id"]),
                    gt_bbox=Bbox.from_list(doc["gt_bbox"]),
                    category=str(doc["category"]),
                    text=doc.get("text"),
                    text_embedding=_optional_embedding(doc, "text_embedding"),
                    ref_image_embedding=_optional_embedding(doc, "ref_image_embedding"),
                )
            )
        except (KeyError, ValueError) as exc:
            raise FormatError(f"{path}:{lineno}: bad query record: {exc}") from exc
    return queries


def query_to_document(query: Query) -> dict:
    doc: dict = {"query_id": query.query_id, "image_id": query.image_id}
    if query.text is not None:
        doc["text"] = query.text
    if query.text_embedding is not None:
        doc["text_embedding"] = [float(x) for x in query.text_embedding]
    if query.ref_image_embedding is not None:
        doc["ref_image_embedding"] = [float(x) for x in query.ref_image_embedding]
    doc["gt_bbox"] = query.gt_bbox.as_list()
    doc["category"] = query.category
    return doc


def load_ground_truth(path: str | Path) -> list[GroundTruth]:
    records = []
    for lineno, doc in _load_jsonl(path):
        try:
            records.append(
                GroundTruth(
                    image_id=str(doc["image_id"]),
                    bbox=Bbox.from_list(doc["bbox"]),
                    category=str(doc["category"]),
                )
            )
        except (KeyError, ValueError) as exc:
            raise FormatError(f"{path}:{lineno}: bad ground-truth record: {exc}") from exc
    return records


def load_detections(path: str | Path) -> list[Detection]:
    records = []
    for lineno, doc in _load_jsonl(path):
        try:
            records.append(
                Detection(
                    image_id=str(doc["image_id"]),
                    bbox=Bbox.from_list(doc["bbox"]),
                    confidence=float(doc["confidence"]),
                    category=str(doc["category"]),
                )
            )
        except (KeyError, ValueError) as exc:
            raise FormatError(f"{path}:{lineno}: bad detection record: {exc}") from exc
    return records


# ---------------------------------------------------------------------------
# Ambiguous-subset mining


def mine_ambiguous(
    ground_truth: Sequence[GroundTruth],
    detections: Sequence[Detection],
    iou_low: float = 0.5,
    verify_against_gt: bool = False,
) -> list[AmbiguousSample]:
    """Select the ground-truth objects that a ranked probe gets wrong.

    For each ground-truth object, the probe's ranked list is the detections
    for the same image and category (a category-specific probe), sorted by
    descending confidence with file order breaking ties. The best-IoU
    prediction marks the true target at rank k; any higher-ranked prediction
    with IoU below ``iou_low`` counts as a distractor. Objects with at least
    one distractor are emitted.

    ``verify_against_gt`` additionally requires each distractor to overlap
    (IoU >= 0.5) some *other* ground-truth instance of the same category,
    the stricter reading of annotation-verified distractors.
    """
    by_probe: dict[tuple[str, str], list[Detection]] = {}
    for det in detections:
        by_probe.setdefault((det.image_id, det.category), []).append(det)
    for key, dets in by_probe.items():
        dets.sort(key=lambda d: -d.confidence)  # stable: file order breaks ties

    samples = []
    for gt in ground_truth:
        ranked = by_probe.get((gt.image_id, gt.category), [])
        if not ranked:
            log.info(
                "skipping %s/%s: no predictions to rank", gt.image_id, gt.category
            )
            continue
        overlaps = [iou(det.bbox, gt.bbox) for det in ranked]
        best_rank = int(np.argmax(overlaps)) + 1  # ties: argmax keeps the lower rank

        distractors = 0
        for det, overlap in zip(ranked[: best_rank - 1], overlaps[: best_rank - 1]):
            if overlap >= iou_low:
                continue
            if verify_against_gt and not _overlaps_other_instance(det, gt, ground_truth):
                continue
            distractors += 1
        if distractors >= 1:
            samples.append(
                AmbiguousSample(
                    image_id=gt.image_id,
                    gt_bbox=gt.bbox,
                    category=gt.category,
                    distractor_count=distractors,
                    true_target_rank=best_rank,
                )
            )
    return samples


def _overlaps_other_instance(
    det: Detection, gt: GroundTruth, ground_truth: Sequence[GroundTruth]
) -> bool:
    for other in ground_truth:
        if other is gt or other.image_id != gt.image_id or other.category != gt.category:
            continue
        if iou(det.bbox, other.bbox) >= 0.5:
            return True
    return False


def ambiguous_sample_to_document(sample: AmbiguousSample) -> dict:
    return {
        "image_id": sample.image_id,
        "gt_bbox": sample.gt_bbox.as_list(),
        "category": sample.category,
        "distractor_count": sample.distractor_count,
        "true_target_rank": sample.true_target_rank,
    }
