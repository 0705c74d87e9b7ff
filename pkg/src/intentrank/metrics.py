"""Detection average precision and the per-turn evaluation protocol.

AP uses greedy rank-order matching (each prediction takes the best unmatched
ground-truth box at or above the IoU threshold) and all-point interpolation
of the precision-recall curve. The turn protocol runs the simulated user on
every query, then reports the mean per-query AP of each turn's ranking
snapshot; sessions confirmed early keep contributing their confirmation-time
ranking at later turns.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .data import Bbox, Bundle, Query, iou
from .errors import ConfigError, MismatchError, SortOrderError
from .session import (
    OUTCOME_CONFIRMED,
    OracleConfig,
    SessionConfig,
    SessionTranscript,
    simulate_session,
)

COCO_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))


def average_precision(
    ranked: Sequence[tuple[Bbox, float]],
    gts: Sequence[Bbox],
    iou_thr: float,
    vacuous_value: float = 1.0,
) -> float:
    """All-point-interpolated AP of a ranked prediction list for one image.

    ``vacuous_value`` is returned for the no-ground-truth, no-prediction cell;
    toolkits disagree on that convention so it stays configurable.
    """
    scores = [score for _, score in ranked]
    if any(scores[i] < scores[i + 1] for i in range(len(scores) - 1)):
        raise SortOrderError("predictions must be sorted by descending score")
    if not gts:
        return vacuous_value if not ranked else 0.0
    if not ranked:
        return 0.0

    matched: set[int] = set()
    tp = np.zeros(len(ranked))
    for rank, (bbox, _) in enumerate(ranked):
        best_iou, best_gt = 0.0, -1
        for gi, gt in enumerate(gts):
            if gi in matched:
                continue
            overlap = iou(bbox, gt)
            if overlap > best_iou:
                best_iou, best_gt = overlap, gi
        if best_gt >= 0 and best_iou >= iou_thr:
            matched.add(best_gt)
            tp[rank] = 1.0

    cum_tp = np.cumsum(tp)
    precision = cum_tp / np.arange(1, len(ranked) + 1)
    recall = cum_tp / len(gts)
    # Precision envelope: best precision achievable at or beyond each rank.
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    ap = 0.0
    prev_recall = 0.0
    for rank in range(len(ranked)):
        if tp[rank]:
            ap += (recall[rank] - prev_recall) * envelope[rank]
            prev_recall = recall[rank]
    return float(ap)


def map_over_thresholds(
    ranked: Sequence[tuple[Bbox, float]],
    gts: Sequence[Bbox],
    thresholds: Sequence[float] = COCO_THRESHOLDS,
) -> float:
    """Mean AP over a threshold sweep (COCO-style 0.50:0.05:0.95 by default)."""
    if not thresholds:
        raise ConfigError("threshold set must be non-empty")
    return float(np.mean([average_precision(ranked, gts, t) for t in thresholds]))


@dataclass(frozen=True)
class EvalReport:
    """Per-turn AP plus optional per-split breakdown and session counts."""

    ap_by_turn: dict[int, float]
    split_ap: dict[str, dict[int, float]]
    confirmed: int
    unresolved: int
    n_queries: int
    config: dict

    def to_document(self) -> dict:
        return {
            "ap_by_turn": {str(t): ap for t, ap in sorted(self.ap_by_turn.items())},
            "split_ap": {
                split: {str(t): ap for t, ap in sorted(by_turn.items())}
                for split, by_turn in sorted(self.split_ap.items())
            },
            "confirmed": self.confirmed,
            "unresolved": self.unresolved,
            "n_queries": self.n_queries,
            "config": self.config,
        }

    def format_table(self) -> str:
        lines = ["turn  AP       (x100)"]
        for turn, ap in sorted(self.ap_by_turn.items()):
            lines.append(f"{turn:>4}  {ap:.4f}   {100 * ap:5.1f}")
        for split, by_turn in sorted(self.split_ap.items()):
            lines.append(f"split {split}:")
            for turn, ap in sorted(by_turn.items()):
                lines.append(f"{turn:>4}  {ap:.4f}   {100 * ap:5.1f}")
        lines.append(
            f"sessions: {self.confirmed} confirmed, {self.unresolved} unresolved"
            f" of {self.n_queries}"
        )
        return "\n".join(lines)

    def csv_rows(self) -> list[tuple]:
        rows: list[tuple] = [("split", "turn", "ap")]
        for turn, ap in sorted(self.ap_by_turn.items()):
            rows.append(("all", turn, ap))
        for split, by_turn in sorted(self.split_ap.items()):
            for turn, ap in sorted(by_turn.items()):
                rows.append((split, turn, ap))
        return rows


def evaluate_turn_protocol(
    dataset: Sequence[tuple[Bundle, Query]],
    session_cfg: SessionConfig,
    oracle_cfg: OracleConfig,
    splits: Mapping[str, str] | None = None,
    ap_iou_thr: float = 0.5,
) -> tuple[EvalReport, list[SessionTranscript]]:
    """Simulate every query and report mean per-query AP at each turn 0..K."""
    if not dataset:
        raise ConfigError("dataset is empty")
    transcripts = []
    per_turn: dict[int, list[float]] = {t: [] for t in range(session_cfg.max_turns + 1)}
    per_split: dict[str, dict[int, list[float]]] = {}
    confirmed = 0
    for bundle, query in dataset:
        if bundle.image_id != query.image_id:
            raise MismatchError(
                f"query {query.query_id!r} does not match bundle {bundle.image_id!r}"
            )
        transcript = simulate_session(bundle, query, session_cfg, oracle_cfg)
        transcripts.append(transcript)
        if transcript.outcome == OUTCOME_CONFIRMED:
            confirmed += 1
        boxes = {r.id: r.bbox for r in bundle.regions}
        split = splits.get(query.category) if splits else None
        if split is not None and split not in per_split:
            per_split[split] = {t: [] for t in per_turn}
        for turn in per_turn:
            ranked = [
                (boxes[sr.region_id], sr.score) for sr in transcript.ranking_at(turn)
            ]
            ap = average_precision(ranked, [query.gt_bbox], ap_iou_thr)
            per_turn[turn].append(ap)
            if split is not None:
                per_split[split][turn].append(ap)

    report = EvalReport(
        ap_by_turn={t: float(np.mean(v)) for t, v in per_turn.items()},
        split_ap={
            split: {t: float(np.mean(v)) for t, v in by_turn.items() if v}
            for split, by_turn in per_split.items()
        },
        confirmed=confirmed,
        unresolved=len(dataset) - confirmed,
        n_queries=len(dataset),
        config=session_cfg.to_document()
        | {"oracle_iou_threshold": oracle_cfg.iou_threshold, "ap_iou_threshold": ap_iou_thr},
    )
    return report, transcripts


@dataclass(frozen=True)
class ScoreTrace:
    """Region-by-step score matrix extracted from one transcript."""

    region_ids: tuple[int, ...]
    matrix: np.ndarray  # rows follow region_ids, one column per snapshot
    normalized: bool

    def csv_lines(self) -> list[str]:
        header = ["region_id"] + [f"step_{i}" for i in range(self.matrix.shape[1])]
        lines = [",".join(header)]
        for row, region_id in enumerate(self.region_ids):
            values = ",".join(repr(float(v)) for v in self.matrix[row])
            lines.append(f"{region_id},{values}")
        return lines


def score_trace(transcript: SessionTranscript, normalize: bool = True) -> ScoreTrace:
    """Stack per-turn scores into a matrix, optionally min-max scaled per column."""
    if not transcript.turns:
        raise ConfigError("transcript has no turn records")
    region_ids = tuple(sorted(sr.region_id for sr in transcript.turns[0].ranking))
    index = {rid: i for i, rid in enumerate(region_ids)}
    matrix = np.zeros((len(region_ids), len(transcript.turns)))
    for col, record in enumerate(transcript.turns):
        for sr in record.ranking:
            matrix[index[sr.region_id], col] = sr.score
    if normalize:
        lo = matrix.min(axis=0)
        span = matrix.max(axis=0) - lo
        safe = np.where(span > 0, span, 1.0)
        matrix = (matrix - lo) / safe
        matrix[:, span == 0] = 0.0  # constant columns carry no signal
    return ScoreTrace(region_ids=region_ids, matrix=matrix, normalized=normalize)
