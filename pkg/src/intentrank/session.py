"""The interactive retrieval loop: rank, present, absorb feedback, repeat.

`LiveSession` is the single turn engine; the simulated-user driver, the
scripted driver, and the HTTP service all run on top of it so that a
recorded feedback sequence replays to identical rankings everywhere.

A transcript holds one record per ranking snapshot: the snapshot taken at
each state the user saw, plus a trailing snapshot after the last feedback
when the budget runs out, so a K-round session yields K+1 rankings.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

from .data import Bbox, Bundle, Query, Region, iou
from .errors import ConfigError, InvalidStateError, MismatchError
from .intent import (
    FEEDBACK_CONFIRM,
    FEEDBACK_NEGATIVE,
    FEEDBACK_REFINE,
    Feedback,
    IntentState,
    apply_feedback,
    init_state,
)
from .ranking import (
    RankerConfig,
    ScoredRegion,
    SinkhornConfig,
    rank_candidates,
    sinkhorn_rank,
)

STATE_ACCUMULATE = "accumulate"
STATE_LAST_FEEDBACK = "last-feedback"

SCORER_CONTRASTIVE = "contrastive"
SCORER_SINKHORN = "sinkhorn"

OUTCOME_CONFIRMED = "confirmed"
OUTCOME_UNRESOLVED = "unresolved"


@dataclass(frozen=True)
class SessionConfig:
    """Loop parameters; defaults follow the reference interactive protocol."""

    max_turns: int = 2  # feedback rounds (K)
    alpha: float = 0.6
    ranker: RankerConfig = field(default_factory=RankerConfig)
    present_k: int = 1
    exclude_rejected_from_presentation: bool = True
    init_mode: str = "fused"
    state_mode: str = STATE_ACCUMULATE  # "last-feedback" = stateless ablation
    scorer: str = SCORER_CONTRASTIVE
    sinkhorn: SinkhornConfig = field(default_factory=SinkhornConfig)

    def __post_init__(self) -> None:
        if self.max_turns < 1:
            raise ConfigError("max_turns must be >= 1")
        if self.present_k < 1:
            raise ConfigError("present_k must be >= 1")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha must be in [0, 1]")
        if self.state_mode not in (STATE_ACCUMULATE, STATE_LAST_FEEDBACK):
            raise ConfigError(f"unknown state_mode {self.state_mode!r}")
        if self.scorer not in (SCORER_CONTRASTIVE, SCORER_SINKHORN):
            raise ConfigError(f"unknown scorer {self.scorer!r}")

    def to_document(self) -> dict:
        return {
            "max_turns": self.max_turns,
            "alpha": self.alpha,
            "negative_weight": self.ranker.negative_weight,
            "aggregation": self.ranker.aggregation,
            "present_k": self.present_k,
            "exclude_rejected_from_presentation": self.exclude_rejected_from_presentation,
            "init_mode": self.init_mode,
            "state_mode": self.state_mode,
            "scorer": self.scorer,
            "sinkhorn_epsilon": self.sinkhorn.epsilon,
        }


@dataclass(frozen=True)
class OracleConfig:
    """Simulated user: confirm at sufficient overlap, otherwise reject top-1."""

    iou_threshold: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 < self.iou_threshold <= 1.0:
            raise ConfigError("iou_threshold must be in (0, 1]")


@dataclass(frozen=True)
class TurnRecord:
    turn: int
    ranking: tuple[ScoredRegion, ...]
    presented: tuple[int, ...]
    feedback: Feedback | None


@dataclass(frozen=True)
class SessionTranscript:
    query_id: str
    image_id: str
    turns: tuple[TurnRecord, ...]
    outcome: str
    confirmed_region_id: int | None = None
    b_star: Bbox | None = None

    def ranking_at(self, turn: int) -> tuple[ScoredRegion, ...]:
        """Ranking snapshot at a turn; sessions that ended earlier keep their last."""
        index = min(turn, len(self.turns) - 1)
        return self.turns[index].ranking

    def to_document(self) -> dict:
        doc: dict = {
            "query_id": self.query_id,
            "image_id": self.image_id,
            "outcome": self.outcome,
            "turns": [
                {
                    "turn": rec.turn,
                    "ranking": [
                        {
                            "region_id": sr.region_id,
                            "score": sr.score,
                            "s_pos": sr.s_pos,
                            "s_neg": sr.s_neg,
                        }
                        for sr in rec.ranking
                    ],
                    "presented": list(rec.presented),
                    "feedback": _feedback_doc(rec.feedback),
                }
                for rec in self.turns
            ],
        }
        if self.confirmed_region_id is not None:
            doc["confirmed_region_id"] = self.confirmed_region_id
        if self.b_star is not None:
            doc["b_star"] = self.b_star.as_list()
        return doc


def _feedback_doc(feedback: Feedback | None) -> dict | None:
    if feedback is None:
        return None
    doc: dict = {"kind": feedback.kind}
    if feedback.region_id is not None:
        doc["region_id"] = feedback.region_id
    if feedback.new_prompt_embedding is not None:
        doc["new_prompt_embedding"] = [float(x) for x in feedback.new_prompt_embedding]
    return doc


def run_turn(
    bundle: Bundle,
    state: IntentState,
    cfg: SessionConfig,
    rejected: frozenset[int] | None = None,
) -> tuple[list[ScoredRegion], list[int]]:
    """Rank all regions and pick what to show.

    The ranking is always the full list; only the presented slice optionally
    drops already-rejected regions (``rejected`` overrides the state's own
    set, which the stateless ablation needs).
    """
    pairs = [(r.id, r.embedding) for r in bundle.regions]
    if cfg.scorer == SCORER_SINKHORN:
        ranking = sinkhorn_rank(pairs, state, cfg.ranker, cfg.sinkhorn)
    else:
        ranking = rank_candidates(pairs, state, cfg.ranker)
    if rejected is None:
        rejected = state.rejected_region_ids
    candidates = ranking
    if cfg.exclude_rejected_from_presentation and rejected:
        candidates = [sr for sr in ranking if sr.region_id not in rejected]
    presented = [sr.region_id for sr in candidates[: cfg.present_k]]
    return ranking, presented


def oracle_feedback(presented_top: Region, gt_bbox: Bbox, cfg: OracleConfig) -> Feedback:
    """Confirm the shown region when it overlaps the target enough, else reject it."""
    if iou(presented_top.bbox, gt_bbox) >= cfg.iou_threshold:
        return Feedback(FEEDBACK_CONFIRM, region_id=presented_top.id)
    return Feedback(FEEDBACK_NEGATIVE, region_id=presented_top.id)


class LiveSession:
    """Single-writer turn engine behind the drivers and the HTTP service.

    Takes raw query embeddings rather than a full Query record: live sessions
    have no ground-truth box, only the offline oracle needs one.
    """

    def __init__(
        self,
        bundle: Bundle,
        cfg: SessionConfig,
        query_id: str,
        text_embedding=None,
        ref_image_embedding=None,
    ):
        self.bundle = bundle
        self.query_id = query_id
        self.cfg = cfg
        self._lookup = bundle.embedding_lookup()
        self._initial = init_state(
            text_embedding, ref_image_embedding, cfg.alpha, cfg.init_mode
        )
        self.state = self._initial
        self.feedback_count = 0
        self.status = "active"
        self.confirmed_region_id: int | None = None
        self._records: list[TurnRecord] = []
        self._snapshot()

    # -- internals ---------------------------------------------------------

    def _scoring_state(self) -> IntentState:
        if self.cfg.state_mode == STATE_ACCUMULATE:
            return self.state
        # Stateless ablation: forget everything but the initial prompt and the
        # most recent feedback.
        reduced = self._initial
        if self._last_feedback is not None:
            reduced = apply_feedback(reduced, self._last_feedback, self._lookup)
        return reduced

    @property
    def _last_feedback(self) -> Feedback | None:
        for rec in reversed(self._records):
            if rec.feedback is not None and rec.feedback.kind != FEEDBACK_CONFIRM:
                return rec.feedback
        return None

    def _snapshot(self) -> None:
        # Presentation filtering always sees the full rejection history, even
        # when the stateless ablation scores with a reduced state.
        ranking, presented = run_turn(
            self.bundle, self._scoring_state(), self.cfg, self.state.rejected_region_ids
        )
        self._records.append(
            TurnRecord(
                turn=self.state.turn,
                ranking=tuple(ranking),
                presented=tuple(presented),
                feedback=None,
            )
        )

    # -- public surface ------------------------------------------------------

    @property
    def turn(self) -> int:
        return self.state.turn

    @property
    def presented(self) -> tuple[int, ...]:
        return self._records[-1].presented

    @property
    def current_ranking(self) -> tuple[ScoredRegion, ...]:
        return self._records[-1].ranking

    def feedback(self, fb: Feedback) -> None:
        """Absorb one feedback event; advances or terminates the session."""
        if self.status != "active":
            raise InvalidStateError(f"session is {self.status}; no further feedback accepted")
        last = self._records[-1]
        self._records[-1] = replace(last, feedback=fb)
        self.state = apply_feedback(self.state, fb, self._lookup)
        self.feedback_count += 1
        if fb.kind == FEEDBACK_CONFIRM:
            self.status = OUTCOME_CONFIRMED
            self.confirmed_region_id = fb.region_id
            return
        if self.feedback_count >= self.cfg.max_turns:
            self._snapshot()  # trailing post-feedback ranking
            self.status = OUTCOME_UNRESOLVED
            return
        self._snapshot()

    def finish_unresolved(self) -> None:
        """Terminate early without further feedback (e.g. script exhausted)."""
        if self.status == "active":
            self.status = OUTCOME_UNRESOLVED

    def transcript(self) -> SessionTranscript:
        outcome = self.status if self.status != "active" else OUTCOME_UNRESOLVED
        b_star = None
        if self.confirmed_region_id is not None:
            b_star = self.bundle.region_by_id(self.confirmed_region_id).bbox
        return SessionTranscript(
            query_id=self.query_id,
            image_id=self.bundle.image_id,
            turns=tuple(self._records),
            outcome=outcome,
            confirmed_region_id=self.confirmed_region_id,
            b_star=b_star,
        )


def _live_from_query(bundle: Bundle, query: Query, cfg: SessionConfig) -> LiveSession:
    if query.image_id != bundle.image_id:
        raise MismatchError(
            f"query targets image {query.image_id!r} but bundle is {bundle.image_id!r}"
        )
    return LiveSession(
        bundle,
        cfg,
        query_id=query.query_id,
        text_embedding=query.text_embedding,
        ref_image_embedding=query.ref_image_embedding,
    )


def simulate_session(
    bundle: Bundle,
    query: Query,
    session_cfg: SessionConfig,
    oracle_cfg: OracleConfig,
) -> SessionTranscript:
    """Run the full loop against the simulated user until confirmation or budget."""
    live = _live_from_query(bundle, query, session_cfg)
    while live.status == "active":
        if not live.presented:
            live.finish_unresolved()  # every region rejected already
            break
        top = bundle.region_by_id(live.presented[0])
        live.feedback(oracle_feedback(top, query.gt_bbox, oracle_cfg))
    return live.transcript()


def scripted_session(
    bundle: Bundle,
    query: Query,
    script: Sequence[Feedback],
    session_cfg: SessionConfig,
) -> SessionTranscript:
    """Apply a fixed feedback sequence instead of the oracle."""
    if len(script) > session_cfg.max_turns:
        raise ConfigError(
            f"script has {len(script)} steps but the session allows {session_cfg.max_turns}"
        )
    live = _live_from_query(bundle, query, session_cfg)
    for fb in script:
        live.feedback(fb)
        if live.status != "active":
            break
    live.finish_unresolved()
    return live.transcript()
