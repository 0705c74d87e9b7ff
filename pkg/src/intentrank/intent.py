"""Intent state: the session memory of positive anchors and negative constraints.

The state starts from the fused initial query and grows by one exemplar per
feedback round. Rejected regions accumulate in the negative set, confirmed
cues and refinement prompts in the positive set. States are immutable;
updates return new values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import InvalidStateError, UnknownRegionError
from .vecmath import fuse_query, l2_normalize

PROVENANCE_INITIAL = "initial-prompt"
PROVENANCE_REGION = "region"
PROVENANCE_TEXT = "text-refinement"
_PROVENANCES = (PROVENANCE_INITIAL, PROVENANCE_REGION, PROVENANCE_TEXT)

FEEDBACK_CONFIRM = "positive-confirmation"
FEEDBACK_REFINE = "positive-refinement"
FEEDBACK_NEGATIVE = "negative"
_FEEDBACK_KINDS = (FEEDBACK_CONFIRM, FEEDBACK_REFINE, FEEDBACK_NEGATIVE)

INIT_FUSED = "fused"
INIT_SEPARATE = "separate"


@dataclass(frozen=True, eq=False)
class Exemplar:
    """One stored embedding plus where it came from."""

    embedding: np.ndarray
    provenance: str
    source_region_id: int | None = None

    def __post_init__(self) -> None:
        if self.provenance not in _PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if self.provenance == PROVENANCE_REGION and self.source_region_id is None:
            raise ValueError("region exemplar requires a source_region_id")
        if self.provenance != PROVENANCE_REGION and self.source_region_id is not None:
            raise ValueError(f"{self.provenance} exemplar must not carry a source_region_id")

    def dedup_key(self) -> tuple:
        # Region exemplars are identified by their region id; prompt exemplars
        # by their embedding bytes (set-union semantics of the update rules).
        if self.provenance == PROVENANCE_REGION:
            return (self.provenance, self.source_region_id)
        return (self.provenance, self.embedding.tobytes())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Exemplar):
            return NotImplemented
        return self.dedup_key() == other.dedup_key()

    def __hash__(self) -> int:
        return hash(self.dedup_key())


@dataclass(frozen=True)
class Feedback:
    """One user feedback event: confirm, refine, or reject."""

    kind: str
    region_id: int | None = None
    new_prompt_embedding: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.kind not in _FEEDBACK_KINDS:
            raise ValueError(f"unknown feedback kind {self.kind!r}")
        if self.kind == FEEDBACK_NEGATIVE and self.region_id is None:
            raise ValueError("negative feedback requires a region_id")
        if self.kind == FEEDBACK_CONFIRM and self.region_id is None:
            raise ValueError("positive-confirmation requires a region_id")
        if self.kind == FEEDBACK_REFINE:
            has_region = self.region_id is not None
            has_prompt = self.new_prompt_embedding is not None
            if has_region == has_prompt:
                raise ValueError(
                    "positive-refinement requires exactly one of region_id / new_prompt_embedding"
                )


@dataclass(frozen=True)
class IntentState:
    """Immutable snapshot of the session memory at one turn."""

    turn: int = 0
    z_pos: tuple[Exemplar, ...] = ()
    z_neg: tuple[Exemplar, ...] = ()
    rejected_region_ids: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        if not self.z_pos:
            raise InvalidStateError("intent state requires at least one positive exemplar")

    def to_document(self) -> dict:
        return {
            "turn": self.turn,
            "z_pos": [_exemplar_doc(e) for e in self.z_pos],
            "z_neg": [_exemplar_doc(e) for e in self.z_neg],
        }

    @classmethod
    def from_document(cls, doc: Mapping) -> "IntentState":
        z_pos = tuple(_exemplar_from_doc(d) for d in doc["z_pos"])
        z_neg = tuple(_exemplar_from_doc(d) for d in doc["z_neg"])
        rejected = frozenset(
            e.source_region_id for e in z_neg if e.provenance == PROVENANCE_REGION
        )
        return cls(turn=int(doc["turn"]), z_pos=z_pos, z_neg=z_neg, rejected_region_ids=rejected)


def _exemplar_doc(e: Exemplar) -> dict:
    doc: dict = {"provenance": e.provenance, "embedding": [float(x) for x in e.embedding]}
    if e.source_region_id is not None:
        doc["source_region_id"] = e.source_region_id
    return doc


def _exemplar_from_doc(doc: Mapping) -> Exemplar:
    return Exemplar(
        embedding=l2_normalize(doc["embedding"]),
        provenance=doc["provenance"],
        source_region_id=doc.get("source_region_id"),
    )


def init_state(
    text_embedding: np.ndarray | None,
    image_embedding: np.ndarray | None,
    alpha: float,
    init_mode: str = INIT_FUSED,
) -> IntentState:
    """Build the turn-0 state from the initial prompt.

    ``fused`` stores one alpha-blended exemplar; ``separate`` stores the text
    and image embeddings as two positive exemplars when both are present.
    The negative set always starts empty.
    """
    if init_mode not in (INIT_FUSED, INIT_SEPARATE):
        raise ValueError(f"unknown init_mode {init_mode!r}")
    if init_mode == INIT_SEPARATE and text_embedding is not None and image_embedding is not None:
        positives = (
            Exemplar(l2_normalize(text_embedding), PROVENANCE_INITIAL),
            Exemplar(l2_normalize(image_embedding), PROVENANCE_INITIAL),
        )
    else:
        fused = fuse_query(text_embedding, image_embedding, alpha)
        positives = (Exemplar(fused, PROVENANCE_INITIAL),)
    return IntentState(turn=0, z_pos=positives, z_neg=(), rejected_region_ids=frozenset())


def apply_feedback(
    state: IntentState,
    feedback: Feedback,
    region_lookup: Mapping[int, np.ndarray] | Callable[[int], np.ndarray],
) -> IntentState:
    """Return the next state after one feedback event.

    Negative feedback adds the rejected region to the negative set; a
    refinement adds the chosen region or new prompt embedding to the positive
    set; a confirmation leaves both sets untouched. The turn counter advances
    in every case. Duplicate exemplars are absorbed by set semantics.
    """
    lookup = region_lookup.__getitem__ if isinstance(region_lookup, Mapping) else region_lookup

    def region_embedding(region_id: int) -> np.ndarray:
        try:
            return lookup(region_id)
        except (KeyError, IndexError):
            raise UnknownRegionError(f"region {region_id} is not in the bundle") from None

    turn = state.turn + 1
    if feedback.kind == FEEDBACK_CONFIRM:
        region_embedding(feedback.region_id)  # must still resolve
        return IntentState(
            turn=turn,
            z_pos=state.z_pos,
            z_neg=state.z_neg,
            rejected_region_ids=state.rejected_region_ids,
        )
    if feedback.kind == FEEDBACK_NEGATIVE:
        exemplar = Exemplar(
            l2_normalize(region_embedding(feedback.region_id)),
            PROVENANCE_REGION,
            source_region_id=feedback.region_id,
        )
        return IntentState(
            turn=turn,
            z_pos=state.z_pos,
            z_neg=_add(state.z_neg, exemplar),
            rejected_region_ids=state.rejected_region_ids | {feedback.region_id},
        )
    # positive-refinement
    if feedback.region_id is not None:
        exemplar = Exemplar(
            l2_normalize(region_embedding(feedback.region_id)),
            PROVENANCE_REGION,
            source_region_id=feedback.region_id,
        )
    else:
        exemplar = Exemplar(l2_normalize(feedback.new_prompt_embedding), PROVENANCE_TEXT)
    return IntentState(
        turn=turn,
        z_pos=_add(state.z_pos, exemplar),
        z_neg=state.z_neg,
        rejected_region_ids=state.rejected_region_ids,
    )


def _add(exemplars: tuple[Exemplar, ...], new: Exemplar) -> tuple[Exemplar, ...]:
    if any(e.dedup_key() == new.dedup_key() for e in exemplars):
        return exemplars
    return exemplars + (new,)
