"""Executable check of the one-rejection disambiguation guarantee.

When a distractor ties or beats the true target on query similarity, one
negative feedback on the distractor flips the ranking for any penalty weight
above (sim_dq - sim_tq) / (1 - sim_td). These helpers compute that bound and
verify the flip on concrete vectors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInstanceError
from .intent import FEEDBACK_NEGATIVE, Feedback, apply_feedback, init_state
from .ranking import RankerConfig, score_region
from .vecmath import cosine

# Quotient blows up as sim_td -> 1; anything this close is indistinguishable.
_DEGENERATE_TOL = 1e-9


@dataclass(frozen=True)
class AmbiguityInstance:
    """Pairwise similarities of (query, target, distractor)."""

    sim_dq: float  # distractor vs query
    sim_tq: float  # target vs query
    sim_td: float  # target vs distractor

    def __post_init__(self) -> None:
        for name in ("sim_dq", "sim_tq", "sim_td"):
            value = getattr(self, name)
            if not -1.0 <= value <= 1.0:
                raise ValueError(f"{name}={value} outside [-1, 1]")

    @property
    def is_ambiguous(self) -> bool:
        return self.sim_dq >= self.sim_tq

    @classmethod
    def from_vectors(
        cls, query: np.ndarray, target: np.ndarray, distractor: np.ndarray
    ) -> "AmbiguityInstance":
        return cls(
            sim_dq=cosine(distractor, query),
            sim_tq=cosine(target, query),
            sim_td=cosine(target, distractor),
        )


def min_resolving_lambda(instance: AmbiguityInstance) -> float:
    """Infimum penalty weight that ranks the target above the rejected distractor.

    The inequality is strict, so callers must add a margin on top of the
    returned value. Non-negative whenever the instance is ambiguous.
    """
    if instance.sim_td >= 1.0 - _DEGENERATE_TOL:
        raise DegenerateInstanceError(
            f"sim_td={instance.sim_td} leaves target and distractor indistinguishable"
        )
    return (instance.sim_dq - instance.sim_tq) / (1.0 - instance.sim_td)


def verify_resolution(
    query: np.ndarray,
    target: np.ndarray,
    distractor: np.ndarray,
    negative_weight: float,
) -> bool:
    """True iff rejecting the distractor puts the target strictly above it.

    Builds the post-rejection state (positives: the query; negatives: the
    distractor) and compares the two contrastive scores at the given weight.
    """
    state = init_state(query, None, alpha=1.0)
    state = apply_feedback(
        state, Feedback(FEEDBACK_NEGATIVE, region_id=0), {0: distractor}
    )
    cfg = RankerConfig(negative_weight=negative_weight)
    target_score = score_region(target, state, cfg).score
    distractor_score = score_region(distractor, state, cfg).score
    return target_score > distractor_score
