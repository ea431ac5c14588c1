"""Send-on-delta and innovation-based trigger rules."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import EmptyParticleSet
from .gaussian import Box


class TriggerKind(str, enum.Enum):
    SOD = "SOD"
    IBT = "IBT"


@dataclass(frozen=True)
class TriggerRule:
    """``H = {y : ||F (center - y)||_inf <= delta}`` with diagonal ``F``.

    ``weight`` holds the diagonal of F; ``None`` means identity. ``delta = 0``
    is allowed and yields a point set, i.e. every measurement triggers.
    """

    kind: TriggerKind
    delta: float
    weight: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", TriggerKind(self.kind))
        if not self.delta >= 0:
            raise ValueError("delta must be nonnegative")
        if self.weight is not None:
            w = tuple(float(v) for v in np.atleast_1d(self.weight))
            if any(v <= 0 for v in w):
                raise ValueError("weight entries must be positive")
            object.__setattr__(self, "weight", w)

    def half_width(self, m: int) -> np.ndarray:
        if self.weight is None:
            return np.full(m, float(self.delta))
        if len(self.weight) != m:
            raise ValueError(f"weight has {len(self.weight)} entries, measurement has {m}")
        return self.delta / np.asarray(self.weight)


@dataclass(frozen=True)
class Event:
    y: np.ndarray
    gamma = 1

    def __post_init__(self):
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        if not np.all(np.isfinite(y)):
            raise ValueError("event measurement must be finite")
        object.__setattr__(self, "y", y)


@dataclass(frozen=True)
class NoEvent:
    box: Box
    gamma = 0


HybridMeasurement = Union[Event, NoEvent]


def build_set(rule: TriggerRule, center) -> Box:
    center = np.atleast_1d(np.asarray(center, dtype=float))
    hw = rule.half_width(center.size)
    return Box(center - hw, center + hw)


def decide(rule: TriggerRule, y, h: Box) -> HybridMeasurement:
    """Event iff ``y`` lies strictly outside ``h``."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if h.contains(y):
        return NoEvent(h)
    return Event(y)


def ibt_center(propagated, model, k: int) -> np.ndarray:
    """Weighted average of the measurement mean over one-step-predicted particles."""
    if propagated.N == 0:
        raise EmptyParticleSet("cannot form a prediction from zero particles")
    hx = model.measurement_mean(propagated.particles, k)
    return propagated.weights @ hx
