"""Expression taxonomy, continuous affect vectors, and the confusing-pair registry.

Everything here is an immutable value; all operations are pure functions.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Sequence

from .errors import (
    NeutralNotAllowed,
    OutOfRange,
    UnknownLabel,
    WrongArity,
)


class ExpressionId(IntEnum):
    """The 13 expression labels: Neutral plus 6 basic and 6 extended emotions."""

    NEUTRAL = 0
    HAPPY = 1
    SAD = 2
    ANGRY = 3
    FEAR = 4
    SURPRISED = 5
    DISGUST = 6
    CONFUSED = 7
    CONTEMPT = 8
    CONFIDENT = 9
    SHY = 10
    SLEEPY = 11
    ANXIOUS = 12

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, label: str) -> "ExpressionId":
        """Resolve a label string, accepting the alias spellings of scoring output."""
        key = label.strip().lower()
        if key in _LABEL_TO_ID:
            return _LABEL_TO_ID[key]
        raise UnknownLabel(label)


BASIC_SIX = (
    ExpressionId.HAPPY,
    ExpressionId.SAD,
    ExpressionId.ANGRY,
    ExpressionId.FEAR,
    ExpressionId.SURPRISED,
    ExpressionId.DISGUST,
)

TARGET_TWELVE = tuple(ExpressionId(c) for c in range(1, 13))

# Alternate spellings emitted by the scoring prompt, mapped onto the taxonomy.
LABEL_ALIASES = {
    "happiness": ExpressionId.HAPPY,
    "sadness": ExpressionId.SAD,
    "anger": ExpressionId.ANGRY,
    "surprise": ExpressionId.SURPRISED,
    "confusion": ExpressionId.CONFUSED,
    "embarrassment": ExpressionId.SHY,
    "confidence": ExpressionId.CONFIDENT,
    "drowsiness": ExpressionId.SLEEPY,
    "nervousness": ExpressionId.ANXIOUS,
}

_LABEL_TO_ID: dict[str, ExpressionId] = {e.label: e for e in ExpressionId}
_LABEL_TO_ID.update(LABEL_ALIASES)


@dataclass(frozen=True)
class AffectVector:
    """12 continuous expression scores in [0,1], indexed by non-neutral ExpressionId."""

    scores: tuple[float, ...]

    def __post_init__(self):
        if len(self.scores) != 12:
            raise WrongArity(len(self.scores))
        for i, s in enumerate(self.scores):
            if not (0.0 <= s <= 1.0):
                raise OutOfRange("affect score", s, index=i)

    def score(self, expr: ExpressionId) -> float:
        if expr == ExpressionId.NEUTRAL:
            raise NeutralNotAllowed("affect vectors carry no neutral entry")
        return self.scores[expr - 1]

    def to_list(self) -> list[float]:
        return list(self.scores)

    @classmethod
    def from_list(cls, raw: Sequence[float]) -> "AffectVector":
        return validate_affect_vector(raw)


def validate_affect_vector(raw: Sequence[float]) -> AffectVector:
    """Validate a raw 12-entry score list and return the typed vector.

    Raises WrongArity on bad length and OutOfRange (with index and value) on
    entries outside [0,1].
    """
    values = [float(x) for x in raw]
    return AffectVector(tuple(values))


def dominant_expression(v: AffectVector) -> ExpressionId:
    """Argmax over the 12 scores; ties break toward the lowest expression code."""
    best = 0
    for i in range(1, 12):
        if v.scores[i] > v.scores[best]:
            best = i
    return ExpressionId(best + 1)


@dataclass(frozen=True)
class ConfusingPairRegistry:
    """Ordered list of unordered expression pairs over which mSCR is computed."""

    pairs: tuple[tuple[ExpressionId, ExpressionId], ...]

    def __post_init__(self):
        seen = set()
        canon = []
        for i, j in self.pairs:
            _check_not_neutral(i)
            _check_not_neutral(j)
            if i == j:
                raise ValueError(f"self-pair not allowed: {i!r}")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise ValueError(f"duplicate pair: {key}")
            seen.add(key)
            canon.append((ExpressionId(key[0]), ExpressionId(key[1])))
        object.__setattr__(self, "pairs", tuple(canon))

    def contains(self, i: ExpressionId, j: ExpressionId) -> bool:
        """Symmetric membership test; Neutral is rejected."""
        _check_not_neutral(i)
        _check_not_neutral(j)
        return (min(i, j), max(i, j)) in {(a, b) for a, b in self.pairs}

    def members(self) -> tuple[ExpressionId, ...]:
        """All expressions that appear in some registered pair, in registry order."""
        out: list[ExpressionId] = []
        for a, b in self.pairs:
            for e in (a, b):
                if e not in out:
                    out.append(e)
        return tuple(out)

    def to_list(self) -> list[list[str]]:
        return [[a.label, b.label] for a, b in self.pairs]

    @classmethod
    def from_list(cls, raw: Iterable[Sequence[str]]) -> "ConfusingPairRegistry":
        return cls(
            tuple(
                (ExpressionId.from_label(a), ExpressionId.from_label(b))
                for a, b in raw
            )
        )


def _check_not_neutral(e: ExpressionId) -> None:
    if e == ExpressionId.NEUTRAL:
        raise NeutralNotAllowed("registry pairs must be target expressions")


DEFAULT_REGISTRY = ConfusingPairRegistry(
    (
        (ExpressionId.FEAR, ExpressionId.SURPRISED),
        (ExpressionId.ANGRY, ExpressionId.DISGUST),
    )
)


@dataclass(frozen=True)
class SampleRecord:
    """One annotated image: identity, target expression, intensity, affect scores."""

    sample_id: str
    identity_id: str
    domain: str
    target: ExpressionId
    alpha_gt: float
    affect: AffectVector

    def __post_init__(self):
        if self.domain not in ("real", "anime"):
            raise ValueError(f"domain must be 'real' or 'anime', got {self.domain!r}")
        if not (0.0 <= self.alpha_gt <= 1.0):
            raise OutOfRange("alpha_gt", self.alpha_gt)

    def to_json_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "identity_id": self.identity_id,
            "domain": self.domain,
            "target": self.target.label,
            "alpha_gt": self.alpha_gt,
            "affect": self.affect.to_list(),
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "SampleRecord":
        return cls(
            sample_id=str(obj["sample_id"]),
            identity_id=str(obj["identity_id"]),
            domain=str(obj["domain"]),
            target=ExpressionId.from_label(str(obj["target"])),
            alpha_gt=float(obj["alpha_gt"]),
            affect=validate_affect_vector(obj["affect"]),
        )
