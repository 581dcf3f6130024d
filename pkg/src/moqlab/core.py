"""Vector rewards, thresholded lexicographic ordering and schedules.

Everything here is a pure function of its arguments. Vectors are plain
sequences of numbers, so the same code serves float-valued agent tables
and the exact ``Fraction`` arithmetic used by the oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

__all__ = [
    "InvalidInput",
    "InvalidConfiguration",
    "RewardVector",
    "TloUtility",
    "Schedule",
    "tlo_clip",
    "tlo_compare",
    "tlo_argmax",
    "tlo_greedy",
    "rank_by_tlo",
    "softmax_rank_probabilities",
    "softmax_rank_select",
    "schedule_value",
]


class InvalidInput(ValueError):
    """Raised when an operation receives arguments outside its domain."""


class InvalidConfiguration(ValueError):
    """Raised when a model, schedule or agent configuration is malformed."""


class RewardVector(tuple):
    """Immutable per-objective reward vector.

    Addition and scaling are componentwise and keep the element type, so
    ``Fraction`` components stay exact.
    """

    __slots__ = ()

    def __new__(cls, components=()):
        return super().__new__(cls, components)

    @classmethod
    def zeros(cls, n: int, zero=0) -> "RewardVector":
        return cls((zero,) * n)

    def _check(self, other):
        if len(other) != len(self):
            raise InvalidInput(
                f"dimension mismatch: {len(self)} vs {len(other)} objectives"
            )

    def __add__(self, other):
        self._check(other)
        return RewardVector(a + b for a, b in zip(self, other))

    __radd__ = __add__

    def __sub__(self, other):
        self._check(other)
        return RewardVector(a - b for a, b in zip(self, other))

    def __mul__(self, k):
        return RewardVector(a * k for a in self)

    __rmul__ = __mul__

    def __neg__(self):
        return RewardVector(-a for a in self)

    def __repr__(self):
        return f"RewardVector({', '.join(str(c) for c in self)})"


@dataclass(frozen=True)
class TloUtility:
    """Thresholds for objectives ``1..n-1``; the last objective is unthresholded."""

    thresholds: tuple

    def __post_init__(self):
        object.__setattr__(self, "thresholds", tuple(self.thresholds))

    @property
    def n_objectives(self) -> int:
        return len(self.thresholds) + 1


def _check_dim(v: Sequence, u: TloUtility) -> None:
    if len(v) != len(u.thresholds) + 1:
        raise InvalidInput(
            f"vector has {len(v)} objectives, utility expects {u.n_objectives}"
        )


def tlo_clip(v: Sequence, u: TloUtility) -> RewardVector:
    """Cap every thresholded objective at its threshold."""
    _check_dim(v, u)
    th = u.thresholds
    return RewardVector(
        tuple(min(v[i], th[i]) for i in range(len(th))) + (v[-1],)
    )


def _cmp(a: Sequence, b: Sequence, th: tuple) -> int:
    # unchecked hot path shared by the agents
    for i, t in enumerate(th):
        x = a[i] if a[i] < t else t
        y = b[i] if b[i] < t else t
        if x != y:
            return 1 if x > y else -1
    x, y = a[-1], b[-1]
    if x != y:
        return 1 if x > y else -1
    return 0


def tlo_compare(a: Sequence, b: Sequence, u: TloUtility) -> int:
    """Return 1 if ``a`` is preferred, -1 if ``b`` is, 0 if they are equivalent."""
    _check_dim(a, u)
    _check_dim(b, u)
    return _cmp(a, b, u.thresholds)


def tlo_argmax(values: Sequence[Sequence], u: TloUtility) -> set[int]:
    """Indices of all TLO-maximal entries of ``values``."""
    if len(values) == 0:
        raise InvalidInput("tlo_argmax of an empty list")
    for v in values:
        _check_dim(v, u)
    th = u.thresholds
    best = [0]
    for i in range(1, len(values)):
        c = _cmp(values[i], values[best[0]], th)
        if c > 0:
            best = [i]
        elif c == 0:
            best.append(i)
    return set(best)


def tlo_greedy(values: Sequence[Sequence], thresholds: tuple) -> int:
    """Lowest-index TLO-maximal entry. No validation; used in inner loops."""
    best = 0
    for i in range(1, len(values)):
        if _cmp(values[i], values[best], thresholds) > 0:
            best = i
    return best


def rank_by_tlo(values: Sequence[Sequence], thresholds: tuple) -> list[int]:
    """Competition ranks: rank of an entry is how many entries beat it.

    The best entries get rank 0 and tied entries share the better rank.
    """
    k = len(values)
    ranks = [0] * k
    for i in range(k):
        for j in range(i + 1, k):
            c = _cmp(values[i], values[j], thresholds)
            if c > 0:
                ranks[j] += 1
            elif c < 0:
                ranks[i] += 1
    return ranks


def softmax_rank_probabilities(
    values: Sequence[Sequence], u: TloUtility, temperature: float
) -> list[float]:
    """Selection probabilities proportional to ``exp(-rank / temperature)``."""
    if not temperature > 0:
        raise InvalidInput(f"temperature must be positive, got {temperature}")
    if len(values) == 0:
        raise InvalidInput("softmax selection over an empty list")
    for v in values:
        _check_dim(v, u)
    weights = [math.exp(-r / temperature) for r in rank_by_tlo(values, u.thresholds)]
    total = sum(weights)
    return [w / total for w in weights]


def softmax_rank_select(
    values: Sequence[Sequence], u: TloUtility, temperature: float, rng
) -> int:
    """Sample an index from :func:`softmax_rank_probabilities`.

    ``rng`` is a ``numpy.random.Generator``; exactly one uniform draw is
    consumed per call.
    """
    probs = softmax_rank_probabilities(values, u, temperature)
    return _sample(probs, rng.random())


def _sample(probs: Sequence[float], x: float) -> int:
    acc = 0.0
    for i, p in enumerate(probs):
        acc += p
        if x < acc:
            return i
    return len(probs) - 1


@dataclass(frozen=True)
class Schedule:
    """Per-episode parameter value, either constant or linearly decayed.

    ``horizon`` is the episode at which a linear decay reaches ``final``;
    the value is held at ``final`` afterwards.
    """

    kind: str = "constant"
    initial: float = 0.01
    final: float | None = None
    horizon: int = 0

    def __post_init__(self):
        if self.kind not in ("constant", "linear-decay"):
            raise InvalidConfiguration(f"unknown schedule kind {self.kind!r}")
        if self.kind == "linear-decay":
            if self.final is None:
                raise InvalidConfiguration("linear-decay schedule needs a final value")
            if self.horizon <= 0:
                raise InvalidConfiguration("linear-decay schedule needs horizon > 0")

    @classmethod
    def constant(cls, value: float) -> "Schedule":
        return cls("constant", value)

    @classmethod
    def linear(cls, initial: float, final: float, horizon: int) -> "Schedule":
        return cls("linear-decay", initial, final, horizon)

    def __call__(self, episode: int) -> float:
        return schedule_value(self, episode)


def schedule_value(s: Schedule, episode: int) -> float:
    if episode < 0:
        raise InvalidInput(f"episode must be non-negative, got {episode}")
    if s.kind == "constant":
        return s.initial
    if episode >= s.horizon:
        return s.final
    return s.initial + (s.final - s.initial) * (episode / s.horizon)
