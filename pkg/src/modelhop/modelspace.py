"""Inclusion vectors, add/remove/swap neighborhoods and move-type schedules."""

from __future__ import annotations

import bisect
import enum
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from . import core
from .errors import AllInadmissible, EmptyNeighborhood, InadmissibleMove


class InclusionVector:
    """Binary model indicator kept as both an int bitset and a sorted index tuple.

    Bit ``i`` of ``bits`` is set iff predictor ``i`` (0-based) is active.
    Instances are immutable and hash on ``(p, bits)``.
    """

    __slots__ = ("p", "bits", "active")

    def __init__(self, p: int, bits: int = 0, active: tuple[int, ...] | None = None):
        if bits < 0 or bits >> p:
            raise IndexError(f"bitset has entries outside [0, {p})")
        if active is None:
            active = tuple(i for i in range(p) if bits >> i & 1)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "active", active)

    def __setattr__(self, name, value):
        raise AttributeError("InclusionVector is immutable")

    @classmethod
    def empty(cls, p: int) -> "InclusionVector":
        return cls(p, 0, ())

    @classmethod
    def from_indices(cls, p: int, indices) -> "InclusionVector":
        idx = sorted(set(int(i) for i in indices))
        if idx and (idx[0] < 0 or idx[-1] >= p):
            raise IndexError(f"index out of range [0, {p})")
        bits = 0
        for i in idx:
            bits |= 1 << i
        return cls(p, bits, tuple(idx))

    @classmethod
    def from_array(cls, arr) -> "InclusionVector":
        arr = np.asarray(arr).astype(bool)
        return cls.from_indices(arr.size, np.flatnonzero(arr))

    @property
    def size(self) -> int:
        return len(self.active)

    def __len__(self):
        return len(self.active)

    def __contains__(self, i) -> bool:
        return bool(self.bits >> int(i) & 1)

    def __eq__(self, other):
        if not isinstance(other, InclusionVector):
            return NotImplemented
        return self.p == other.p and self.bits == other.bits

    def __hash__(self):
        return hash((self.p, self.bits))

    def __repr__(self):
        return f"InclusionVector(p={self.p}, active={list(self.active)})"

    def toggle(self, i: int) -> "InclusionVector":
        i = int(i)
        if not 0 <= i < self.p:
            raise IndexError(f"index {i} out of range [0, {self.p})")
        act = list(self.active)
        if self.bits >> i & 1:
            act.remove(i)
        else:
            bisect.insort(act, i)
        return InclusionVector(self.p, self.bits ^ (1 << i), tuple(act))

    def swap(self, remove: int, add: int) -> "InclusionVector":
        if remove not in self or add in self:
            raise InadmissibleMove(f"swap needs {remove} active and {add} inactive")
        return self.toggle(remove).toggle(add)

    def to_array(self) -> np.ndarray:
        out = np.zeros(self.p, dtype=bool)
        out[list(self.active)] = True
        return out

    def lex_key(self) -> str:
        """0/1 string over predictors 0..p-1; smaller string = lexicographically smaller."""
        return "".join("1" if self.bits >> i & 1 else "0" for i in range(self.p))


def toggle(gamma: InclusionVector, i: int) -> InclusionVector:
    """Flip predictor ``i`` in ``gamma``."""
    return gamma.toggle(i)


class MoveType(str, enum.Enum):
    ADD = "add"
    REMOVE = "remove"
    SWAP = "swap"

    @property
    def backward(self) -> "MoveType":
        return _BACKWARD[self]


_BACKWARD = {MoveType.ADD: MoveType.REMOVE, MoveType.REMOVE: MoveType.ADD, MoveType.SWAP: MoveType.SWAP}
MOVES = (MoveType.ADD, MoveType.REMOVE, MoveType.SWAP)


class MoveWeights(NamedTuple):
    add: float
    remove: float
    swap: float

    def __getitem__(self, key):
        if isinstance(key, MoveType):
            return getattr(self, key.name.lower())
        return tuple.__getitem__(self, key)


Schedule = Callable[[int, int], MoveWeights]


def default_schedule(size: int, p: int) -> MoveWeights:
    if size == 0:
        return MoveWeights(1.0, 0.0, 0.0)
    if size == p:
        return MoveWeights(0.0, 1.0, 0.0)
    return MoveWeights(1 / 3, 1 / 3, 1 / 3)


@dataclass(frozen=True)
class LightTailSchedule:
    """Monotone add weights with a swap weight concentrated at sizes <= ``d_star``.

    Swap weight is 1/3 up to ``d_star`` and decays geometrically after it so
    that its total mass over ``d_star < |gamma| < p`` stays below ``delta``.
    """

    d_star: int
    delta: float = 0.1

    def __call__(self, size: int, p: int) -> MoveWeights:
        if size == 0:
            return MoveWeights(1.0, 0.0, 0.0)
        if size == p:
            return MoveWeights(0.0, 1.0, 0.0)
        ratio = 3 * self.delta / (1 + 6 * self.delta)
        ws = 1 / 3 if size <= self.d_star else ratio ** (size - self.d_star) / 3
        wa = 2 / 3 * (1 - size / p)
        return MoveWeights(wa, max(0.0, 1.0 - wa - ws), ws)


def move_weights(size: int, p: int, schedule: Schedule | None = None) -> MoveWeights:
    """Move-type probabilities at model size ``size``; validates the schedule."""
    if not 0 <= size <= p:
        raise ValueError(f"model size {size} outside [0, {p}]")
    w = (schedule or default_schedule)(size, p)
    if min(w) < 0 or abs(sum(w) - 1.0) > 1e-12:
        raise ValueError(f"invalid move weights {w} at size {size}")
    if (size == 0 and w.add != 1.0) or (size == p and w.remove != 1.0):
        raise ValueError("schedule must force add at |gamma|=0 and remove at |gamma|=p")
    if w.swap > 0 and not 0 < size < p:
        raise ValueError("swap weight must vanish at the size boundaries")
    return w


@dataclass
class Neighborhood:
    move: MoveType
    proposals: list[InclusionVector]
    provenance: list = field(default_factory=list)
    scores: np.ndarray | None = None

    def __len__(self):
        return len(self.proposals)


def enumerate_neighborhood(gamma: InclusionVector, move: MoveType) -> Neighborhood:
    """All models one add, remove or swap away from ``gamma`` (unscored)."""
    p, k = gamma.p, gamma.size
    inactive = [i for i in range(p) if i not in gamma]
    if move is MoveType.ADD:
        if k >= p:
            raise InadmissibleMove("add needs an inactive predictor")
        return Neighborhood(move, [gamma.toggle(i) for i in inactive], inactive)
    if move is MoveType.REMOVE:
        if k == 0:
            raise InadmissibleMove("remove needs an active predictor")
        return Neighborhood(move, [gamma.toggle(i) for i in gamma.active], list(gamma.active))
    if not 0 < k < p:
        raise InadmissibleMove("swap needs 0 < |gamma| < p")
    pairs = [(a, r) for r in gamma.active for a in inactive]
    return Neighborhood(move, [gamma.swap(r, a) for a, r in pairs], pairs)


def select_proportional(log_scores, rng) -> tuple[int, float]:
    """Draw index k with probability exp(score_k - logsumexp(scores)).

    Returns ``(k, logsumexp(scores))``. Consumes exactly one uniform.
    """
    scores = np.ascontiguousarray(log_scores, dtype=float)
    if scores.size == 0:
        raise EmptyNeighborhood("cannot select from an empty neighborhood")
    k, lse = core.select_index(scores, rng.random())
    if k < 0:
        raise AllInadmissible("every candidate has log score -inf")
    return int(k), float(lse)
