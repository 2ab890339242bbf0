"""Integer sensitivity vectors and the sets S_{D,k}.

A vector belongs to S_{D,k} when every contiguous interval sum lies in
[-D, D] and its l1 norm is at most k.  S_{1,k} is exactly the set of
alternating {-1, 0, 1} vectors with at most k non-zeros.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb
from typing import Iterator, Sequence

from .errors import FeasibilityError

# Plain tuples are the vector representation; they are hashable and immutable.
SensitivityVector = tuple

INT64_MAX = 2**63 - 1

ENUMERATION_T_LIMIT = 22
ENUMERATION_SIZE_LIMIT = 10**7


@dataclass(frozen=True)
class SetParams:
    """Parameters (D, k, T) of the set S_{D,k} of length-T vectors."""

    D: int
    k: int
    T: int

    def __post_init__(self):
        for name in ("D", "k", "T"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")


@dataclass(frozen=True)
class Decomposition:
    parts: tuple[SensitivityVector, ...]
    part_weights: tuple[int, ...]


def as_vector(v: Sequence[int]) -> SensitivityVector:
    """Validate and convert a sequence of integers to a SensitivityVector.

    Raises OverflowError when an entry or a prefix sum leaves the signed
    64-bit range.
    """
    out = []
    acc = 0
    for x in v:
        if isinstance(x, bool) or int(x) != x:
            raise TypeError(f"entries must be integers, got {x!r}")
        x = int(x)
        acc += x
        if abs(x) > INT64_MAX or abs(acc) > INT64_MAX:
            raise OverflowError("entry or prefix sum outside the 64-bit range")
        out.append(x)
    if not out:
        raise ValueError("a sensitivity vector needs at least one entry")
    return tuple(out)


def l1(v: Sequence[int]) -> int:
    return sum(abs(x) for x in v)


def interval_sum_bound(v: Sequence[int]) -> int:
    """Largest |sum| over contiguous intervals, via max prefix - min prefix."""
    v = as_vector(v)
    acc = lo = hi = 0
    for x in v:
        acc += x
        lo = min(lo, acc)
        hi = max(hi, acc)
    return hi - lo


def is_member(v: Sequence[int], p: SetParams) -> bool:
    v = as_vector(v)
    if len(v) != p.T:
        raise ValueError(f"vector has length {len(v)}, expected T={p.T}")
    return interval_sum_bound(v) <= p.D and l1(v) <= p.k


def is_alternating(v: Sequence[int]) -> bool:
    """True iff the non-zero entries of a {-1,0,1} vector alternate in sign."""
    v = as_vector(v)
    last = 0
    for x in v:
        if x not in (-1, 0, 1):
            raise ValueError(f"entry {x} outside {{-1, 0, 1}}")
        if x == 0:
            continue
        if x == last:
            return False
        last = x
    return True


def decompose(v: Sequence[int], p: SetParams) -> Decomposition:
    """Split a member of S_{D,k} into at most D alternating vectors.

    A running counter walks up one level for each positive unit and down
    one level for each negative unit.  A positive unit lands in the part of
    the level reached, a negative unit in the part of the level left, so
    each part sees alternating signs.
    """
    v = as_vector(v)
    if not is_member(v, p):
        raise ValueError("vector is not a member of S_{D,k}")
    T = len(v)
    parts: dict[int, list[int]] = {}
    level = 0
    for t, x in enumerate(v):
        for _ in range(abs(x)):
            if x > 0:
                level += 1
                parts.setdefault(level, [0] * T)[t] += 1
            else:
                parts.setdefault(level, [0] * T)[t] -= 1
                level -= 1
    order = sorted(parts, key=lambda d: (0, d) if d > 0 else (1, -d))
    kept = [tuple(parts[d]) for d in order if any(parts[d])]
    return Decomposition(tuple(kept), tuple(l1(part) for part in kept))


def count_S1k(T: int, k: int) -> int:
    return 1 + sum(2 * comb(T, s) for s in range(1, min(k, T) + 1))


def enumerate_S1k(T: int, k: int, limit: int = ENUMERATION_T_LIMIT) -> Iterator[SensitivityVector]:
    """Yield every alternating vector of length T with at most k non-zeros."""
    if T < 1 or k < 1:
        raise ValueError("T and k must be positive")
    if T > limit:
        raise FeasibilityError(f"T={T} exceeds the enumeration limit {limit}")
    yield (0,) * T
    for s in range(1, min(k, T) + 1):
        for support in itertools.combinations(range(T), s):
            for lead in (1, -1):
                vec = [0] * T
                sign = lead
                for pos in support:
                    vec[pos] = sign
                    sign = -sign
                yield tuple(vec)


def enumerate_SDk(T: int, D: int, k: int, limit: int = ENUMERATION_SIZE_LIMIT) -> Iterator[SensitivityVector]:
    """Yield every member of S_{D,k} of length T.

    Depth-first search over entries in [-D, D], pruning on the running
    prefix range and the remaining l1 budget.
    """
    if T < 1 or D < 1 or k < 1:
        raise ValueError("T, D and k must be positive")
    if (2 * D + 1) ** T > limit:
        raise FeasibilityError(f"(2D+1)^T = {(2 * D + 1) ** T} exceeds the enumeration limit {limit}")
    vec = [0] * T

    def walk(t, acc, lo, hi, budget):
        if t == T:
            yield tuple(vec)
            return
        # the new prefix must keep max - min within D
        for x in range(max(-D, -budget, hi - D - acc), min(D, budget, lo + D - acc) + 1):
            nxt = acc + x
            vec[t] = x
            yield from walk(t + 1, nxt, min(lo, nxt), max(hi, nxt), budget - abs(x))
        vec[t] = 0

    yield from walk(0, 0, 0, 0, k)
