"""
Level combinatorics of super-resolution crossbar nodes.

A node made of m memristors, each programmable to one of L stable conductance levels,
reaches every multiset of m levels. Since the order of memristors inside a node does not
change the node conductance, the number of reachable combinations is the number of
multisets, C(m+L-1, m), which is the m-th L-simplicial number:

| m \\ L | 1 | 2 | 3  | 4  | 5   |
|-------|---|---|----|----|-----|
| 1     | 1 | 2 | 3  | 4  | 5   |
| 2     | 1 | 3 | 6  | 10 | 15  |
| 3     | 1 | 4 | 10 | 20 | 35  |

That count assumes generic level values. Level sets with regular spacing make some sums
coincide, so catalogs report both the combinatorial count and the number of sums that stay
separated by more than a tolerance.

Everything here is a pure function of its arguments; all returned objects are immutable.
"""

import bisect
import itertools
import logging
import math
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

from superres.errors import DomainError, EnumerationTooLargeError, InfeasibleError, LevelRangeError

logger = logging.getLogger(__name__)

DEFAULT_EPSILON = 1e-9  # siemens
DEFAULT_ENUM_CAP = 10_000_000
MAX_M_PLUS_L = 64


@dataclass(frozen=True)
class LevelSet:
    """Ordered stable conductance values of one memristor, in siemens."""

    levels: Tuple[float, ...]

    def __post_init__(self):
        values = tuple(float(g) for g in self.levels)
        object.__setattr__(self, "levels", values)
        if not values:
            raise DomainError("A level set needs at least one conductance level")
        if any(not math.isfinite(g) or g <= 0 for g in values):
            raise DomainError(f"Conductance levels must be finite and positive, got {values}")
        if any(b <= a for a, b in zip(values, values[1:])):
            raise DomainError(f"Conductance levels must be strictly increasing, got {values}")

    @classmethod
    def from_microsiemens(cls, values: Iterable[float]) -> "LevelSet":
        return cls(tuple(v * 1e-6 for v in values))

    @property
    def L(self) -> int:
        return len(self.levels)

    @property
    def g_min(self) -> float:
        return self.levels[0]

    @property
    def g_max(self) -> float:
        return self.levels[-1]

    def __len__(self) -> int:
        return len(self.levels)

    def __getitem__(self, index: int) -> float:
        return self.levels[index]


@dataclass(frozen=True)
class NodeLevelMultiset:
    """Level indices held by the m memristors of one node, in canonical order.

    Canonical order is by level index, highest first. Because levels are strictly
    increasing this is also non-increasing conductance.
    """

    assignment: Tuple[int, ...]
    sum_conductance: float

    @classmethod
    def from_indices(cls, indices: Iterable[int], levels: LevelSet) -> "NodeLevelMultiset":
        canonical = tuple(sorted((int(i) for i in indices), reverse=True))
        if not canonical:
            raise DomainError("A node needs at least one memristor")
        if canonical[0] >= levels.L or canonical[-1] < 0:
            raise DomainError(f"Level index out of range [0, {levels.L}) in {canonical}")
        return cls(canonical, math.fsum(levels[i] for i in canonical))

    @property
    def m(self) -> int:
        return len(self.assignment)

    def conductances(self, levels: LevelSet) -> Tuple[float, ...]:
        return tuple(levels[i] for i in self.assignment)


@dataclass(frozen=True)
class LevelCatalog:
    entries: Tuple[NodeLevelMultiset, ...]
    combinatorial_count: int
    effective_count: int
    epsilon: float
    levels: LevelSet
    m: int

    @property
    def sums(self) -> Tuple[float, ...]:
        return tuple(e.sum_conductance for e in self.entries)

    def __len__(self) -> int:
        return len(self.entries)


def _check_positive_int(name: str, value: int) -> int:
    if isinstance(value, bool) or int(value) != value:
        raise DomainError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if value < 1:
        raise DomainError(f"{name} must be >= 1, got {value}")
    return value


def count_unique_levels(m: int, L: int) -> int:
    """Combinatorial count L_C = C(m+L-1, m) of level multisets for an m-memristor node."""
    m = _check_positive_int("m", m)
    L = _check_positive_int("L", L)
    if m + L > MAX_M_PLUS_L:
        raise LevelRangeError(f"m + L = {m + L} exceeds the supported bound of {MAX_M_PLUS_L}")
    return math.comb(m + L - 1, m)


def simplicial_sequence(m: int, L_max: int) -> List[int]:
    L_max = _check_positive_int("L_max", L_max)
    return [count_unique_levels(m, L) for L in range(1, L_max + 1)]


def count_distinct(sorted_values: Sequence[float], epsilon: float) -> int:
    """Number of clusters in sorted values when neighbours within epsilon merge."""
    if not sorted_values:
        return 0
    return 1 + sum(1 for a, b in zip(sorted_values, sorted_values[1:]) if b - a > epsilon)


def enumerate_node_levels(
    levels: LevelSet,
    m: int,
    epsilon: float = DEFAULT_EPSILON,
    cap: int = DEFAULT_ENUM_CAP,
) -> LevelCatalog:
    """Every level multiset of an m-memristor parallel node, sorted by summed conductance."""
    if epsilon < 0:
        raise DomainError(f"epsilon must be >= 0, got {epsilon}")
    total = count_unique_levels(m, levels.L)
    if total > cap:
        raise EnumerationTooLargeError(total, cap)

    # Descending index input makes every emitted tuple already canonical.
    descending = range(levels.L - 1, -1, -1)
    entries = [
        NodeLevelMultiset(combo, math.fsum(levels[i] for i in combo))
        for combo in itertools.combinations_with_replacement(descending, m)
    ]
    entries.sort(key=lambda e: (e.sum_conductance, e.assignment))
    effective = count_distinct([e.sum_conductance for e in entries], epsilon)
    logger.debug("Enumerated %d level combinations (m=%d, L=%d), %d effective", total, m, levels.L, effective)
    return LevelCatalog(tuple(entries), total, effective, epsilon, levels, int(m))


def select_node_size(L: int, required_levels: int) -> int:
    """Smallest m whose node reaches at least ``required_levels`` level combinations."""
    L = _check_positive_int("L", L)
    required_levels = _check_positive_int("required_levels", required_levels)
    if required_levels == 1:
        return 1
    if L == 1:
        raise InfeasibleError("Single-level memristors never give more than one node level")
    m = 1
    while count_unique_levels(m, L) < required_levels:
        m += 1
    return m


def largest_gap(sorted_values: Sequence[float]) -> float:
    if len(sorted_values) < 2:
        return 0.0
    return max(b - a for a, b in zip(sorted_values, sorted_values[1:]))


def nearest_index(sorted_values: Sequence[float], target: float) -> int:
    """Index of the value closest to target; ties go to the lower value."""
    pos = bisect.bisect_left(sorted_values, target)
    if pos == 0:
        return 0
    if pos == len(sorted_values):
        return len(sorted_values) - 1
    below, above = sorted_values[pos - 1], sorted_values[pos]
    return pos - 1 if target - below <= above - target else pos
