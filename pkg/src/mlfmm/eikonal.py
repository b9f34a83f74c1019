"""First-order upwind eikonal update and the partial fast-marching sweep.

Values are computed in time units (the undiscounted eikonal solution T).
The Kruzkov transform ``v = 1 - exp(-T)`` is applied afterwards where a
bounded value is needed; it is strictly increasing, so acceptance order and
sub-level sets are the same in either variable.
"""
from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .grid import RestrictedGrid

INF = math.inf

FAR, NARROW, ACCEPTED = "far", "narrow", "accepted"

# Pops between two wall-clock checks when a deadline is set.
_DEADLINE_EVERY = 4096


class BudgetExceeded(RuntimeError):
    """Raised when a solve runs past its wall-clock deadline."""


@dataclass(frozen=True)
class SpeedField:
    """Positive isotropic speed ``f(x)`` with known bounds ``f_lo <= f <= f_hi``."""

    evaluator: Callable[[np.ndarray], np.ndarray]
    f_lo: float
    f_hi: float
    value: float | None = None  # set for constant fields; enables the fast path
    name: str = "custom"

    def __post_init__(self):
        if not 0 < self.f_lo <= self.f_hi < INF:
            raise ValueError(f"speed bounds must satisfy 0 < f_lo <= f_hi < inf, got {self.f_lo}, {self.f_hi}")

    @classmethod
    def constant(cls, value: float = 1.0) -> "SpeedField":
        value = float(value)
        return cls(lambda p: np.full(len(np.atleast_2d(p)), value), value, value, value, f"constant({value:g})")

    @property
    def is_constant(self) -> bool:
        return self.value is not None

    def __call__(self, points: np.ndarray) -> np.ndarray:
        f = np.asarray(self.evaluator(np.atleast_2d(np.asarray(points, dtype=float))), dtype=float)
        tol = 1e-12 * self.f_hi
        if np.any(f < self.f_lo - tol) or np.any(f > self.f_hi + tol):
            raise ValueError(f"speed field {self.name!r} left its declared bounds [{self.f_lo}, {self.f_hi}]")
        return f


@dataclass(frozen=True)
class FrontSets:
    """Flat node indices where a march starts (value 0) and where it may stop."""

    start: frozenset[int]
    end: frozenset[int] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "start", frozenset(int(s) for s in self.start))
        object.__setattr__(self, "end", frozenset(int(e) for e in self.end))
        if not self.start:
            raise ValueError("start set is empty")

    @classmethod
    def from_indices(cls, g: RestrictedGrid, start: Iterable[Sequence[int]],
                     end: Iterable[Sequence[int]] = ()) -> "FrontSets":
        return cls(frozenset(g.base.flat(s) for s in start), frozenset(g.base.flat(e) for e in end))


@dataclass
class ValueField:
    grid: RestrictedGrid
    T: dict[int, float]
    accepted: set[int]
    acceptance_order: list[int]
    start: frozenset[int]
    missing_end: frozenset[int] = field(default_factory=frozenset)

    @property
    def reached_end(self) -> bool:
        return not self.missing_end

    @property
    def visited(self) -> int:
        """Nodes that ever held a finite value (Narrow or Accepted)."""
        return len(self.T)

    def state(self, flat: int) -> str:
        if flat in self.accepted:
            return ACCEPTED
        return NARROW if flat in self.T else FAR

    def time(self, idx: Sequence[int]) -> float:
        return self.T.get(self.grid.base.flat(idx), INF)

    def accepted_array(self) -> np.ndarray:
        return np.fromiter(self.acceptance_order, dtype=np.int64, count=len(self.acceptance_order))

    def accepted_times(self) -> np.ndarray:
        T = self.T
        return np.fromiter((T[x] for x in self.acceptance_order), dtype=float, count=len(self.acceptance_order))

    def kruzkov(self, flat: int) -> float:
        return kruzkov(self.T.get(flat, INF))


def kruzkov(T: float) -> float:
    """Map a time in [0, inf] to ``1 - exp(-T)`` in [0, 1]."""
    if T < 0 or math.isnan(T):
        raise ValueError(f"time must be nonnegative, got {T}")
    return 1.0 if T == INF else -math.expm1(-T)


def inverse_kruzkov(v: float) -> float:
    if not 0.0 <= v < 1.0:
        raise ValueError(f"value must lie in [0, 1), got {v}")
    return -math.log1p(-v)


def solve_upwind(a: Sequence[float], c: float) -> float:
    """Root ``U`` of ``sum_i max(U - a_i, 0)^2 = c^2``.

    ``a`` holds the finite per-axis upwind values in ascending order. Axes
    are added one at a time while the running root exceeds the next value;
    a negative discriminant keeps the root with the smaller axis set.
    """
    if not a:
        return INF
    u = a[0] + c
    s, q = a[0], a[0] * a[0]
    c2 = c * c
    for k in range(2, len(a) + 1):
        ak = a[k - 1]
        if u <= ak:
            break
        s += ak
        q += ak * ak
        disc = s * s - k * (q - c2)
        if disc < 0:
            break
        u = (s + math.sqrt(disc)) / k
    return u


def _step_costs(g: RestrictedGrid, speed: SpeedField) -> Callable[[int], float] | float:
    """``h / f`` per member node, or a single float for constant speed."""
    h = g.base.mesh_step
    if speed.is_constant:
        return h / speed.value
    flat = g.flat_members
    cost = dict(zip(flat.tolist(), (h / speed(g.base.flat_points(flat))).tolist()))
    return cost


def _upwind_values(x: int, T: Mapping[int, float], counts, strides) -> list[float]:
    a = []
    r = x
    for n, s in zip(counts, strides):
        ci, r = divmod(r, s)
        lo = T.get(x - s, INF) if ci > 0 else INF
        hi = T.get(x + s, INF) if ci < n - 1 else INF
        m = lo if lo < hi else hi
        if m < INF:
            a.append(m)
    a.sort()
    return a


def local_update(g: RestrictedGrid, speed: SpeedField, T: Mapping[int, float], x: Sequence[int]) -> float:
    """Upwind value at node ``x`` from the finite values in ``T`` (flat-indexed)."""
    base = g.base
    if not g.contains_index(x):
        raise KeyError(f"node {tuple(x)} is not a member of the restricted grid")
    flat = base.flat(x)
    # Non-members carry no value; hide anything the caller put there.
    view = T if g.is_full else {k: v for k, v in T.items() if k in g}
    a = _upwind_values(flat, view, base.counts, base.strides)
    f = float(speed(base.points(np.asarray(x)[None, :]))[0])
    return solve_upwind(a, base.mesh_step / f)


def partial_fast_march(g: RestrictedGrid, speed: SpeedField, fronts: FrontSets,
                       deadline: float | None = None) -> ValueField:
    """Accept nodes in increasing value order until the end set is accepted.

    An empty end set runs until the narrow band is exhausted. If the band
    empties first, the returned field lists the unreached end nodes in
    ``missing_end``.
    """
    base = g.base
    counts, strides = base.counts, base.strides
    members = None if g.is_full else g.member_set
    for s in fronts.start:
        if s not in g:
            raise KeyError(f"start node {base.unflat(s)} is not a member of the grid")

    costs = _step_costs(g, speed)
    const_cost = costs if isinstance(costs, float) else None

    T: dict[int, float] = {}
    accepted: set[int] = set()
    order: list[int] = []
    heap: list[tuple[float, int]] = []
    T_get = T.get

    def relax(x: int) -> None:
        r = x
        for n, s in zip(counts, strides):
            ci, r = divmod(r, s)
            for y in ((x - s) if ci > 0 else -1, (x + s) if ci < n - 1 else -1):
                if y < 0 or y in accepted or (members is not None and y not in members):
                    continue
                u = solve_upwind(_upwind_values(y, T, counts, strides),
                                 const_cost if const_cost is not None else costs[y])
                if u < T_get(y, INF):
                    T[y] = u
                    heapq.heappush(heap, (u, y))

    for s in sorted(fronts.start):
        T[s] = 0.0
        accepted.add(s)
        order.append(s)
    for s in sorted(fronts.start):
        relax(s)

    remaining = set(fronts.end) - accepted
    want_end = bool(fronts.end)
    pops = 0
    while heap and (remaining or not want_end):
        u, x = heapq.heappop(heap)
        if x in accepted or u != T[x]:
            continue
        accepted.add(x)
        order.append(x)
        remaining.discard(x)
        relax(x)
        pops += 1
        if deadline is not None and pops % _DEADLINE_EVERY == 0 and time.perf_counter() > deadline:
            raise BudgetExceeded(f"deadline passed after {pops} accepted nodes")

    return ValueField(g, T, accepted, order, fronts.start, frozenset(remaining))
