"""Coarse-to-fine fast marching restricted to a neighbourhood of optimal paths.

Each coarse level is solved in both directions (from the source set and
towards the destination set). Nodes whose combined value is within ``eta``
of the minimum are *active*; the next level keeps only the fine nodes within
an l-inf ball around them. The last level is solved in one direction only.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .eikonal import (INF, BudgetExceeded, FrontSets, SpeedField, ValueField, inverse_kruzkov, kruzkov,
                      partial_fast_march)
from .grid import GridSpec, Region, RestrictedGrid, _block
from .problems import ProblemSpec

logger = logging.getLogger(__name__)

DEFAULT_ETA_CONST = 2.0
DEFAULT_BETA = 0.5
DEFAULT_RETRIES = 3

# Active-node blocks are generated in chunks of this many coarse nodes.
_REFINE_CHUNK = 512


class UnreachableError(RuntimeError):
    """An end set could not be fully accepted inside a restricted grid."""

    def __init__(self, message: str, direction: str, level: int | None = None):
        super().__init__(message)
        self.direction = direction
        self.level = level


def combine_fv(v_s: float, v_d: float) -> float:
    """``v_s + v_d - v_s v_d``; the transformed value of the summed times."""
    if not (0.0 <= v_s <= 1.0 and 0.0 <= v_d <= 1.0):
        raise ValueError(f"values must lie in [0, 1], got {v_s}, {v_d}")
    return v_s + v_d - v_s * v_d


# --------------------------------------------------------------------------
# Parameter schedules

@dataclass(frozen=True)
class LevelSchedule:
    finest_h: float
    steps: tuple[float, ...]
    etas: tuple[float, ...]
    gamma: float = 1.0
    eta_const: float = DEFAULT_ETA_CONST
    beta: float = DEFAULT_BETA
    mode: str = "auto"
    raw_steps: tuple[float, ...] = ()
    degenerate: bool = False

    def __post_init__(self):
        if not self.steps:
            raise ValueError("a schedule needs at least one level")
        if any(b >= a for a, b in zip(self.steps, self.steps[1:])):
            raise ValueError(f"mesh steps must be strictly decreasing: {self.steps}")
        if len(self.etas) != len(self.steps) - 1:
            raise ValueError("one threshold per non-final level is required")
        if any(e <= 0 for e in self.etas):
            raise ValueError("thresholds must be positive")

    @property
    def n_levels(self) -> int:
        return len(self.steps)

    @property
    def levels(self) -> list[tuple[float, float | None]]:
        return list(zip(self.steps, list(self.etas) + [None]))


def snap_step(H: float, length: float) -> float:
    """Largest ``length / k`` (integer k) not exceeding ``H``."""
    k = max(1, math.ceil(length / H - 1e-9))
    return length / k


def raw_level_steps(h: float, gamma: float, mode: str, n_levels: int | None = None,
                    dim: int = 2, beta: float = DEFAULT_BETA) -> list[float]:
    nu = gamma * beta * (1.0 - 1.0 / dim)
    if mode == "classic":
        return [h]
    if mode == "two_level":
        return [h ** (1.0 / (nu + 1.0)), h]
    if mode == "n_level":
        if n_levels is None or n_levels < 1:
            raise ValueError("n_level mode needs n_levels >= 1")
        N = n_levels
        if N == 1:
            return [h]
        return [h ** ((1.0 - nu ** l) / (1.0 - nu ** N)) for l in range(1, N + 1)]
    raise ValueError(f"unknown schedule mode {mode!r}")


def schedule_params(epsilon: float | None = None, gamma: float = 1.0,
                    eta_const: float = DEFAULT_ETA_CONST, mode: str = "auto", *,
                    n_levels: int | None = None, dim: int = 2, beta: float = DEFAULT_BETA,
                    finest_h: float | None = None, length: float = 1.0) -> LevelSchedule:
    """Mesh steps and thresholds for a target accuracy ``epsilon``.

    ``auto`` uses ``N = floor(log(1/eps) / gamma)`` levels with geometric
    steps ``h**(l/N)``; ``two_level`` and ``n_level`` use the exponents that
    balance the level costs for ``nu = gamma * beta * (1 - 1/d)``. Steps are
    snapped down to ``length / k`` so every grid tiles the box.
    """
    if (epsilon is None) == (finest_h is None):
        raise ValueError("give exactly one of epsilon and finest_h")
    if not 0 < gamma <= 1:
        raise ValueError("gamma must lie in (0, 1]")
    if epsilon is None:
        if not 0 < finest_h < length:
            raise ValueError("finest_h must lie in (0, length)")
        epsilon = finest_h ** gamma
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    h = epsilon ** (1.0 / gamma) if finest_h is None else finest_h

    degenerate = False
    if mode == "auto":
        N = math.floor(math.log(1.0 / epsilon) / gamma)
        if N < 1:
            logger.warning("auto schedule floors to N=%d levels; falling back to one level", N)
            N, degenerate = 1, True
        raw = [h ** (l / N) for l in range(1, N + 1)]
    else:
        raw = raw_level_steps(h, gamma, mode, n_levels, dim, beta)

    steps: list[float] = []
    for H in raw:
        s = snap_step(H, length)
        if not steps or s < steps[-1] - 1e-15:
            steps.append(s)
    etas = tuple(eta_const * H ** gamma for H in steps[:-1])
    return LevelSchedule(steps[-1], tuple(steps), etas, gamma, eta_const, beta, mode,
                         tuple(raw), degenerate)


# --------------------------------------------------------------------------
# Level operations

@dataclass
class BidirectionalValues:
    v_from_src: ValueField
    v_to_dst: ValueField
    accepted_both: np.ndarray  # sorted flat indices

    @property
    def grid(self) -> RestrictedGrid:
        return self.v_to_dst.grid


@dataclass
class ActiveSet:
    grid: GridSpec
    nodes: np.ndarray  # sorted flat indices
    threshold_used: float
    fmin: float
    values: np.ndarray = field(repr=False, default=None)  # F at ``nodes``

    def __len__(self) -> int:
        return len(self.nodes)

    def points(self) -> np.ndarray:
        return self.grid.flat_points(self.nodes)


def target_nodes(g: RestrictedGrid, region: Region) -> np.ndarray:
    """Members inside ``region``; the nearest members when none lie inside."""
    nodes = g.nodes_in_region(region)
    if len(nodes) == 0:
        nodes = g.nearest_members(region)
    return nodes


def bidirectional_coarse_solve(g: RestrictedGrid, speed: SpeedField, src: Region, dst: Region,
                               eta_pad: float, deadline: float | None = None) -> BidirectionalValues:
    src_nodes = target_nodes(g, src)
    dst_nodes = target_nodes(g, dst)
    if len(src_nodes) == 0 or len(dst_nodes) == 0:
        raise UnreachableError("restricted grid is empty", "both")
    src_end = target_nodes(g, src.padded(eta_pad))
    dst_end = target_nodes(g, dst.padded(eta_pad))

    to_dst = partial_fast_march(g, speed, FrontSets(dst_nodes, src_end), deadline)
    if not to_dst.reached_end:
        raise UnreachableError(f"{len(to_dst.missing_end)} padded source nodes unreachable from the destination",
                               "to_dst")
    from_src = partial_fast_march(g, speed, FrontSets(src_nodes, dst_end), deadline)
    if not from_src.reached_end:
        raise UnreachableError(f"{len(from_src.missing_end)} padded destination nodes unreachable from the source",
                               "from_src")
    both = np.array(sorted(from_src.accepted & to_dst.accepted), dtype=np.int64)
    return BidirectionalValues(from_src, to_dst, both)


def combined_values(bi: BidirectionalValues, nodes: np.ndarray | None = None) -> np.ndarray:
    nodes = bi.accepted_both if nodes is None else nodes
    Ts, Td = bi.v_from_src.T, bi.v_to_dst.T
    vs = -np.expm1(-np.fromiter((Ts[x] for x in nodes), dtype=float, count=len(nodes)))
    vd = -np.expm1(-np.fromiter((Td[x] for x in nodes), dtype=float, count=len(nodes)))
    return vs + vd - vs * vd


def select_active(bi: BidirectionalValues, eta: float) -> ActiveSet:
    if not eta > 0:
        raise ValueError("eta must be positive")
    nodes = bi.accepted_both
    if len(nodes) == 0:
        raise ValueError("no node is accepted in both directions")
    F = combined_values(bi, nodes)
    fmin = float(F.min())
    keep = F <= fmin + eta
    return ActiveSet(bi.grid.base, nodes[keep], float(eta), fmin, F[keep])


def refine_grid(active: ActiveSet, H: float, h: float, fine_spec: GridSpec) -> RestrictedGrid:
    """Fine nodes within l-inf distance ``max(H - h, h)`` of an active node."""
    if len(active) == 0:
        raise ValueError("active set is empty")
    if not 0 < h <= H:
        raise ValueError("need 0 < h <= H")
    if not math.isclose(fine_spec.mesh_step, h, rel_tol=1e-12):
        raise ValueError("fine grid step does not match h")
    radius = max(H - h, h)
    pts = active.points()
    first, last = fine_spec.index_range(pts - radius, pts + radius)
    first = np.atleast_2d(first)
    last = np.atleast_2d(last)
    width = int(np.max(last - first)) + 1
    offsets = _block(np.zeros(fine_spec.dim, dtype=np.int64), np.full(fine_spec.dim, width - 1))
    chunks = []
    for i in range(0, len(first), _REFINE_CHUNK):
        f, l = first[i:i + _REFINE_CHUNK], last[i:i + _REFINE_CHUNK]
        idx = f[:, None, :] + offsets[None, :, :]
        ok = np.all(idx <= l[:, None, :], axis=-1)
        chunks.append(np.unique(fine_spec.flat_array(idx[ok])))
    return RestrictedGrid(fine_spec, np.unique(np.concatenate(chunks)))


# --------------------------------------------------------------------------
# Driver

@dataclass
class LevelRecord:
    level: int
    mesh_step: float
    eta: float | None
    grid_nodes: int
    visited: int
    accepted_from_src: int | None
    accepted_to_dst: int
    active: int | None
    wall_ms: float
    retries: int = 0
    touches_boundary: bool = False


@dataclass
class MlfmResult:
    final_values: ValueField
    v_star: float
    tau_star: float
    per_level: list[LevelRecord]
    schedule: LevelSchedule
    active_sets: list[ActiveSet]
    argmin_src: int

    @property
    def visited_nodes(self) -> int:
        return sum(r.visited for r in self.per_level)

    @property
    def wall_ms(self) -> float:
        return sum(r.wall_ms for r in self.per_level)


def _coarse_level(level: int, grid: RestrictedGrid, problem: ProblemSpec, eta: float,
                  deadline: float | None) -> tuple[BidirectionalValues, ActiveSet, LevelRecord]:
    t0 = time.perf_counter()
    bi = bidirectional_coarse_solve(grid, problem.speed, problem.src, problem.dst, eta, deadline)
    active = select_active(bi, eta)
    ms = 1e3 * (time.perf_counter() - t0)
    touches = grid.touches_boundary(active.nodes) if len(active) else False
    if touches:
        logger.info("level %d: active set touches the domain boundary", level)
    visited = len(bi.v_from_src.T.keys() | bi.v_to_dst.T.keys())
    rec = LevelRecord(level, grid.base.mesh_step, eta, len(grid), visited,
                      len(bi.v_from_src.accepted), len(bi.v_to_dst.accepted), len(active), ms,
                      touches_boundary=touches)
    return bi, active, rec


def run_multilevel(problem: ProblemSpec, schedule: LevelSchedule, max_retries: int = DEFAULT_RETRIES,
                   deadline: float | None = None) -> MlfmResult:
    """Solve ``problem`` on the level hierarchy described by ``schedule``.

    When an end set is unreachable inside a restricted grid, the threshold
    that built that grid is doubled and the level is redone, at most
    ``max_retries`` times per level.
    """
    steps = schedule.steps
    etas = list(schedule.etas)
    N = len(steps)
    specs = [GridSpec(problem.domain, H) for H in steps]

    records: list[LevelRecord] = []
    actives: list[ActiveSet] = []
    bis: list[BidirectionalValues] = []
    retries = [0] * N
    grid = RestrictedGrid.full(specs[0])

    def widen(l: int, err: UnreachableError) -> RestrictedGrid:
        # Level l failed on a grid built from level l-1's active set.
        if l == 0 or retries[l - 1] >= max_retries:
            err.level = l + 1
            raise err
        retries[l - 1] += 1
        etas[l - 1] *= 2.0
        logger.warning("level %d unreachable (%s); retrying with eta_%d=%.4g", l + 1, err.direction, l, etas[l - 1])
        t0 = time.perf_counter()
        act = select_active(bis[l - 1], etas[l - 1])
        actives[l - 1] = act
        new = refine_grid(act, steps[l - 1], steps[l], specs[l])
        records[l - 1] = replace(records[l - 1], eta=etas[l - 1], active=len(act), retries=retries[l - 1],
                                 wall_ms=records[l - 1].wall_ms + 1e3 * (time.perf_counter() - t0))
        return new

    try:
        l = 0
        while l < N - 1:
            try:
                bi, act, rec = _coarse_level(l + 1, grid, problem, etas[l], deadline)
            except UnreachableError as err:
                grid = widen(l, err)
                continue
            t0 = time.perf_counter()
            nxt = refine_grid(act, steps[l], steps[l + 1], specs[l + 1])
            rec.wall_ms += 1e3 * (time.perf_counter() - t0)
            bis.append(bi)
            actives.append(act)
            records.append(rec)
            grid = nxt
            l += 1

        while True:
            t0 = time.perf_counter()
            dst_nodes = target_nodes(grid, problem.dst)
            src_nodes = target_nodes(grid, problem.src)
            try:
                if len(dst_nodes) == 0 or len(src_nodes) == 0:
                    raise UnreachableError("final grid misses a target set", "to_dst")
                final = partial_fast_march(grid, problem.speed, FrontSets(dst_nodes, src_nodes), deadline)
                if not final.reached_end:
                    raise UnreachableError(f"{len(final.missing_end)} source nodes unreachable on the final grid",
                                           "to_dst")
            except UnreachableError as err:
                grid = widen(N - 1, err)
                continue
            break
        ms = 1e3 * (time.perf_counter() - t0)
        records.append(LevelRecord(N, steps[-1], None, len(grid), final.visited, None,
                                   len(final.accepted), None, ms))

    except BudgetExceeded as exc:
        exc.records = list(records)
        raise

    T = final.T
    best = min(src_nodes.tolist(), key=lambda x: (T[x], x))
    v_star = kruzkov(T[best])
    return MlfmResult(final, v_star, inverse_kruzkov(v_star) if v_star < 1 else INF, records, schedule,
                      actives, best)


def classic_schedule(h: float) -> LevelSchedule:
    return LevelSchedule(h, (h,), (), mode="classic")


def extract_path(result: MlfmResult, problem: ProblemSpec) -> np.ndarray:
    """Steepest-descent walk on the final values from the best source node.

    Returns the visited node coordinates, ending in the destination set.
    """
    if not result.v_star < 1:
        raise ValueError("no source node was reached")
    vf = result.final_values
    base = vf.grid.base
    T, accepted = vf.T, vf.accepted
    counts, strides = base.counts, base.strides
    x = result.argmin_src
    path = [x]
    limit = len(vf.grid)
    while x not in vf.start:
        best, best_t = None, INF
        r = x
        for n, s in zip(counts, strides):
            ci, r = divmod(r, s)
            for y in ((x - s) if ci > 0 else -1, (x + s) if ci < n - 1 else -1):
                if y >= 0 and y in accepted and (T[y], y) < (best_t, best if best is not None else -1):
                    best, best_t = y, T[y]
        if best is None or best_t >= T[x]:
            raise RuntimeError(f"plateau: descent stuck at node {base.unflat(x)}")
        x = best
        path.append(x)
        if len(path) > limit:
            raise RuntimeError("plateau: descent did not terminate")
    return base.flat_points(np.asarray(path, dtype=np.int64))


def geodesic_cover_gaps(result: MlfmResult, segment: Sequence[np.ndarray], n: int = 400) -> list[float]:
    """Per coarse level, the worst l-inf distance from the segment to the active set."""
    a, b = (np.asarray(p, dtype=float) for p in segment)
    t = np.linspace(0.0, 1.0, n)[:, None]
    samples = a + t * (b - a)
    gaps = []
    for act in result.active_sets:
        P = act.points()
        gaps.append(float(max(np.min(np.max(np.abs(P - p), axis=1)) for p in samples)))
    return gaps
