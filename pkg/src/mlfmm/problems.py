"""Problem instances, speed fields and reference solutions."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .eikonal import SpeedField
from .grid import Ball, BoxDomain, Region, RestrictedGrid

# two_channel geometry: a slow slab across axis 0 with two gaps along axis 1.
SLAB_CENTER = 0.5
SLAB_HALF_WIDTH = 0.05
SLAB_GAPS = ((0.15, 0.35), (0.65, 0.85))
SLAB_SPEED = 0.2
SLAB_RAMP = 0.02

BUMP_AMPLITUDE = 0.5
BUMP_WIDTH = 0.02

BENCH_RADIUS = 0.1
BENCH_SRC = 0.2
BENCH_DST = 0.8


@dataclass(frozen=True)
class AnalyticOracle:
    """Closed-form solution of a constant-speed two-ball problem in a convex box."""

    value_at: Callable[[np.ndarray], np.ndarray]
    segment: tuple[np.ndarray, np.ndarray]
    tau_star: float

    def geodesic(self, n: int = 200) -> np.ndarray:
        a, b = self.segment
        t = np.linspace(0.0, 1.0, n)[:, None]
        return a + t * (b - a)


@dataclass(frozen=True)
class ProblemSpec:
    domain: BoxDomain
    src: Region
    dst: Region
    speed: SpeedField
    name: str = "custom"
    oracle: AnalyticOracle | None = None

    def __post_init__(self):
        lo, hi = np.asarray(self.domain.lo), np.asarray(self.domain.hi)
        for label, r in (("src", self.src), ("dst", self.dst)):
            rlo, rhi = r.bounds()
            if len(rlo) != self.domain.dim:
                raise ValueError(f"{label} region dimension does not match the domain")
            if np.any(rlo <= lo) or np.any(rhi >= hi):
                raise ValueError(f"{label} region must lie strictly inside the domain")
        if isinstance(self.src, Ball) and isinstance(self.dst, Ball):
            gap = np.linalg.norm(np.subtract(self.src.center, self.dst.center))
            if gap <= self.src.radius + self.dst.radius:
                raise ValueError("src and dst must be disjoint")
        else:
            slo, shi = self.src.bounds()
            dlo, dhi = self.dst.bounds()
            if np.all(slo <= dhi) and np.all(dlo <= shi):
                raise ValueError("src and dst bounding boxes overlap")

    @property
    def dim(self) -> int:
        return self.domain.dim


def _two_ball_oracle(dim: int, speed: float = 1.0) -> AnalyticOracle:
    cs = np.full(dim, BENCH_SRC)
    cd = np.full(dim, BENCH_DST)
    u = (cd - cs) / np.linalg.norm(cd - cs)

    def value_at(x):
        x = np.atleast_2d(x)
        return np.maximum(np.linalg.norm(x - cd, axis=-1) - BENCH_RADIUS, 0.0) / speed

    tau = (np.linalg.norm(cd - cs) - 2 * BENCH_RADIUS) / speed
    return AnalyticOracle(value_at, (cs + BENCH_RADIUS * u, cd - BENCH_RADIUS * u), float(tau))


def paper_benchmark(d: int) -> ProblemSpec:
    """Unit speed in (0,1)^d between balls of radius 0.1 at (0.2,...) and (0.8,...)."""
    if d < 2:
        raise ValueError("the benchmark needs dimension >= 2")
    return ProblemSpec(
        domain=BoxDomain.unit(d),
        src=Ball((BENCH_SRC,) * d, BENCH_RADIUS),
        dst=Ball((BENCH_DST,) * d, BENCH_RADIUS),
        speed=SpeedField.constant(1.0),
        name=f"paper_benchmark_d{d}",
        oracle=_two_ball_oracle(d),
    )


def variable_speed_field(kind: str, dim: int = 2) -> SpeedField:
    if kind == "bump":
        c = np.full(dim, 0.5)

        def bump(p):
            return 1.0 + BUMP_AMPLITUDE * np.exp(-np.sum((p - c) ** 2, axis=-1) / BUMP_WIDTH)

        return SpeedField(bump, 1.0, 1.0 + BUMP_AMPLITUDE, name="bump")
    if kind == "two_channel":
        if dim < 2:
            raise ValueError("two_channel needs dimension >= 2")

        def two_channel(p):
            off = np.abs(p[:, 0] - SLAB_CENTER) - SLAB_HALF_WIDTH
            in_slab = np.clip(1.0 - off / SLAB_RAMP, 0.0, 1.0)
            y = p[:, 1]
            in_gap = np.zeros(len(p))
            for a, b in SLAB_GAPS:
                out = np.maximum(np.maximum(a - y, y - b), 0.0)
                in_gap = np.maximum(in_gap, np.clip(1.0 - out / SLAB_RAMP, 0.0, 1.0))
            return 1.0 - (1.0 - SLAB_SPEED) * in_slab * (1.0 - in_gap)

        return SpeedField(two_channel, SLAB_SPEED, 1.0, name="two_channel")
    raise ValueError(f"unknown speed field kind {kind!r}")


def variable_speed_problem(kind: str, d: int = 2) -> ProblemSpec:
    """The benchmark geometry with a non-constant speed; no analytic oracle."""
    bench = paper_benchmark(d)
    return ProblemSpec(bench.domain, bench.src, bench.dst, variable_speed_field(kind, d),
                       name=f"{kind}_d{d}")


PROBLEMS = {
    "paper_benchmark": paper_benchmark,
    "bump": lambda d: variable_speed_problem("bump", d),
    "two_channel": lambda d: variable_speed_problem("two_channel", d),
}


def make_problem(name: str, dim: int) -> ProblemSpec:
    try:
        return PROBLEMS[name](dim)
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None


def brute_force_values(g: RestrictedGrid, speed: SpeedField, start: Iterable[int],
                       tol: float = 1e-13, max_iter: int | None = None) -> dict[int, float]:
    """Fixed point of the upwind update by plain value iteration on a dense array.

    Every node is updated simultaneously from the previous iterate until the
    largest change is at most ``tol``. Independent of the heap-driven march;
    meant for small grids.
    """
    base = g.base
    shape = base.counts
    member = np.zeros(base.size, dtype=bool)
    member[g.flat_members] = True
    member = member.reshape(shape)
    fixed = np.zeros(base.size, dtype=bool)
    start = np.fromiter((int(s) for s in start), dtype=np.int64)
    fixed[start] = True
    fixed = fixed.reshape(shape)
    if np.any(fixed & ~member):
        raise KeyError("start nodes must be grid members")

    cost = np.full(shape, np.inf)
    pts = base.flat_points(g.flat_members)
    cost.flat[g.flat_members] = base.mesh_step / speed(pts)

    T = np.full(shape, np.inf)
    T[fixed] = 0.0
    free = member & ~fixed
    d = base.dim
    if max_iter is None:
        max_iter = 50 * sum(shape) + 100
    for _ in range(max_iter):
        A = np.empty((d,) + tuple(shape))
        for axis in range(d):
            lo = np.full(shape, np.inf)
            hi = np.full(shape, np.inf)
            sl_dst = [slice(None)] * d
            sl_src = [slice(None)] * d
            sl_dst[axis], sl_src[axis] = slice(1, None), slice(None, -1)
            lo[tuple(sl_dst)] = T[tuple(sl_src)]
            sl_dst[axis], sl_src[axis] = slice(None, -1), slice(1, None)
            hi[tuple(sl_dst)] = T[tuple(sl_src)]
            A[axis] = np.minimum(lo, hi)
        A.sort(axis=0)
        U = A[0] + cost
        s = A[0].copy()
        q = A[0] * A[0]
        going = np.isfinite(U)
        c2 = cost * cost
        for k in range(2, d + 1):
            ak = A[k - 1]
            going &= U > ak
            s_k = np.where(going, s + ak, s)
            q_k = np.where(going, q + ak * ak, q)
            with np.errstate(invalid="ignore"):
                disc = s_k * s_k - k * (q_k - c2)
            going &= disc >= 0
            with np.errstate(invalid="ignore"):
                U = np.where(going, (s_k + np.sqrt(np.where(going, disc, 0.0))) / k, U)
            s, q = s_k, q_k
        new = np.where(free, U, T)
        both = np.isfinite(new) & np.isfinite(T)
        newly = np.isfinite(new) != np.isfinite(T)
        change = np.max(np.abs(new[both] - T[both]), initial=0.0)
        T = new
        if not newly.any() and change <= tol:
            break
    else:
        raise RuntimeError(f"value iteration did not converge in {max_iter} sweeps")
    flat = T.reshape(-1)
    return {int(x): float(flat[x]) for x in g.flat_members}


def nearest_flat(g: RestrictedGrid, point) -> int:
    return g.base.flat(g.base.nearest_node(point))


def tube_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Euclidean distance from each point to the segment [a, b]."""
    p = np.atleast_2d(points)
    ab = b - a
    t = np.clip((p - a) @ ab / float(ab @ ab), 0.0, 1.0)
    return np.linalg.norm(p - (a + t[:, None] * ab), axis=-1)

