"""Regular lattices over boxes, restricted node subsets and target regions."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

# Slack for float comparisons against lattice coordinates, in units of h.
_SNAP_TOL = 1e-9


@dataclass(frozen=True)
class BoxDomain:
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) == 0 or len(lo) != len(hi):
            raise ValueError("lo and hi must be non-empty and of equal length")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ValueError(f"degenerate box: lo={lo} hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def unit(cls, dim: int) -> "BoxDomain":
        return cls((0.0,) * dim, (1.0,) * dim)

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def extent(self) -> np.ndarray:
        return np.asarray(self.hi) - np.asarray(self.lo)


@dataclass(frozen=True)
class GridSpec:
    """Lattice ``lo + h * idx`` covering a closed box with one step on every axis."""

    domain: BoxDomain
    mesh_step: float
    counts: tuple[int, ...] = field(init=False)
    strides: tuple[int, ...] = field(init=False, repr=False)

    def __post_init__(self):
        h = float(self.mesh_step)
        if not h > 0:
            raise ValueError("mesh_step must be positive")
        object.__setattr__(self, "mesh_step", h)
        counts = tuple(int(np.floor(e / h + _SNAP_TOL)) + 1 for e in self.domain.extent)
        object.__setattr__(self, "counts", counts)
        # C order: last axis varies fastest.
        strides = [1] * len(counts)
        for i in range(len(counts) - 2, -1, -1):
            strides[i] = strides[i + 1] * counts[i + 1]
        object.__setattr__(self, "strides", tuple(strides))

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    def is_valid(self, idx: Sequence[int]) -> bool:
        return len(idx) == self.dim and all(0 <= i < n for i, n in zip(idx, self.counts))

    def flat(self, idx: Sequence[int]) -> int:
        if not self.is_valid(idx):
            raise IndexError(f"node index {tuple(idx)} out of range for counts {self.counts}")
        return sum(int(i) * s for i, s in zip(idx, self.strides))

    def unflat(self, flat: int) -> tuple[int, ...]:
        if not 0 <= flat < self.size:
            raise IndexError(f"flat index {flat} out of range [0, {self.size})")
        out = []
        for s in self.strides:
            q, flat = divmod(flat, s)
            out.append(q)
        return tuple(out)

    def flat_array(self, idx: np.ndarray) -> np.ndarray:
        return np.asarray(idx, dtype=np.int64) @ np.asarray(self.strides, dtype=np.int64)

    def unflat_array(self, flat: np.ndarray) -> np.ndarray:
        return np.stack(np.unravel_index(np.asarray(flat, dtype=np.int64), self.counts), axis=-1)

    def points(self, idx: np.ndarray) -> np.ndarray:
        """Coordinates of an ``(n, d)`` array of node indices."""
        return np.asarray(self.domain.lo) + self.mesh_step * np.asarray(idx, dtype=float)

    def flat_points(self, flat: np.ndarray) -> np.ndarray:
        return self.points(self.unflat_array(flat))

    def index_range(self, lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Inclusive per-axis index bounds of the nodes inside ``[lo, hi]``, clipped."""
        o = np.asarray(self.domain.lo)
        h = self.mesh_step
        first = np.ceil((np.asarray(lo) - o) / h - _SNAP_TOL).astype(np.int64)
        last = np.floor((np.asarray(hi) - o) / h + _SNAP_TOL).astype(np.int64)
        return np.maximum(first, 0), np.minimum(last, np.asarray(self.counts) - 1)

    def nearest_node(self, point: Sequence[float]) -> tuple[int, ...]:
        p = (np.asarray(point, dtype=float) - np.asarray(self.domain.lo)) / self.mesh_step
        idx = np.clip(np.rint(p).astype(np.int64), 0, np.asarray(self.counts) - 1)
        return tuple(int(i) for i in idx)


def node_to_point(g: GridSpec, idx: Sequence[int]) -> tuple[float, ...]:
    if not g.is_valid(idx):
        raise IndexError(f"node index {tuple(idx)} out of range for counts {g.counts}")
    return tuple(float(v) for v in g.points(np.asarray(idx)[None, :])[0])


def point_to_nearest_node(g: GridSpec, point: Sequence[float]) -> tuple[int, ...]:
    return g.nearest_node(point)


# --------------------------------------------------------------------------
# Regions

class Region:
    """Closed subset of R^d described by its Euclidean distance function."""

    def distance(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def contains(self, points: np.ndarray) -> np.ndarray:
        return self.distance(np.atleast_2d(points)) <= 0.0

    def padded(self, eta: float) -> "Region":
        """Minkowski sum with the closed ball of radius ``eta``."""
        return self if eta <= 0 else Padded(self, float(eta))


@dataclass(frozen=True)
class Ball(Region):
    center: tuple[float, ...]
    radius: float

    def distance(self, points):
        d = np.linalg.norm(np.atleast_2d(points) - np.asarray(self.center), axis=-1)
        return np.maximum(d - self.radius, 0.0)

    def contains(self, points):
        return np.linalg.norm(np.atleast_2d(points) - np.asarray(self.center), axis=-1) <= self.radius

    def bounds(self):
        c = np.asarray(self.center, dtype=float)
        return c - self.radius, c + self.radius

    def padded(self, eta):
        return self if eta <= 0 else Ball(self.center, self.radius + float(eta))


@dataclass(frozen=True)
class Box(Region):
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def distance(self, points):
        p = np.atleast_2d(points)
        gap = np.maximum(np.maximum(np.asarray(self.lo) - p, p - np.asarray(self.hi)), 0.0)
        return np.linalg.norm(gap, axis=-1)

    def contains(self, points):
        p = np.atleast_2d(points)
        return np.all((p >= np.asarray(self.lo)) & (p <= np.asarray(self.hi)), axis=-1)

    def bounds(self):
        return np.asarray(self.lo, dtype=float), np.asarray(self.hi, dtype=float)


@dataclass(frozen=True)
class Union(Region):
    parts: tuple[Region, ...]

    def __init__(self, parts: Iterable[Region]):
        parts = tuple(parts)
        if not parts:
            raise ValueError("Union needs at least one region")
        object.__setattr__(self, "parts", parts)

    def distance(self, points):
        return np.min([r.distance(points) for r in self.parts], axis=0)

    def contains(self, points):
        return np.any([r.contains(points) for r in self.parts], axis=0)

    def bounds(self):
        b = [r.bounds() for r in self.parts]
        return np.min([lo for lo, _ in b], axis=0), np.max([hi for _, hi in b], axis=0)

    def padded(self, eta):
        return Union(r.padded(eta) for r in self.parts)


@dataclass(frozen=True)
class Padded(Region):
    base: Region
    eta: float

    def distance(self, points):
        return np.maximum(self.base.distance(points) - self.eta, 0.0)

    def contains(self, points):
        return self.base.distance(points) <= self.eta

    def bounds(self):
        lo, hi = self.base.bounds()
        return lo - self.eta, hi + self.eta


def _block(first: np.ndarray, last: np.ndarray) -> np.ndarray:
    if np.any(last < first):
        return np.empty((0, len(first)), dtype=np.int64)
    axes = [np.arange(a, b + 1) for a, b in zip(first, last)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(first))


def region_flat_nodes(g: GridSpec, r: Region) -> np.ndarray:
    """Sorted flat indices of the grid nodes lying in ``r``."""
    first, last = g.index_range(*r.bounds())
    idx = _block(first, last)
    if len(idx) == 0:
        return np.empty(0, dtype=np.int64)
    keep = r.contains(g.points(idx))
    return np.sort(g.flat_array(idx[keep]))


def nodes_in_region(g: GridSpec, r: Region) -> set[tuple[int, ...]]:
    return {tuple(int(v) for v in row) for row in g.unflat_array(region_flat_nodes(g, r))}


# --------------------------------------------------------------------------
# Restricted grids

class RestrictedGrid:
    """A subset of the nodes of ``base``; everything outside is treated as absent."""

    def __init__(self, base: GridSpec, members: Iterable[int] | np.ndarray | None = None):
        self.base = base
        if members is None:
            arr = np.arange(base.size, dtype=np.int64)
        else:
            arr = np.unique(np.fromiter(members, dtype=np.int64)
                            if not isinstance(members, np.ndarray) else members.astype(np.int64))
            if len(arr) and (arr[0] < 0 or arr[-1] >= base.size):
                raise IndexError("restricted grid members outside the base grid")
        self.flat_members = arr
        self._is_full = len(arr) == base.size
        self._member_set: frozenset[int] | None = None

    @classmethod
    def full(cls, base: GridSpec) -> "RestrictedGrid":
        return cls(base)

    @classmethod
    def from_indices(cls, base: GridSpec, nodes: Iterable[Sequence[int]]) -> "RestrictedGrid":
        return cls(base, [base.flat(n) for n in nodes])

    @property
    def is_full(self) -> bool:
        return self._is_full

    @property
    def member_set(self) -> frozenset[int]:
        if self._member_set is None:
            self._member_set = frozenset(self.flat_members.tolist())
        return self._member_set

    def __len__(self) -> int:
        return len(self.flat_members)

    def __contains__(self, flat: int) -> bool:
        if self._is_full:
            return 0 <= flat < self.base.size
        return flat in self.member_set

    def contains_index(self, idx: Sequence[int]) -> bool:
        return self.base.is_valid(idx) and self.base.flat(idx) in self

    def restrict_flat(self, flat: np.ndarray) -> np.ndarray:
        """The entries of ``flat`` that are members."""
        flat = np.asarray(flat, dtype=np.int64)
        if self._is_full:
            return flat
        return flat[np.isin(flat, self.flat_members, assume_unique=False)]

    def nodes_in_region(self, r: Region) -> np.ndarray:
        return self.restrict_flat(region_flat_nodes(self.base, r))

    def nearest_members(self, r: Region) -> np.ndarray:
        """Members at minimal distance from ``r``; used when ``r`` holds no member."""
        if len(self) == 0:
            return np.empty(0, dtype=np.int64)
        dist = r.distance(self.base.flat_points(self.flat_members))
        return self.flat_members[dist <= dist.min() + _SNAP_TOL * self.base.mesh_step]

    def touches_boundary(self, flat: np.ndarray | None = None) -> bool:
        idx = self.base.unflat_array(self.flat_members if flat is None else flat)
        return bool(np.any(idx == 0) or np.any(idx == np.asarray(self.base.counts) - 1))


def axis_neighbors(g: RestrictedGrid, idx: Sequence[int]) -> list[tuple[int, tuple[int, ...] | None, tuple[int, ...] | None]]:
    """Per axis, the member nodes one step below and above ``idx`` (``None`` when absent)."""
    idx = tuple(int(i) for i in idx)
    if not g.contains_index(idx):
        raise KeyError(f"node {idx} is not a member of the restricted grid")
    out = []
    for axis in range(g.base.dim):
        pair = []
        for step in (-1, 1):
            nb = idx[:axis] + (idx[axis] + step,) + idx[axis + 1:]
            pair.append(nb if g.contains_index(nb) else None)
        out.append((axis, pair[0], pair[1]))
    return out


def iter_indices(g: GridSpec) -> Iterable[tuple[int, ...]]:
    return itertools.product(*(range(n) for n in g.counts))
