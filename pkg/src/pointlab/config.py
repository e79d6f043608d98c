"""Point configurations, coupling constants, samplers and cluster analysis."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import cKDTree

DisplacementLaw = Callable[[np.random.Generator, int, int, float], np.ndarray]


@dataclass(frozen=True)
class PointConfiguration:
    """Finite point set in the cube ``[lo, hi]^dimension``.

    ``points`` has shape ``(n, dimension)``. ``couplings`` is optional; when
    present it is index-aligned with ``points``.
    """

    dimension: int
    points: np.ndarray
    lo: float
    hi: float
    couplings: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if self.dimension not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.dimension}")
        if not (math.isfinite(self.lo) and math.isfinite(self.hi) and self.lo < self.hi):
            raise ValueError(f"degenerate window [{self.lo}, {self.hi}]")
        pts = np.asarray(self.points, dtype=float).reshape(-1, self.dimension)
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        if pts.size and (pts.min() < self.lo or pts.max() > self.hi):
            raise ValueError("points must lie inside the window")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if len(pts) > 1 and min_pairwise_distance(self) <= 0.0:
            raise ValueError("points must be pairwise distinct")
        if self.couplings is not None:
            alpha = np.asarray(self.couplings, dtype=float).reshape(-1)
            if alpha.shape[0] != pts.shape[0]:
                raise ValueError(
                    f"{alpha.shape[0]} couplings for {pts.shape[0]} points"
                )
            if not np.all(np.isfinite(alpha)):
                raise ValueError("couplings must be finite")
            alpha.setflags(write=False)
            object.__setattr__(self, "couplings", alpha)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def volume(self) -> float:
        return (self.hi - self.lo) ** self.dimension

    def with_couplings(self, couplings) -> "PointConfiguration":
        if np.ndim(couplings) == 0:
            couplings = np.full(len(self), float(couplings))
        return PointConfiguration(self.dimension, self.points, self.lo, self.hi, couplings)

    def scaled(self, c: float) -> "PointConfiguration":
        return PointConfiguration(
            self.dimension, self.points * c, self.lo * c, self.hi * c, self.couplings
        )

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "window": {"lo": self.lo, "hi": self.hi},
            "points": self.points.tolist(),
            "couplings": None if self.couplings is None else self.couplings.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PointConfiguration":
        try:
            dim = int(doc["dimension"])
            lo = float(doc["window"]["lo"])
            hi = float(doc["window"]["hi"])
            pts = np.asarray(doc["points"], dtype=float).reshape(-1, dim)
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed configuration document: {exc}") from exc
        return cls(dim, pts, lo, hi, doc.get("couplings"))


def dumps(config: PointConfiguration) -> str:
    # repr() of a float round-trips exactly (17 significant digits at most)
    return json.dumps(config.to_dict(), indent=1) + "\n"


def load(path: str | Path) -> PointConfiguration:
    with open(path) as fh:
        return PointConfiguration.from_dict(json.load(fh))


@dataclass(frozen=True)
class ClusterReport:
    radius: float
    components: list[list[int]]
    touches_boundary: list[bool]

    @property
    def max_component_size(self) -> int:
        return max((len(c) for c in self.components), default=0)

    def labels(self, n: int) -> np.ndarray:
        out = np.empty(n, dtype=int)
        for cid, comp in enumerate(self.components):
            out[comp] = cid
        return out

    def to_dict(self) -> dict:
        return {
            "radius": self.radius,
            "components": self.components,
            "touches_boundary": self.touches_boundary,
            "max_component_size": self.max_component_size,
        }


def _check_window(dim: int, window: Sequence[float]) -> tuple[float, float]:
    if dim not in (1, 2, 3):
        raise ValueError(f"dimension must be 1, 2 or 3, got {dim}")
    lo, hi = (float(w) for w in window)
    if not (math.isfinite(lo) and math.isfinite(hi) and hi > lo):
        raise ValueError(f"degenerate window ({lo}, {hi})")
    return lo, hi


def _has_duplicates(pts: np.ndarray) -> bool:
    if len(pts) < 2:
        return False
    return len(np.unique(pts, axis=0)) < len(pts)


def sample_poisson(
    intensity: float, window: Sequence[float], seed: int, dim: int = 2
) -> PointConfiguration:
    """Homogeneous Poisson process of the given intensity on ``window^dim``."""
    if not (intensity > 0 and math.isfinite(intensity)):
        raise ValueError(f"intensity must be positive, got {intensity}")
    lo, hi = _check_window(dim, window)
    rng = np.random.default_rng(seed)
    n = rng.poisson(intensity * (hi - lo) ** dim)
    pts = rng.uniform(lo, hi, size=(n, dim))
    while _has_duplicates(pts):
        _, first = np.unique(pts, axis=0, return_index=True)
        dup = np.setdiff1d(np.arange(n), first)
        pts[dup] = rng.uniform(lo, hi, size=(len(dup), dim))
    return PointConfiguration(dim, pts, lo, hi)


def uniform_ball(rng: np.random.Generator, n: int, dim: int, radius: float) -> np.ndarray:
    """``n`` i.i.d. uniform draws from the open ball of the given radius."""
    direction = rng.standard_normal((n, dim))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    r = radius * rng.uniform(0.0, 1.0, size=(n, 1)) ** (1.0 / dim)
    return direction * r


def sample_displaced_lattice(
    bound: float,
    window: Sequence[float],
    seed: int,
    dim: int = 2,
    law: DisplacementLaw = uniform_ball,
) -> PointConfiguration:
    """Points ``n + delta_n`` for lattice sites ``n`` with ``|delta_n| < bound``.

    ``bound == 0`` gives the undisplaced lattice restricted to the window.
    """
    if not (bound >= 0 and math.isfinite(bound)):
        raise ValueError(f"displacement bound must be >= 0, got {bound}")
    lo, hi = _check_window(dim, window)
    axis = np.arange(math.ceil(lo - bound), math.floor(hi + bound) + 1, dtype=float)
    sites = np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    rng = np.random.default_rng(seed)
    if bound > 0:
        pts = sites + law(rng, len(sites), dim, bound)
        while _has_duplicates(pts):
            _, first = np.unique(pts, axis=0, return_index=True)
            dup = np.setdiff1d(np.arange(len(pts)), first)
            pts[dup] = sites[dup] + law(rng, len(dup), dim, bound)
    else:
        pts = sites
    inside = np.all((pts >= lo) & (pts <= hi), axis=1)
    return PointConfiguration(dim, pts[inside], lo, hi)


def min_pairwise_distance(config: PointConfiguration) -> float | None:
    """Smallest distance between two distinct points; ``None`` below 2 points."""
    pts = config.points
    if len(pts) < 2:
        return None
    dist, _ = cKDTree(pts).query(pts, k=2)
    return float(dist[:, 1].min())


class UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, i: int) -> int:
        root = i
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[i] != root:
            self.parent[i], i = root, self.parent[i]
        return root

    def union(self, i: int, j: int) -> None:
        ri, rj = self.find(i), self.find(j)
        if ri == rj:
            return
        if self.size[ri] < self.size[rj]:
            ri, rj = rj, ri
        self.parent[rj] = ri
        self.size[ri] += self.size[rj]


def neighbor_pairs(points: np.ndarray, radius: float) -> np.ndarray:
    """Index pairs ``(i, j)``, ``i < j``, with ``|p_i - p_j| < 2 * radius``."""
    if len(points) < 2:
        return np.empty((0, 2), dtype=int)
    pairs = cKDTree(points).query_pairs(2.0 * radius, output_type="ndarray")
    if len(pairs) == 0:
        return pairs
    d = np.linalg.norm(points[pairs[:, 0]] - points[pairs[:, 1]], axis=1)
    # open balls of radius R are disjoint at distance exactly 2R
    return pairs[d < 2.0 * radius]


def clusters(config: PointConfiguration, radius: float) -> ClusterReport:
    """Connected components of the union of open ``radius``-balls around the points."""
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    n = len(config)
    uf = UnionFind(n)
    for i, j in neighbor_pairs(config.points, radius):
        uf.union(int(i), int(j))
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(uf.find(i), []).append(i)
    components = sorted(groups.values(), key=lambda c: c[0])
    pts = config.points
    near_edge = np.any(
        (pts - config.lo < radius) | (config.hi - pts < radius), axis=1
    ) if n else np.zeros(0, dtype=bool)
    touches = [bool(near_edge[c].any()) for c in components]
    return ClusterReport(float(radius), components, touches)


def local_count_bound(config: PointConfiguration, r: float) -> int:
    """Upper bound on ``sup_x #(config ∩ B_r(x))``.

    Any ball of radius ``r`` that contains a configuration point ``p`` lies in
    the closed ball of radius ``2r`` around ``p``; the maximum of those counts
    is returned.
    """
    if not r > 0:
        raise ValueError(f"r must be positive, got {r}")
    if len(config) == 0:
        return 0
    tree = cKDTree(config.points)
    counts = tree.query_ball_point(config.points, 2.0 * r, return_length=True)
    return int(np.max(counts))
