"""Boolean-model clustering: open balls of common radius around each point.

Two balls overlap, and their points share a cluster, exactly when the
point distance is below twice the radius.  Clustering runs union-find
over a uniform grid hash with cell size 2R, so only points in adjacent
cells are ever compared.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np

from .core import PointPattern


class _UnionFind:
    """Array-based union-find with path halving and union by size."""

    def __init__(self, n: int):
        self.parent = np.arange(n, dtype=np.int64)
        self.size = np.ones(n, dtype=np.int64)

    def find(self, i: int) -> int:
        p = self.parent
        while p[i] != i:
            p[i] = p[p[i]]
            i = p[i]
        return int(i)

    def union(self, i: int, j: int) -> None:
        ri, rj = self.find(i), self.find(j)
        if ri == rj:
            return
        if self.size[ri] < self.size[rj]:
            ri, rj = rj, ri
        self.parent[rj] = ri
        self.size[ri] += self.size[rj]


@dataclass(frozen=True, eq=False)
class ClusterInfo:
    """Per-cluster aggregates."""

    index: int
    size: int
    bbox_min: np.ndarray
    bbox_max: np.ndarray
    face_contact: np.ndarray   # shape (d, 2): lower/upper face per axis


@dataclass(frozen=True, eq=False)
class ClusterLabels:
    """Connected components of the Boolean model at a fixed radius.

    labels[i] is the cluster index of pattern point i; clusters are
    numbered 0..k-1 in order of their smallest member index.  A cluster
    touches a window face when one of its points sits within the ball
    radius of that face.
    """

    radius: float
    labels: np.ndarray
    clusters: tuple[ClusterInfo, ...]
    pattern: PointPattern

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    def cluster_containing(self, point) -> int | None:
        """Cluster index of the ball covering `point`, or None."""
        if len(self.pattern) == 0:
            return None
        x = np.asarray(point, dtype=float)
        d = self.pattern.metric.pairwise(x[None, :], self.pattern.points)[0]
        j = int(np.argmin(d))
        return int(self.labels[j]) if d[j] < self.radius else None


def build_boolean_model(pattern: PointPattern, radius: float) -> ClusterLabels:
    """Cluster the pattern's points at connection range twice the radius."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    if pattern.metric.kind != "euclidean":
        raise ValueError("the Boolean model is built for the euclidean metric")
    pts = pattern.points
    n = len(pts)
    uf = _UnionFind(n)
    if n:
        cell = 2.0 * radius
        keys = np.floor(pts / cell).astype(np.int64)
        buckets: dict[tuple, np.ndarray] = {}
        for k, idx in zip(map(tuple, keys), range(n)):
            buckets.setdefault(k, []).append(idx)
        buckets = {k: np.array(v) for k, v in buckets.items()}
        d = pattern.dimension
        offsets = [off for off in product((-1, 0, 1), repeat=d)]
        limit2 = cell * cell
        for key, idx in buckets.items():
            for off in offsets:
                nk = tuple(k + o for k, o in zip(key, off))
                if nk < key or nk not in buckets:
                    continue
                jdx = buckets[nk]
                if nk == key:
                    a = pts[idx]
                    diff = a[:, None, :] - a[None, :, :]
                    d2 = np.einsum("ijk,ijk->ij", diff, diff)
                    ii, jj = np.nonzero(np.triu(d2 < limit2, k=1))
                    for u, v in zip(idx[ii], idx[jj]):
                        uf.union(int(u), int(v))
                else:
                    diff = pts[idx][:, None, :] - pts[jdx][None, :, :]
                    d2 = np.einsum("ijk,ijk->ij", diff, diff)
                    ii, jj = np.nonzero(d2 < limit2)
                    for u, v in zip(idx[ii], jdx[jj]):
                        uf.union(int(u), int(v))
    roots = np.array([uf.find(i) for i in range(n)], dtype=np.int64)
    labels = np.empty(n, dtype=np.int64)
    order: dict[int, int] = {}
    for i, r in enumerate(roots):
        if r not in order:
            order[r] = len(order)
        labels[i] = order[r]
    clusters = _aggregate(pattern, labels, len(order), radius)
    labels.setflags(write=False)
    return ClusterLabels(radius=float(radius), labels=labels,
                         clusters=clusters, pattern=pattern)


def _aggregate(pattern: PointPattern, labels: np.ndarray, k: int,
               radius: float) -> tuple[ClusterInfo, ...]:
    d = pattern.dimension
    pts = pattern.points
    clusters = []
    if pattern.window.kind == "box":
        lo = np.array([a for a, _ in pattern.window.bounds])
        hi = np.array([b for _, b in pattern.window.bounds])
    for c in range(k):
        members = pts[labels == c]
        contact = np.zeros((d, 2), dtype=bool)
        if pattern.window.kind == "box":
            contact[:, 0] = np.any(members - lo < radius, axis=0)
            contact[:, 1] = np.any(hi - members < radius, axis=0)
        clusters.append(ClusterInfo(index=c, size=len(members),
                                    bbox_min=members.min(axis=0),
                                    bbox_max=members.max(axis=0),
                                    face_contact=contact))
    return tuple(clusters)


SPAN_ALL_FACES = "touch-all-faces"
SPAN_OPPOSITE = "touch-two-opposite"


def count_spanning_clusters(labels: ClusterLabels, mode: str,
                            axis: int | None = None) -> int:
    """Number of clusters whose occupied region spans the window.

    Mode "touch-two-opposite" requires contact with both faces of some
    axis (or the given one); "touch-all-faces" requires contact with
    every face.
    """
    if mode not in (SPAN_ALL_FACES, SPAN_OPPOSITE):
        raise ValueError(f"unknown spanning mode {mode!r}")
    count = 0
    for c in labels.clusters:
        fc = c.face_contact
        if mode == SPAN_ALL_FACES:
            hit = bool(np.all(fc))
        elif axis is not None:
            hit = bool(fc[axis, 0] and fc[axis, 1])
        else:
            hit = bool(np.any(fc[:, 0] & fc[:, 1]))
        count += hit
    return count


def count_m_branches(labels: ClusterLabels, origin, m_radius: float) -> int:
    """Arms of the origin's cluster escaping past radius m_radius.

    Take the cluster whose ball covers the origin (no ball, no
    branches).  Among its points at distance at least m_radius - R from
    the origin, re-cluster at the same connection range and count the
    components that reach the window boundary.
    """
    home = labels.cluster_containing(origin)
    if home is None:
        return 0
    pat = labels.pattern
    R = labels.radius
    members = pat.points[labels.labels == home]
    x0 = np.asarray(origin, dtype=float)
    far = members[np.linalg.norm(members - x0, axis=1) >= m_radius - R]
    if len(far) == 0:
        return 0
    sub = pat.with_points(far)
    sub_labels = build_boolean_model(sub, R)
    return count_spanning_clusters_touching_boundary(sub_labels)


def count_spanning_clusters_touching_boundary(labels: ClusterLabels) -> int:
    """Clusters with any face contact at all."""
    return sum(bool(np.any(c.face_contact)) for c in labels.clusters)
