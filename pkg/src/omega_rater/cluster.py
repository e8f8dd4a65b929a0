"""DBSCAN over [a, c, omega] feature vectors and rating-free polarity labels.

Neighborhoods come from a uniform grid fine enough that points sharing a
cell are always neighbors, so a well-populated cell is core without any
distance work. The result is defined independently of traversal order:

* a point is core when at least ``min_pts`` points (itself included) lie
  within ``eps``;
* clusters are connected components of core points under the ``eps``
  relation, numbered by their lowest-index core point;
* a non-core point with a core neighbor is a border point of the cluster of
  its lowest-index core neighbor; everything else is noise.
"""

from __future__ import annotations

import itertools
import logging
import math
from collections import Counter
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

log = logging.getLogger(__name__)

NOISE = -1
ROLES = ("core", "border", "noise")
POLARITIES = ("positive", "negative", "extreme_positive", "extreme_negative", "unlabeled")
SCALINGS = ("none", "minmax")

# cap on row x candidate distance evaluations held in memory at once
_BLOCK_PAIRS = 1 << 22


@dataclass(frozen=True)
class DbscanParams:
    eps: float = 0.09
    min_pts: int = 7
    scaling: str = "none"

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"eps must be > 0, got {self.eps}")
        if self.min_pts < 1:
            raise ValueError(f"min_pts must be >= 1, got {self.min_pts}")
        if self.scaling not in SCALINGS:
            raise ValueError(f"scaling must be one of {SCALINGS}")


@dataclass(frozen=True)
class ClusterAssignment:
    id: str
    cluster_id: int
    role: str
    polarity: str = "unlabeled"


def minmax_scale(points: np.ndarray) -> np.ndarray:
    """Map each column affinely onto [0, 1]; constant columns map to 0."""
    lo = points.min(axis=0)
    span = points.max(axis=0) - lo
    out = np.zeros_like(points)
    ok = span > 0
    out[:, ok] = (points[:, ok] - lo[ok]) / span[ok]
    return out


class GridIndex:
    """Fixed-radius neighbor search on a uniform grid.

    Cells are ``eps / sqrt(dim)`` wide, so two points sharing a cell are
    always within ``eps`` of each other, and every ``eps`` neighbor of a point
    lies within two cells of it along each axis.
    """

    def __init__(self, points, eps: float):
        self.points = np.ascontiguousarray(points, dtype=float)
        if self.points.ndim != 2:
            raise ValueError("points must be a 2-D array")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("points must be finite")
        self.eps = float(eps)
        self.eps2 = self.eps * self.eps
        n, dim = self.points.shape
        # slightly narrower than eps/sqrt(dim) so rounding never puts a non-neighbor in the same cell
        self.side = self.eps / math.sqrt(dim) * (1.0 - 1e-9)
        reach = int(self.eps / self.side) + 1
        offsets = np.array(list(itertools.product(range(-reach, reach + 1), repeat=dim)), dtype=np.int64)
        gap = np.maximum(np.abs(offsets) - 1, 0) * self.side
        offsets = offsets[(gap ** 2).sum(axis=1) <= self.eps2]
        self.offsets = offsets[np.argsort(np.abs(offsets).sum(axis=1), kind="stable")]  # nearest first
        self.reach = reach

        self.origin = self.points.min(axis=0) if n else np.zeros(dim)
        keys = np.floor((self.points - self.origin) / self.side).astype(np.int64) + reach
        self._extent = (keys.max(axis=0) + reach + 1) if n else np.ones(dim, np.int64)
        codes = self._encode(keys)
        self.order = np.argsort(codes, kind="stable")  # by cell, then by point index
        self.cell_codes, starts = np.unique(codes[self.order], return_index=True)
        self.starts = np.append(starts, n)
        self.sizes = np.diff(self.starts)
        self.cell_of = np.empty(n, dtype=np.int64)
        self.cell_of[self.order] = np.repeat(np.arange(len(self.cell_codes)), self.sizes)
        cell_keys = keys[self.order[starts]] if n else keys
        self.neighbors = self._lookup(cell_keys[:, None, :] + self.offsets[None, :, :])

    def _encode(self, keys):
        """Integer code per key row, or tuple keys when the grid is too large for int64."""
        self._linear = float(np.prod(self._extent.astype(float))) < 2.0 ** 62
        if self._linear:
            code = np.zeros(keys.shape[:-1], dtype=np.int64)
            for d in range(keys.shape[-1]):
                code = code * self._extent[d] + keys[..., d]
            return code
        uniq, inv = np.unique(keys, axis=0, return_inverse=True)
        self._tuple_ids = {tuple(k): i for i, k in enumerate(uniq.tolist())}
        return inv.reshape(-1)

    def _lookup(self, keys) -> np.ndarray:
        """Cell numbers for key rows of shape (..., dim); -1 where the cell is empty."""
        shape = keys.shape[:-1]
        inside = np.all((keys >= 0) & (keys < self._extent), axis=-1)
        out = np.full(shape, -1, dtype=np.int64)
        if not len(self.cell_codes):
            return out
        if self._linear:
            code = np.zeros(shape, dtype=np.int64)
            for d in range(keys.shape[-1]):
                code = code * self._extent[d] + np.clip(keys[..., d], 0, self._extent[d] - 1)
            pos = np.clip(np.searchsorted(self.cell_codes, code), 0, len(self.cell_codes) - 1)
            hit = inside & (self.cell_codes[pos] == code)
            out[hit] = pos[hit]
            return out
        flat = keys.reshape(-1, keys.shape[-1]).tolist()
        ids = [self._tuple_ids.get(tuple(k), -1) for k in flat]
        out = np.array(ids, dtype=np.int64).reshape(shape)
        # tuple ids index np.unique order, which is also the order of cell_codes
        return np.where(inside, out, -1)

    def members(self, cell: int) -> np.ndarray:
        """Point indices in ``cell``, ascending."""
        return self.order[self.starts[cell]:self.starts[cell + 1]]

    def candidates(self, cell: int) -> np.ndarray:
        """Sorted indices of all points in the cells around ``cell``."""
        nb = self.neighbors[cell]
        nb = nb[nb >= 0]
        if not len(nb):
            return np.empty(0, dtype=np.int64)
        return np.sort(np.concatenate([self.members(c) for c in nb]))

    def query(self, point) -> np.ndarray:
        """Sorted indices of all points within ``eps`` of ``point``."""
        p = np.asarray(point, dtype=float)
        key = np.floor((p - self.origin) / self.side).astype(np.int64) + self.reach
        cells = self._lookup(key[None, :] + self.offsets)
        cells = cells[cells >= 0]
        if not len(cells):
            return np.empty(0, dtype=np.int64)
        cand = np.sort(np.concatenate([self.members(c) for c in cells]))
        return cand[within(p[None, :], self.points[cand], self.eps2)[0]]


def within(a: np.ndarray, b: np.ndarray, eps2: float) -> np.ndarray:
    """Boolean matrix: row i of ``a`` is within ``sqrt(eps2)`` of row j of ``b``."""
    out = np.empty((len(a), len(b)), dtype=bool)
    step = max(1, _BLOCK_PAIRS // max(1, len(b)))
    for s in range(0, len(a), step):
        d2 = ((a[s:s + step, None, :] - b[None, :, :]) ** 2).sum(axis=2)
        out[s:s + step] = d2 <= eps2
    return out


def _any_within(a: np.ndarray, b: np.ndarray, eps2: float) -> bool:
    step = max(1, _BLOCK_PAIRS // max(1, len(b)))
    for s in range(0, len(a), step):
        if np.any(((a[s:s + step, None, :] - b[None, :, :]) ** 2).sum(axis=2) <= eps2):
            return True
    return False


def dbscan_labels(points, eps: float, min_pts: int) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(cluster_ids, is_core)`` arrays; noise has cluster id ``NOISE``."""
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    labels = np.full(n, NOISE, dtype=np.int64)
    is_core = np.zeros(n, dtype=bool)
    if n == 0:
        return labels, is_core
    pts = pts.reshape(n, -1)
    g = GridIndex(pts, eps)
    n_cells = len(g.sizes)

    # a cell with min_pts points is all core; elsewhere count neighbors exactly
    dense = g.sizes >= min_pts
    is_core[g.order[np.repeat(dense, g.sizes)]] = True
    sparse = np.flatnonzero(~dense)
    for c in sparse:
        rows = g.members(c)
        is_core[rows] = within(pts[rows], pts[g.candidates(c)], g.eps2).sum(axis=1) >= min_pts

    core_members = [None] * n_cells
    has_core = np.zeros(n_cells, dtype=bool)
    for c in np.flatnonzero(np.bincount(g.cell_of[is_core], minlength=n_cells)):
        m = g.members(c)
        core_members[c] = m[is_core[m]]
        has_core[c] = True

    # core points of one cell are mutually reachable; join cells through any close core pair
    parent = list(range(n_cells))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    neighbors = g.neighbors.tolist()
    has = has_core.tolist()
    for a in np.flatnonzero(has_core).tolist():
        pa = None
        for b in neighbors[a]:
            if b <= a or not has[b]:
                continue
            ra, rb = find(a), find(b)
            if ra == rb:
                continue
            if pa is None:
                pa = pts[core_members[a]]
            if _any_within(pa, pts[core_members[b]], g.eps2):
                parent[max(ra, rb)] = min(ra, rb)

    core_idx = np.flatnonzero(is_core)
    if len(core_idx):
        roots = np.array([find(c) for c in range(n_cells)])
        comp = roots[g.cell_of[core_idx]]
        # number clusters by their lowest-index core point
        _, first, inv = np.unique(comp, return_index=True, return_inverse=True)
        rank = np.empty(len(first), dtype=np.int64)
        rank[np.argsort(first, kind="stable")] = np.arange(len(first))
        labels[core_idx] = rank[inv.reshape(-1)]

        for c in sparse:
            rows = g.members(c)
            rows = rows[~is_core[rows]]
            if not len(rows):
                continue
            nb = g.neighbors[c]
            parts = [core_members[b] for b in nb[nb >= 0] if has[b]]
            if not parts:
                continue
            cand = np.sort(np.concatenate(parts))
            near = within(pts[rows], pts[cand], g.eps2)
            ok = near.any(axis=1)
            labels[rows[ok]] = labels[cand[near[ok].argmax(axis=1)]]  # lowest-index core neighbor
    return labels, is_core


def dbscan(points, params: DbscanParams = DbscanParams(), ids: Sequence[str] | None = None) -> list[ClusterAssignment]:
    """Cluster feature vectors; polarity is left ``unlabeled``."""
    pts = np.array([p.as_tuple() if hasattr(p, "as_tuple") else p for p in points], dtype=float)
    if len(pts) == 0:
        return []
    if params.scaling == "minmax":
        pts = minmax_scale(pts)
    labels, is_core = dbscan_labels(pts, params.eps, params.min_pts)
    if ids is None:
        ids = [str(i) for i in range(len(pts))]
    out = []
    for rid, lab, core in zip(ids, labels.tolist(), is_core.tolist()):
        role = "core" if core else ("noise" if lab == NOISE else "border")
        out.append(ClusterAssignment(rid, lab, role))
    return out


def cluster_sizes(assignments: Sequence[ClusterAssignment]) -> Counter:
    return Counter(a.cluster_id for a in assignments if a.cluster_id != NOISE)


def label_polarity(assignments: Sequence[ClusterAssignment], features: Sequence,
                   mass_threshold: float = 0.05) -> list[ClusterAssignment]:
    """Attach polarity labels from mean (pos - neg) per cluster, never from ratings.

    Among clusters holding at least ``mass_threshold`` of all points, the one
    with the highest mean (pos - neg) is ``positive`` and the lowest is
    ``negative``. Any other cluster that is more positive than the positive
    cluster and sits above it in mean omega is ``extreme_positive``; the
    mirror image (more negative, below in omega) is ``extreme_negative``.

    ``features`` are FeatureRecords aligned with ``assignments``.
    """
    if len(assignments) != len(features):
        raise ValueError("assignments and features must be aligned")
    n = len(assignments)
    sums: dict[int, list[float]] = {}
    for asg, rec in zip(assignments, features):
        if asg.cluster_id == NOISE:
            continue
        acc = sums.setdefault(asg.cluster_id, [0.0, 0.0, 0])
        acc[0] += rec.triple.pos - rec.triple.neg
        acc[1] += rec.omega
        acc[2] += 1
    stats = {cid: (s / k, o / k, k) for cid, (s, o, k) in sums.items()}
    qualifying = [cid for cid, (_, _, k) in stats.items() if k >= mass_threshold * n]
    labels = {cid: "unlabeled" for cid in stats}
    if len(qualifying) < 2:
        log.warning("polarity labelling needs 2 clusters with >= %.1f%% of points, found %d; "
                    "all clusters left unlabeled", 100 * mass_threshold, len(qualifying))
    else:
        pos_c = max(qualifying, key=lambda c: (stats[c][0], -c))
        neg_c = min(qualifying, key=lambda c: (stats[c][0], c))
        labels[pos_c], labels[neg_c] = "positive", "negative"
        pm, po, _ = stats[pos_c]
        nm, no, _ = stats[neg_c]
        for cid, (m, o, _) in stats.items():
            if cid in (pos_c, neg_c):
                continue
            if m > 0 and m > pm and o > po:
                labels[cid] = "extreme_positive"
            elif m < 0 and m < nm and o < no:
                labels[cid] = "extreme_negative"
    return [replace(a, polarity=labels.get(a.cluster_id, "unlabeled")) for a in assignments]


def _purity(polarity: str, above: float | None, below: float | None) -> float | None:
    if polarity in ("positive", "extreme_positive"):
        return above
    if polarity in ("negative", "extreme_negative"):
        return below
    return None


def evaluate_against_ratings(assignments: Sequence[ClusterAssignment], ratings: Mapping[str, int | None],
                             rating_scale: int = 5) -> dict:
    """Per-cluster rating histograms and the share of ratings above/below the scale midpoint.

    This is the only place ratings meet cluster output. With 5 stars the
    midpoint is 3, so "above" means 4-5 and "below" means 1-2.
    """
    if not assignments or not any(ratings.get(a.id) is not None for a in assignments):
        return {"available": False, "reason": "no ratings" if assignments else "no clusters"}
    mid = (rating_scale + 1) / 2
    groups: dict[int, list[ClusterAssignment]] = {}
    for a in assignments:
        groups.setdefault(a.cluster_id, []).append(a)
    clusters = {}
    for cid in sorted(groups):
        members = groups[cid]
        hist = [0] * rating_scale
        for a in members:
            r = ratings.get(a.id)
            if r is not None:
                hist[r - 1] += 1
        rated = sum(hist)
        above = sum(hist[r - 1] for r in range(1, rating_scale + 1) if r > mid) / rated if rated else None
        below = sum(hist[r - 1] for r in range(1, rating_scale + 1) if r < mid) / rated if rated else None
        polarity = members[0].polarity
        clusters[str(cid)] = {
            "cluster_id": cid,
            "polarity": polarity,
            "size": len(members),
            "n_rated": rated,
            "histogram": hist,
            "frac_above_mid": above,
            "frac_below_mid": below,
            "purity": _purity(polarity, above, below),
        }
    return {"available": True, "rating_scale": rating_scale, "midpoint": mid, "clusters": clusters}
