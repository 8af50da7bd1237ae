"""Exact k-nearest-neighbour search over a 3-D k-d tree.

Queries are answered in batches: every query first gets an upper bound on
its k-th neighbour distance from the points stored next to its home leaf,
then the tree is walked level by level for all queries at once, pruning
nodes whose bounding box lies farther than the bound. Surviving leaves are
scanned exhaustively and candidates are ordered by (distance, index).
"""

from __future__ import annotations

import numpy as np

from .errors import EmptyCloud

LEAF_SIZE = 16


def _sqdist(q, p):
    # Fixed summation order; the pruning test relies on it being identical
    # for box and point distances.
    d = q - p
    return (d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1]) + d[..., 2] * d[..., 2]


class SpatialIndex:
    """k-d tree with median splits along the widest axis.

    ``points`` is kept as a float64 ``(N, 3)`` array; ``query`` returns
    neighbours sorted by ascending distance with ties broken by the lower
    point index.
    """

    def __init__(self, points, leaf_size=LEAF_SIZE):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must have shape (N, 3), got {pts.shape}")
        if len(pts) == 0:
            raise EmptyCloud("cannot index an empty cloud")
        if not np.isfinite(pts).all():
            raise ValueError("points must be finite")
        self.points = pts
        self.leaf_size = int(leaf_size)
        self._build()

    def __len__(self):
        return len(self.points)

    def _build(self):
        pts = self.points
        perm = np.arange(len(pts))
        start, end, dim, split, left, right = [], [], [], [], [], []
        lo_box, hi_box, parents = [], [], []
        stack = [(0, len(pts), -1, 0)]  # (lo, hi, parent, side)
        while stack:
            lo, hi, parent, side = stack.pop()
            node = len(start)
            if parent >= 0:
                (left if side == 0 else right)[parent] = node
            parents.append(parent)
            sub = pts[perm[lo:hi]]
            bmin, bmax = sub.min(axis=0), sub.max(axis=0)
            start.append(lo)
            end.append(hi)
            lo_box.append(bmin)
            hi_box.append(bmax)
            left.append(-1)
            right.append(-1)
            if hi - lo <= self.leaf_size:
                dim.append(-1)
                split.append(0.0)
                continue
            axis = int(np.argmax(bmax - bmin))
            m = (hi - lo) // 2
            order = np.argpartition(sub[:, axis], m, kind="introselect")
            perm[lo:hi] = perm[lo:hi][order]
            dim.append(axis)
            split.append(pts[perm[lo + m], axis])
            # Right pushed first so the left subtree is laid out first.
            stack.append((lo + m, hi, node, 1))
            stack.append((lo, lo + m, node, 0))
        self._perm = perm
        self._start = np.array(start, dtype=np.int64)
        self._end = np.array(end, dtype=np.int64)
        self._dim = np.array(dim, dtype=np.int64)
        self._split = np.array(split, dtype=np.float64)
        self._left = np.array(left, dtype=np.int64)
        self._right = np.array(right, dtype=np.int64)
        self._parent = np.array(parents, dtype=np.int64)
        self._bmin = np.array(lo_box)
        self._bmax = np.array(hi_box)
        self._sorted_pts = pts[perm]

    def _home_leaf(self, q):
        node = np.zeros(len(q), dtype=np.int64)
        active = self._dim[node] >= 0
        while active.any():
            n = node[active]
            d = self._dim[n]
            go_right = q[active, d] >= self._split[n]
            node[active] = np.where(go_right, self._right[n], self._left[n])
            active = self._dim[node] >= 0
        return node

    def _box_sqdist(self, q, nodes):
        gap = np.maximum(np.maximum(self._bmin[nodes] - q, q - self._bmax[nodes]), 0.0)
        return (gap[:, 0] * gap[:, 0] + gap[:, 1] * gap[:, 1]) + gap[:, 2] * gap[:, 2]

    def query(self, queries, k=1, exclude=None, chunk=1024):
        """k nearest neighbours of each query point.

        ``exclude`` optionally gives, per query, one point index that must
        not be returned (use it to skip the query point itself). Returns
        ``(distances, indices)`` of shape ``(M, k)``; when fewer than ``k``
        candidates exist the trailing columns hold ``inf`` and ``-1``.
        """
        q = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        m = len(q)
        if exclude is None:
            exclude = np.full(m, -1, dtype=np.int64)
        exclude = np.asarray(exclude, dtype=np.int64)
        dist = np.full((m, k), np.inf)
        idx = np.full((m, k), -1, dtype=np.int64)
        for s in range(0, m, chunk):
            sl = slice(s, s + chunk)
            d, ii = self._query_block(q[sl], k, exclude[sl])
            dist[sl, : d.shape[1]] = d
            idx[sl, : ii.shape[1]] = ii
        return dist, idx

    def _query_block(self, q, k, exclude):
        n = len(self.points)
        m = len(q)
        excluding = bool((exclude >= 0).any())
        k_eff = min(k, n - 1 if excluding else n)
        if k_eff <= 0 or m == 0:
            return np.empty((m, 0)), np.empty((m, 0), dtype=np.int64)

        # Bound: k-th distance within the smallest subtree around the home
        # leaf holding enough points. Subtrees are contiguous in storage.
        node = self._home_leaf(q)
        need = k_eff + 1 if excluding else k_eff
        small = (self._end[node] - self._start[node]) < need
        while small.any():
            node[small] = self._parent[node[small]]
            small = (self._end[node] - self._start[node]) < need
        size = self._end[node] - self._start[node]
        win = self._start[node][:, None] + np.arange(int(size.max()))
        valid = win < self._end[node][:, None]
        win = np.where(valid, win, 0)
        d2 = _sqdist(q[:, None, :], self._sorted_pts[win])
        d2[~valid | (self._perm[win] == exclude[:, None])] = np.inf
        bound = np.partition(d2, k_eff - 1, axis=1)[:, k_eff - 1]
        # Slack keeps points whose rounded distance ties the bound.
        bound = bound * (1.0 + 1e-9)

        # Level-synchronous walk over (query, node) pairs.
        qi = np.arange(m)
        nodes = np.zeros(m, dtype=np.int64)
        leaf_q, leaf_n = [], []
        while len(qi):
            keep = self._box_sqdist(q[qi], nodes) <= bound[qi]
            qi, nodes = qi[keep], nodes[keep]
            is_leaf = self._dim[nodes] < 0
            leaf_q.append(qi[is_leaf])
            leaf_n.append(nodes[is_leaf])
            qi, nodes = qi[~is_leaf], nodes[~is_leaf]
            qi = np.concatenate([qi, qi])
            nodes = np.concatenate([self._left[nodes], self._right[nodes]])
        lq = np.concatenate(leaf_q)
        ln = np.concatenate(leaf_n)

        # Scan surviving leaves.
        slot = self._start[ln][:, None] + np.arange(self.leaf_size)
        valid = slot < self._end[ln][:, None]
        slot = np.where(valid, slot, 0)
        cand = self._perm[slot]
        d2 = _sqdist(q[lq][:, None, :], self._sorted_pts[slot])
        ok = valid & (cand != exclude[lq][:, None]) & (d2 <= bound[lq][:, None])
        cq = np.broadcast_to(lq[:, None], ok.shape)[ok]
        cd = np.sqrt(d2[ok])
        ci = cand[ok]

        # Exact k-th distance per query from a dense (query, candidate) grid,
        # so only near-final candidates reach the full three-key sort.
        grp = np.argsort(cq, kind="stable")
        cq, cd, ci = cq[grp], cd[grp], ci[grp]
        first = np.searchsorted(cq, np.arange(m))
        rank = np.arange(len(cq)) - first[cq]
        grid = np.full((m, int(rank.max()) + 1), np.inf)
        grid[cq, rank] = cd
        kth = np.partition(grid, k_eff - 1, axis=1)[:, k_eff - 1]
        near = cd <= kth[cq]
        cq, cd, ci = cq[near], cd[near], ci[near]

        order = np.lexsort((ci, cd, cq))
        cq, cd, ci = cq[order], cd[order], ci[order]
        first = np.searchsorted(cq, np.arange(m))
        rank = np.arange(len(cq)) - first[cq]
        take = rank < k_eff
        out_d = np.empty((m, k_eff))
        out_i = np.empty((m, k_eff), dtype=np.int64)
        out_d[cq[take], rank[take]] = cd[take]
        out_i[cq[take], rank[take]] = ci[take]
        return out_d, out_i

    def knn_self(self, k):
        """k nearest *other* points for every indexed point."""
        return self.query(self.points, k, exclude=np.arange(len(self.points)))

