"""Bounding volume hierarchy over triangle soups.

Median split on the longest centroid axis, flattened into plain arrays
so the traversal kernels can walk it without objects.  The build is
deterministic for a given triangle order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LEAF_SIZE = 4


@dataclass
class BVH:
    bounds_min: np.ndarray  # (N, 3)
    bounds_max: np.ndarray  # (N, 3)
    left: np.ndarray        # (N,) int32; internal: left child, leaf: -(start+1)
    right: np.ndarray       # (N,) int32; internal: right child, leaf: count
    order: np.ndarray       # (T,) int32 permutation into the triangle arrays


def build_bvh(tri_verts: np.ndarray) -> BVH:
    """Build over triangles given as (T, 3, 3) corner positions."""
    count = len(tri_verts)
    if count == 0:
        return BVH(
            bounds_min=np.zeros((1, 3)),
            bounds_max=np.full((1, 3), -1.0),  # inverted box: never hit
            left=np.array([-1], dtype=np.int32),
            right=np.array([0], dtype=np.int32),
            order=np.zeros(0, dtype=np.int32),
        )

    tri_min = tri_verts.min(axis=1)
    tri_max = tri_verts.max(axis=1)
    centroids = tri_verts.mean(axis=1)
    order = np.arange(count, dtype=np.int32)

    capacity = max(2 * count, 16)
    bounds_min = np.empty((capacity, 3))
    bounds_max = np.empty((capacity, 3))
    left = np.empty(capacity, dtype=np.int32)
    right = np.empty(capacity, dtype=np.int32)

    n_nodes = 1
    stack = [(0, 0, count)]
    while stack:
        node, start, end = stack.pop()
        idx = order[start:end]
        bounds_min[node] = tri_min[idx].min(axis=0)
        bounds_max[node] = tri_max[idx].max(axis=0)
        span = end - start

        make_leaf = span <= LEAF_SIZE
        if not make_leaf:
            c = centroids[idx]
            extent = c.max(axis=0) - c.min(axis=0)
            axis = int(np.argmax(extent))
            make_leaf = extent[axis] <= 1e-12
        if make_leaf:
            left[node] = -(start + 1)
            right[node] = span
            continue

        mid = span // 2
        sel = np.argpartition(c[:, axis], mid)
        order[start:end] = idx[sel]
        child_left, child_right = n_nodes, n_nodes + 1
        n_nodes += 2
        left[node] = child_left
        right[node] = child_right
        stack.append((child_left, start, start + mid))
        stack.append((child_right, start + mid, end))

    return BVH(
        bounds_min=np.ascontiguousarray(bounds_min[:n_nodes]),
        bounds_max=np.ascontiguousarray(bounds_max[:n_nodes]),
        left=np.ascontiguousarray(left[:n_nodes]),
        right=np.ascontiguousarray(right[:n_nodes]),
        order=order,
    )
