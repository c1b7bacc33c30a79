"""Single-pass node clustering in the pattern-ratio feature space.

Each node gets a P-vector of pattern ratios R[i]; the per-pattern maxima
form the limit points C. A node is assigned the pattern whose limit point
is closest in per-coordinate absolute distance, in one O(N) sweep.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError

RATIO_EPS = 1e-8


@dataclass
class FeatureSpace:
    """Pattern-ratio features per node plus the per-pattern limit points."""

    ratios: np.ndarray  # [N, P]
    limits: np.ndarray  # [P], column maxima of ratios

    @classmethod
    def from_ratios(cls, ratios: np.ndarray) -> "FeatureSpace":
        ratios = np.asarray(ratios, dtype=np.float64)
        return cls(ratios=ratios, limits=ratios.max(axis=0))


@dataclass
class ClusterAssignment:
    """Node-to-type map with the induced pools and permutation.

    ``pools[j]`` lists the nodes of type j in ascending order; concatenating
    the pools gives ``permutation``, and ``inverse_permutation`` restores
    original node positions. ``comparisons`` counts the primitive distance
    evaluations and comparisons spent by :func:`assign`.
    """

    types: np.ndarray  # [N] ints in [0, P)
    pools: list[list[int]]
    permutation: np.ndarray
    inverse_permutation: np.ndarray
    comparisons: int = field(default=0, compare=False)

    @classmethod
    def from_types(cls, types: np.ndarray, num_types: int, comparisons: int = 0):
        types = np.asarray(types, dtype=np.int64)
        pools: list[list[int]] = [[] for _ in range(num_types)]
        for i, t in enumerate(types):
            pools[int(t)].append(i)
        permutation = np.array(
            [i for pool in pools for i in pool], dtype=np.int64
        )
        inverse = np.empty_like(permutation)
        inverse[permutation] = np.arange(permutation.size)
        return cls(
            types=types,
            pools=pools,
            permutation=permutation,
            inverse_permutation=inverse,
            comparisons=comparisons,
        )

    @property
    def num_types(self) -> int:
        return len(self.pools)


def single_pool(n: int) -> ClusterAssignment:
    """Trivial assignment: every node in one pool (whole-graph convolution)."""
    return ClusterAssignment.from_types(np.zeros(n, dtype=np.int64), 1)


def _guard_denominator(d: np.ndarray) -> np.ndarray:
    # sign(d) * max(|d|, eps), with sign(0) treated as +1
    sign = np.where(d >= 0, 1.0, -1.0)
    return sign * np.maximum(np.abs(d), RATIO_EPS)


def build_feature_space(
    patterns: list[np.ndarray],
    x_hat: np.ndarray,
    pattern_weights: list[np.ndarray],
    total_weight: np.ndarray,
) -> FeatureSpace:
    """Project patterns and input to scalars and form per-node ratio means.

    ``patterns`` holds P arrays [B, T, N, D]; each is projected by its
    [D, 1] weight, divided by the projected input (guarded), and averaged
    over batch and time to give R in [N, P].
    """
    if len(patterns) != len(pattern_weights):
        raise ShapeError(
            f"{len(patterns)} patterns but {len(pattern_weights)} ratio weights"
        )
    denom = _guard_denominator(x_hat @ total_weight)  # [B, T, N, 1]
    cols = []
    for x_p, w_p in zip(patterns, pattern_weights):
        ratio_t = (x_p @ w_p) / denom  # [B, T, N, 1]
        cols.append(ratio_t[..., 0].mean(axis=(0, 1)))  # [N]
    ratios = np.stack(cols, axis=1)
    return FeatureSpace.from_ratios(ratios)


def assign(fs: FeatureSpace) -> ClusterAssignment:
    """Assign each node to the nearest limit point; ties go to the lower type.

    One explicit pass over nodes: P distance evaluations plus P-1
    comparisons per node, counted in ``comparisons`` (O(N) in the node
    count for fixed P).
    """
    ratios, limits = fs.ratios, fs.limits
    n, p = ratios.shape
    types = np.empty(n, dtype=np.int64)
    comparisons = 0
    for i in range(n):
        best = 0
        best_dist = abs(ratios[i, 0] - limits[0])
        comparisons += 1
        for j in range(1, p):
            dist = abs(ratios[i, j] - limits[j])
            comparisons += 2  # one distance evaluation, one comparison
            if dist < best_dist:
                best = j
                best_dist = dist
        types[i] = best
    return ClusterAssignment.from_types(types, p, comparisons=comparisons)
