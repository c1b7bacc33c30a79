"""Traffic-pattern decoupling.

The hidden input representation is split into P pattern tensors by sigmoid
gates conditioned on time-of-day, day-of-week, and node embeddings. Gating
is sequential on the running residual, so the pattern tensors always sum
back to the input exactly: the last pattern is the residual.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .numcore import (
    Tensor,
    broadcast_to,
    concat,
    matmul,
    relu,
    reshape,
    sigmoid,
    take,
)


@dataclass
class TimestampEmbeddings:
    """Learnable rows indexed by time-of-day and day-of-week."""

    daily: Tensor  # [steps_per_day, D_t]
    weekly: Tensor  # [7, D_t]

    def rows(self, tod: np.ndarray, dow: np.ndarray) -> tuple[Tensor, Tensor]:
        """Look up embedding rows for index arrays of identical shape."""
        return take(self.daily, tod, axis=0), take(self.weekly, dow, axis=0)


@dataclass
class GateParams:
    """One gate head: two affine layers producing a sigmoid gate of width D."""

    w1: Tensor  # [2*D_t + D_s, D]
    b1: Tensor  # [D]
    w2: Tensor  # [D, D]
    b2: Tensor  # [D]


@dataclass
class PatternSet:
    """P decoupled pattern tensors plus the P-1 gates that produced them."""

    patterns: list[Tensor]  # each [B, T_h, N, D]
    gates: list[Tensor]  # each [B, T_h, N, D], values in (0, 1)


def embed_input(x, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine channel lift of the scaled target channel, 1 -> D."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    return matmul(x, weight) + bias


def gate_features(
    tod: np.ndarray,
    dow: np.ndarray,
    node_embedding: Tensor,
    ts: TimestampEmbeddings,
) -> Tensor:
    """Per-(step, node) conditioning vector: ReLU(T_D || T_W || E).

    ``tod`` and ``dow`` are [B, T_h] integer index arrays; the result is
    [B, T_h, N, 2*D_t + D_s].
    """
    b, t = tod.shape
    n, d_s = node_embedding.shape
    d_t = ts.daily.shape[1]
    daily, weekly = ts.rows(tod, dow)
    daily = broadcast_to(reshape(daily, (b, t, 1, d_t)), (b, t, n, d_t))
    weekly = broadcast_to(reshape(weekly, (b, t, 1, d_t)), (b, t, n, d_t))
    emb = broadcast_to(reshape(node_embedding, (1, 1, n, d_s)), (b, t, n, d_s))
    return relu(concat([daily, weekly, emb], axis=-1))


def decouple(
    x_hat: Tensor,
    tod: np.ndarray,
    dow: np.ndarray,
    node_embedding: Tensor,
    ts: TimestampEmbeddings,
    gate_params: list[GateParams],
) -> PatternSet:
    """Split the hidden tensor into len(gate_params) + 1 pattern tensors.

    Gate n is sigmoid((features @ w1 + b1) @ w2 + b2); pattern n multiplies
    the running residual by the gate, and the final pattern is whatever
    remains, so the patterns sum to ``x_hat``.
    """
    if gate_params is None:
        raise ConfigError("gate_params must be a list (possibly empty)")
    patterns: list[Tensor] = []
    gates: list[Tensor] = []
    remaining = x_hat
    if gate_params:
        feats = gate_features(tod, dow, node_embedding, ts)
        for gp in gate_params:
            hidden = matmul(feats, gp.w1) + gp.b1
            gate = sigmoid(matmul(hidden, gp.w2) + gp.b2)
            piece = remaining * gate
            patterns.append(piece)
            gates.append(gate)
            remaining = remaining - piece
    patterns.append(remaining)
    return PatternSet(patterns=patterns, gates=gates)
