"""End-to-end forecast model: decoupling, clustering, per-cluster graph
convolution, recurrent encoding, skip connections, and the regression head.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import clusterer, dstgg, sie, std
from .clusterer import ClusterAssignment
from .data import Scaler, WindowedDataset
from .errors import ConfigError, FormatError
from .numcore import (
    ParameterStore,
    SplitRng,
    Tensor,
    broadcast_to,
    concat,
    eye,
    matmul,
    mean,
    no_grad,
    relu,
    reshape,
    take,
    transpose,
)

GRAPH_MODES = ("full", "no_sg", "no_tg")
PROBE_WINDOWS = 32  # training windows consulted when refreshing clusters


@dataclass
class ModelConfig:
    n: int = 0  # node count; filled from data when 0
    p: int = 3  # number of traffic patterns
    d: int = 10  # hidden feature width
    d_s: int = 10  # node embedding width
    d_t: int = 10  # timestamp embedding width
    t_h: int = 12  # input window length
    t_f: int = 12  # forecast horizon
    k: int = 10  # per-row nonzeros kept in fused graphs
    hops: int = 2  # propagation depth
    gamma: float = 0.05  # feature retention during propagation
    alpha: float = 3.0  # spatial graph saturation scale
    beta: float = 0.5  # temporal/fusion scale
    rnn_width_multiplier: int = 1
    dropout: float = 0.15
    seed: int = 1
    steps_per_day: int = 288
    graph_mode: str = "full"  # full | no_sg | no_tg
    single_cluster: bool = False  # collapse all pools into one

    def validate(self) -> None:
        positives = {
            "n": self.n,
            "p": self.p,
            "d": self.d,
            "d_s": self.d_s,
            "d_t": self.d_t,
            "t_h": self.t_h,
            "t_f": self.t_f,
            "hops": self.hops,
            "rnn_width_multiplier": self.rnn_width_multiplier,
            "steps_per_day": self.steps_per_day,
        }
        for name, value in positives.items():
            if value < 1:
                raise ConfigError(f"{name} must be >= 1, got {value}")
        if self.k < 0:
            raise ConfigError(f"k must be >= 0, got {self.k}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma must lie in [0, 1], got {self.gamma}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.alpha <= 0 or self.beta <= 0:
            raise ConfigError("alpha and beta must be positive")
        if self.graph_mode not in GRAPH_MODES:
            raise ConfigError(f"graph_mode must be one of {GRAPH_MODES}")


class ForecastModel:
    """Holds all parameters, the current cluster assignment, and a mode flag."""

    def __init__(self, cfg: ModelConfig):
        cfg.validate()
        if cfg.n < 1:
            raise ConfigError("model construction needs a concrete node count")
        self.cfg = cfg
        root = SplitRng(cfg.seed)
        self.store = ParameterStore(root.child("params"))
        self._dropout_rng = root.child("dropout")
        self._register()
        self.assignment: ClusterAssignment = clusterer.single_pool(cfg.n)
        self.training = True

    # ------------------------------------------------------------------
    # construction

    def _register(self) -> None:
        cfg = self.cfg
        add = self.store.add
        width = cfg.rnn_width_multiplier * cfg.d

        self.embed_w = add("embed.weight", (1, cfg.d))
        self.embed_b = add("embed.bias", (cfg.d,), "zeros")

        gate_in = 2 * cfg.d_t + cfg.d_s
        self.gates = [
            std.GateParams(
                w1=add(f"std.gate{i}.w1", (gate_in, cfg.d)),
                b1=add(f"std.gate{i}.b1", (cfg.d,), "zeros"),
                w2=add(f"std.gate{i}.w2", (cfg.d, cfg.d)),
                b2=add(f"std.gate{i}.b2", (cfg.d,), "zeros"),
            )
            for i in range(cfg.p - 1)
        ]
        self.node_embedding = add("std.node_embedding", (cfg.n, cfg.d_s), "normal(0,1)")
        self.timestamps = std.TimestampEmbeddings(
            daily=add("time.daily", (cfg.steps_per_day, cfg.d_t), "normal(0,1)"),
            weekly=add("time.weekly", (7, cfg.d_t), "normal(0,1)"),
        )

        self.ratio_weights = [
            add(f"cluster.ratio.w{j}", (cfg.d, 1)) for j in range(cfg.p)
        ]
        self.ratio_total = add("cluster.ratio.w_total", (cfg.d, 1))

        self.graph_params = dstgg.ClusterGraphParams(
            e1=add("graph.e1", (cfg.n, cfg.d_s), "normal(0,1)"),
            e2=add("graph.e2", (cfg.n, cfg.d_s), "normal(0,1)"),
            w1=add("graph.w1", (cfg.d_s, cfg.d_s)),
            w2=add("graph.w2", (cfg.d_s, cfg.d_s)),
            alpha=cfg.alpha,
            beta=cfg.beta,
            k=cfg.k,
        )

        self.prop_cfg = sie.PropagationConfig(
            gamma=cfg.gamma,
            hops=cfg.hops,
            out_proj=add("prop.out_proj", (cfg.hops * cfg.d, cfg.d)),
        )

        self.encoder = sie.RecurrentEncoder(
            gru=sie.GruParams(
                update_x=add("gru.update.wx", (cfg.d, width)),
                update_h=add("gru.update.wh", (width, width)),
                update_b=add("gru.update.b", (width,), "zeros"),
                reset_x=add("gru.reset.wx", (cfg.d, width)),
                reset_h=add("gru.reset.wh", (width, width)),
                reset_b=add("gru.reset.b", (width,), "zeros"),
                cand_x=add("gru.cand.wx", (cfg.d, width)),
                cand_h=add("gru.cand.wh", (width, width)),
                cand_b=add("gru.cand.b", (width,), "zeros"),
            ),
            redist_w1=add("redist.w1", (cfg.t_h * width, width)),
            redist_w2=add("redist.w2", (width, width)),
            gain=add("redist.gain", (width,), "ones"),
            dropout=cfg.dropout,
            width=width,
        )

        skip_width = width + cfg.d + cfg.p * cfg.d + 2 * cfg.d_t
        head_hidden = 4 * cfg.d
        self.head_w1 = add("head.w1", (skip_width, head_hidden))
        self.head_b1 = add("head.b1", (head_hidden,), "zeros")
        self.head_w2 = add("head.w2", (head_hidden, cfg.t_f))
        self.head_b2 = add("head.b2", (cfg.t_f,), "zeros")
        self.head_gain = add("head.gain", (cfg.t_f,), "ones")

    # ------------------------------------------------------------------
    # bookkeeping

    def parameters(self):
        return self.store.parameters()

    def parameter_count(self) -> int:
        return self.store.count_values()

    def zero_grad(self) -> None:
        self.store.zero_grad()

    def train_mode(self) -> None:
        self.training = True

    def eval_mode(self) -> None:
        self.training = False

    def set_assignment(self, assignment: ClusterAssignment) -> None:
        if assignment.types.size != self.cfg.n:
            raise ConfigError(
                f"assignment covers {assignment.types.size} nodes, model has {self.cfg.n}"
            )
        self.assignment = assignment

    # ------------------------------------------------------------------
    # forward pieces

    def _build_graphs(
        self, tod: np.ndarray, dow: np.ndarray
    ) -> list[dstgg.FusedSubgraph]:
        """One fused subgraph per nonempty pool, in pool order."""
        cfg = self.cfg
        graphs = []
        for pool in self.assignment.pools:
            if not pool:
                continue
            members = np.asarray(pool, dtype=np.int64)
            n_p = members.size
            if cfg.graph_mode == "no_sg":
                a_s = eye(n_p)
            else:
                a_s = dstgg.spatial_graph(members, self.graph_params)
            if cfg.graph_mode == "no_tg":
                a_t = eye(n_p)
            else:
                a_t = dstgg.temporal_graph(members, self.timestamps, tod, dow, cfg.beta)
            graphs.append(
                dstgg.fuse_and_sparsify(a_s, a_t, cfg.beta, cfg.k, members)
            )
        return graphs

    def forward(self, x, tod: np.ndarray, dow: np.ndarray) -> Tensor:
        """Map scaled inputs [B, T_h, N, 1] to scaled forecasts [B, T_f, N, 1]."""
        cfg = self.cfg
        if self.assignment.types.size != cfg.n:
            raise ConfigError("cluster assignment does not match the node count")
        x = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))
        b, t, n, _ = x.shape
        if t != cfg.t_h or n != cfg.n:
            raise ConfigError(
                f"input shape {x.shape} incompatible with T_h={cfg.t_h}, N={cfg.n}"
            )

        x_hat = std.embed_input(x, self.embed_w, self.embed_b)
        pattern_set = std.decouple(
            x_hat, tod, dow, self.node_embedding, self.timestamps, self.gates
        )
        features = pattern_set.patterns[0]
        for piece in pattern_set.patterns[1:]:
            features = features + piece

        graphs = self._build_graphs(tod, dow)
        cluster_out = [
            sie.propagate(take(features, g.members, axis=2), g, self.prop_cfg)
            for g in graphs
        ]
        repositioned = sie.reassemble(cluster_out, self.assignment)
        x_out = sie.encode_sequence(
            repositioned, self.encoder, training=self.training, rng=self._dropout_rng
        )

        skip = [x_out, mean(x_hat, axis=1)]
        skip.extend(mean(piece, axis=1) for piece in pattern_set.patterns)
        d_last, w_last = self.timestamps.rows(tod[:, -1], dow[:, -1])  # [B, D_t]
        for rows in (d_last, w_last):
            skip.append(
                broadcast_to(reshape(rows, (b, 1, cfg.d_t)), (b, n, cfg.d_t))
            )
        merged = concat(skip, axis=-1)  # [B, N, skip_width]

        hidden = relu(matmul(relu(merged), self.head_w1) + self.head_b1)
        out = (matmul(hidden, self.head_w2) + self.head_b2) * self.head_gain
        return reshape(transpose(out, (0, 2, 1)), (b, cfg.t_f, n, 1))

    # ------------------------------------------------------------------
    # clustering refresh

    def refresh_clusters(
        self, train_split: WindowedDataset, scaler: Scaler
    ) -> ClusterAssignment:
        """Recompute the node assignment from a fixed probe of training windows."""
        cfg = self.cfg
        if cfg.single_cluster:
            assignment = clusterer.single_pool(cfg.n)
            self.set_assignment(assignment)
            return assignment
        probe = train_split.slice(slice(0, min(PROBE_WINDOWS, len(train_split))))
        x = scaler.apply(probe.inputs[..., :1])
        with no_grad():
            x_hat = std.embed_input(Tensor(x), self.embed_w, self.embed_b)
            pattern_set = std.decouple(
                x_hat,
                probe.tod_index,
                probe.dow_index,
                self.node_embedding,
                self.timestamps,
                self.gates,
            )
            fs = clusterer.build_feature_space(
                [p.data for p in pattern_set.patterns],
                x_hat.data,
                [w.data for w in self.ratio_weights],
                self.ratio_total.data,
            )
        assignment = clusterer.assign(fs)
        self.set_assignment(assignment)
        return assignment

    def feature_space(
        self, train_split: WindowedDataset, scaler: Scaler
    ) -> clusterer.FeatureSpace:
        """The probe-window feature space currently used for assignment."""
        probe = train_split.slice(slice(0, min(PROBE_WINDOWS, len(train_split))))
        x = scaler.apply(probe.inputs[..., :1])
        with no_grad():
            x_hat = std.embed_input(Tensor(x), self.embed_w, self.embed_b)
            pattern_set = std.decouple(
                x_hat,
                probe.tod_index,
                probe.dow_index,
                self.node_embedding,
                self.timestamps,
                self.gates,
            )
            return clusterer.build_feature_space(
                [p.data for p in pattern_set.patterns],
                x_hat.data,
                [w.data for w in self.ratio_weights],
                self.ratio_total.data,
            )


# ---------------------------------------------------------------------------
# checkpoint io: magic "MHGC" | u32 version | u32 param_count |
# repeated (u16 name_len | name | u8 rank | u32 dims[rank] | f32 values) |
# u32 N | u32 types[N]

CKPT_MAGIC = b"MHGC"
CKPT_VERSION = 1


def save_checkpoint(
    path, state: dict[str, np.ndarray], assignment: ClusterAssignment
) -> None:
    """Write parameter values (as f32; lossy) plus the node assignment."""
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<II", CKPT_VERSION, len(state)))
        for name, values in state.items():
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", values.ndim))
            fh.write(struct.pack(f"<{values.ndim}I", *values.shape))
            fh.write(values.astype("<f4").tobytes())
        types = assignment.types.astype("<u4")
        fh.write(struct.pack("<I", types.size))
        fh.write(types.tobytes())


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], ClusterAssignment]:
    blob = Path(path).read_bytes()
    if blob[:4] != CKPT_MAGIC:
        raise FormatError(f"bad checkpoint magic {blob[:4]!r}", offset=0)
    version, count = struct.unpack_from("<II", blob, 4)
    if version != CKPT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", offset=4)
    offset = 12
    state: dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", blob, offset)
            offset += 2
            name = blob[offset : offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<B", blob, offset)
            offset += 1
            dims = struct.unpack_from(f"<{rank}I", blob, offset)
            offset += 4 * rank
            size = int(np.prod(dims)) if rank else 1
            values = np.frombuffer(blob, dtype="<f4", count=size, offset=offset)
            offset += 4 * size
            state[name] = values.astype(np.float64).reshape(dims)
        (n,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        types = np.frombuffer(blob, dtype="<u4", count=n, offset=offset).astype(
            np.int64
        )
    except struct.error as exc:
        raise FormatError(f"truncated checkpoint: {exc}", offset=offset) from exc
    num_types = int(types.max()) + 1 if n else 1
    return state, ClusterAssignment.from_types(types, num_types)


def restore(model: ForecastModel, path) -> None:
    """Load a checkpoint into a model built with the matching config."""
    state, assignment = load_checkpoint(path)
    model.store.load_state(state)
    model.set_assignment(assignment)


def apply_variant(cfg: ModelConfig, variant: str) -> ModelConfig:
    """Translate an ablation variant name into a config."""
    if variant == "no-clusterer":
        return replace(cfg, single_cluster=True)
    if variant == "no-sg":
        return replace(cfg, graph_mode="no_sg")
    if variant == "no-tg":
        return replace(cfg, graph_mode="no_tg")
    if variant == "p2":
        return replace(cfg, p=2)
    if variant == "p3":
        return replace(cfg, p=3)
    raise ConfigError(
        f"unknown variant {variant!r}; expected no-clusterer, no-sg, no-tg, p2, p3"
    )
