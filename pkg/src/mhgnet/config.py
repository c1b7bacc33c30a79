"""Flat `key = value` run configuration with strict round-tripping.

Unknown keys are rejected with their line number; values render with full
precision so ``parse(render(cfg)) == cfg`` holds exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .errors import ConfigError
from .model import GRAPH_MODES, ModelConfig
from .train_eval import Schedule


@dataclass
class RunConfig:
    # model
    n: int = 0  # 0 = infer from the dataset
    p: int = 3
    d: int = 10
    d_s: int = 10
    d_t: int = 10
    t_h: int = 12
    t_f: int = 12
    k: int = 10
    hops: int = 2
    gamma: float = 0.05
    alpha: float = 3.0
    beta: float = 0.5
    rnn_width_multiplier: int = 1
    dropout: float = 0.15
    seed: int = 1
    graph_mode: str = "full"
    single_cluster: bool = False
    # schedule
    lr: float = 0.006
    warmup_epochs: int = 20
    curriculum_length: int = 3
    warmup_lr_ramp: bool = True
    warmup_horizon_floor: bool = True
    # training
    epochs: int = 100
    batch_size: int = 64
    train_ratio: float = 0.6
    val_ratio: float = 0.2
    test_ratio: float = 0.2
    refresh_per_batch: bool = False  # experimental: re-cluster every batch

    def validate(self) -> None:
        if self.graph_mode not in GRAPH_MODES:
            raise ConfigError(f"graph_mode must be one of {GRAPH_MODES}")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")

    @property
    def ratios(self) -> tuple[float, float, float]:
        return (self.train_ratio, self.val_ratio, self.test_ratio)

    def to_model_config(self, n: int, steps_per_day: int) -> ModelConfig:
        return ModelConfig(
            n=self.n if self.n > 0 else n,
            p=self.p,
            d=self.d,
            d_s=self.d_s,
            d_t=self.d_t,
            t_h=self.t_h,
            t_f=self.t_f,
            k=self.k,
            hops=self.hops,
            gamma=self.gamma,
            alpha=self.alpha,
            beta=self.beta,
            rnn_width_multiplier=self.rnn_width_multiplier,
            dropout=self.dropout,
            seed=self.seed,
            steps_per_day=steps_per_day,
            graph_mode=self.graph_mode,
            single_cluster=self.single_cluster,
        )

    def to_schedule(self) -> Schedule:
        return Schedule(
            warmup_epochs=self.warmup_epochs,
            curriculum_length=self.curriculum_length,
            max_horizon=self.t_f,
            base_lr=self.lr,
            lr_ramp=self.warmup_lr_ramp,
            horizon_floor=self.warmup_horizon_floor,
        )


_FIELDS = {f.name: f.type for f in fields(RunConfig)}


def _parse_value(key: str, raw: str, lineno: int):
    kind = _FIELDS[key]
    raw = raw.strip()
    try:
        if kind == "bool":
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from exc


def parse_config(text: str) -> RunConfig:
    cfg = RunConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        setattr(cfg, key, _parse_value(key, raw, lineno))
    cfg.validate()
    return cfg


def render_config(cfg: RunConfig) -> str:
    lines = []
    for f in fields(RunConfig):
        value = getattr(cfg, f.name)
        if isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, float):
            text = repr(value)
        else:
            text = str(value)
        lines.append(f"{f.name} = {text}")
    return "\n".join(lines) + "\n"


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read())
