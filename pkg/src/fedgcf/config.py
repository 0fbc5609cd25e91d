"""Run configuration and its ``key = value`` file format.

Example::

    # comments start with '#'
    method = fedgcf
    num_clients = 8
    rounds = 60
    partition = noniid:0.5
    classes = ring:0, ring:1, chain:0, chain:1
    arms = 0.9, 0.7, 0.5, 0.3, 0.1
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from typing import Optional

from .errors import ConfigError
from .gcf import default_arms
from .graphs import IID, ClassSpec, NonIID, SyntheticSpec

METHODS = ("fedgcf", "fedavg", "local", "fedgcf-sc", "fedgcf-np", "fedgcf-ef")


def parse_classes(text: str) -> tuple:
    """``"ring:0, chain"`` -> (ClassSpec('ring', 0), ClassSpec('chain', None))."""
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        motif, _, direction = item.partition(":")
        out.append(ClassSpec(motif.strip() or "random", int(direction) if direction.strip() else None))
    return tuple(out)


def format_classes(classes) -> str:
    return ", ".join(c.motif + ("" if c.feature_direction is None else f":{c.feature_direction}")
                     for c in classes)


def parse_partition(text: str):
    text = text.strip().lower()
    if text == "iid":
        return IID
    kind, _, frac = text.partition(":")
    if kind in ("noniid", "non-iid"):
        try:
            return NonIID(float(frac) if frac else 0.5)
        except ValueError as exc:
            raise ConfigError(f"bad non-IID fraction in {text!r}") from exc
    raise ConfigError(f"unknown partition mode {text!r}; use 'iid' or 'noniid:<frac>'")


@dataclass
class RunConfig:
    method: str = "fedgcf"
    seed: int = 0
    # data: a TUDataset directory, or the synthetic generator when empty
    dataset_path: Optional[str] = None
    dataset_name: Optional[str] = None
    data_seed: Optional[int] = None
    classes: str = "ring:0, ring:1, chain:0, chain:1"
    graphs_per_class: int = 100
    min_nodes: int = 8
    max_nodes: int = 14
    feature_dim: int = 8
    feature_signal: float = 1.0
    feature_noise: float = 1.0
    extra_edge_prob: float = 0.0
    # federation
    num_clients: int = 8
    samples_per_client: Optional[int] = None
    partition: str = "noniid:0.5"
    rounds: int = 200
    local_epochs: int = 1
    batch_size: int = 128
    lr: float = 0.001
    joint_training: bool = True
    # models and structural encoding
    hidden_dim: int = 64
    num_layers: int = 3
    rw_dim: int = 16
    deg_dim: int = 16
    # server-side extraction and fusion
    k: int = 3
    p: int = 3
    alpha: float = 2.0
    beta: float = 5.0
    arms: str = ", ".join(str(a) for a in default_arms())
    initial_ratio: float = 0.5

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; expected one of {METHODS}")
        for name in ("num_clients", "batch_size", "hidden_dim", "num_layers", "rw_dim", "deg_dim", "k", "p"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        for name in ("rounds", "local_epochs"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.lr < 0:
            raise ConfigError("lr must be >= 0")
        if self.alpha <= 0:
            raise ConfigError("alpha must be > 0")
        if not 0.0 <= self.initial_ratio <= 1.0:
            raise ConfigError("initial_ratio must lie in [0, 1]")
        self.partition_mode()
        self.arm_ratios()

    def partition_mode(self):
        return parse_partition(self.partition)

    def arm_ratios(self) -> list:
        try:
            ratios = [float(x) for x in self.arms.split(",") if x.strip()]
        except ValueError as exc:
            raise ConfigError(f"bad arm list {self.arms!r}") from exc
        if not ratios:
            raise ConfigError("at least one arm is required")
        return ratios

    def synthetic_spec(self) -> SyntheticSpec:
        return SyntheticSpec(
            classes=parse_classes(self.classes),
            graphs_per_class=self.graphs_per_class,
            min_nodes=self.min_nodes,
            max_nodes=self.max_nodes,
            feature_dim=self.feature_dim,
            feature_signal=self.feature_signal,
            feature_noise=self.feature_noise,
            extra_edge_prob=self.extra_edge_prob,
        )

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, value in data.items():
            key = key.strip().replace("-", "_")
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(known[key], value)
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        data = {}
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
                key, value = line.split("=", 1)
                data[key.strip()] = value.strip()
        return cls.from_dict(data)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            lines.append(f"{f.name} = {str(value).lower() if isinstance(value, bool) else value}")
        return "\n".join(lines) + "\n"


def _coerce(f, value):
    if not isinstance(value, str):
        return value
    value = value.strip()
    kind = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
    if value.lower() in ("", "none", "null") and "Optional" in kind:
        return None
    try:
        if "bool" in kind:
            if value.lower() in ("1", "true", "yes", "on"):
                return True
            if value.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if "int" in kind:
            return int(value)
        if "float" in kind:
            return float(value)
    except ValueError as exc:
        raise ConfigError(f"bad value {value!r} for {f.name}") from exc
    return value
