"""Training configuration and its layered resolution (defaults < file < env < flags)."""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

from .loss import LossConfig
from .ot import OTConfig
from .views import DEFAULT_STOPLIST, PAIR_CAP

ENV_PREFIX = "KGETOT_"

PRESETS = {
    "fb15ket": {"light_layers": 4, "comp_layers": 2, "theta": 0.7},
    "yago43ket": {"light_layers": 1, "comp_layers": 2, "theta": 0.5},
}


@dataclass
class TrainConfig:
    dim: int = 100
    lr: float = 0.001
    epochs: int = 100
    seed: int = 0
    light_layers: int = 4
    comp_layers: int = 2
    temperatures: tuple = (0.5, 1.0, 1.5, 2.0, 2.5)
    epsilon: float = 0.05
    sinkhorn_iters: int = 200
    sinkhorn_tol: float = 1e-6
    ot_method: str = "stabilized"
    ot_cap: int = 4096
    barycentric: bool = True
    swap_roles: bool = False
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 256
    eval_every: int = 1
    views: tuple = ("e2t", "e2c", "tct")
    share_tables: bool = False
    composition: str = "sub"
    inverse_edges: bool = True
    pair_cap: int = PAIR_CAP
    stoplist: tuple = tuple(sorted(DEFAULT_STOPLIST))
    dtype: str = "float64"
    deterministic: bool = False
    threads: int = 1

    def __post_init__(self):
        self.temperatures = tuple(float(t) for t in self.temperatures)
        self.views = tuple(self.views)
        self.stoplist = tuple(self.stoplist)
        for name in ("dim", "batch_size", "threads", "eval_every", "pair_cap", "ot_cap", "sinkhorn_iters"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.lr <= 0 or self.epsilon <= 0 or self.sinkhorn_tol <= 0:
            raise ValueError("lr, epsilon and sinkhorn_tol must be positive")
        if self.epochs < 0 or self.light_layers < 0 or self.comp_layers < 1:
            raise ValueError("epochs/light_layers must be >= 0 and comp_layers >= 1")
        if not self.temperatures:
            raise ValueError("need at least one pooling head")
        unknown = set(self.views) - {"e2t", "e2c", "tct"}
        if unknown or not self.views:
            raise ValueError(f"bad view selection {self.views!r}")
        if self.composition not in ("sub", "mult"):
            raise ValueError("composition must be 'sub' or 'mult'")
        if self.dtype not in ("float64", "float32"):
            raise ValueError("dtype must be float64 or float32")

    @property
    def heads(self):
        return len(self.temperatures)

    def ot(self) -> OTConfig:
        return OTConfig(self.epsilon, self.sinkhorn_iters, self.sinkhorn_tol, self.ot_cap, self.barycentric, self.ot_method)


_TRAIN_FIELDS = {f.name: f for f in dataclasses.fields(TrainConfig)}
_LOSS_FIELDS = {f.name: f for f in dataclasses.fields(LossConfig)}
KEYS = sorted(set(_TRAIN_FIELDS) | set(_LOSS_FIELDS))


def _convert(key, raw):
    f = _TRAIN_FIELDS.get(key) or _LOSS_FIELDS[key]
    default = f.default if f.default is not dataclasses.MISSING else None
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {raw!r}")
    if isinstance(default, tuple):
        items = [x.strip() for x in raw.replace(",", " ").split()]
        return tuple(float(x) for x in items) if key == "temperatures" else tuple(items)
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float) or key in ("loc", "scale"):
        return None if raw.lower() == "none" else float(raw)
    return raw


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS and key != "preset":
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def env_overrides(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out = {}
    for key in KEYS + ["preset"]:
        name = ENV_PREFIX + key.upper()
        if name in environ:
            out[key] = environ[name]
    return out


@dataclass
class ResolvedConfig:
    train: TrainConfig
    loss: LossConfig
    preset: str | None = None
    sources: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"preset": self.preset, "train": dataclasses.asdict(self.train), "loss": dataclasses.asdict(self.loss)}


def resolve(config_file=None, flags=None, environ=None) -> ResolvedConfig:
    """Merge built-in defaults, a config file, ``KGETOT_*`` variables and flags."""
    layers = [("file", read_config_file(config_file) if config_file else {}),
              ("env", env_overrides(environ)),
              ("flags", {k: v for k, v in (flags or {}).items() if v is not None})]
    preset = None
    for _, layer in layers:
        preset = layer.get("preset", preset)
    merged, sources = {}, {}
    if preset is not None:
        if preset not in PRESETS:
            raise ValueError(f"unknown preset {preset!r}")
        for k, v in PRESETS[preset].items():
            merged[k], sources[k] = v, "preset"
    for name, layer in layers:
        for k, v in layer.items():
            if k == "preset":
                continue
            if k not in KEYS:
                raise ValueError(f"unknown config key {k!r}")
            merged[k], sources[k] = _convert(k, v), name
    train = TrainConfig(**{k: v for k, v in merged.items() if k in _TRAIN_FIELDS})
    loss = LossConfig(**{k: v for k, v in merged.items() if k in _LOSS_FIELDS})
    return ResolvedConfig(train, loss, preset, sources)


def from_dict(d: dict) -> ResolvedConfig:
    return ResolvedConfig(TrainConfig(**d["train"]), LossConfig(**d["loss"]), d.get("preset"))
