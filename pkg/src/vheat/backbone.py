"""vHeat model assembly and presets."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .autograd import Tensor
from .hco import DEFAULT_T, FveTable, resize_fve
from .layers import ClassifierHead, Downsample, HeatLayer, Stem
from .nn import Module


@dataclass(frozen=True)
class ModelConfig:
    layers: tuple = (2, 2, 6, 2)
    channels: tuple = (96, 192, 384, 768)
    mlp_ratio: int = 4
    drop_path: float = 0.1
    num_classes: int = 1000
    input_extent: int = 224
    in_chans: int = 3
    dtype: str = "float32"
    # pixel extent the FVE tables are zero-padded to before resampling
    fve_canonical: int = 512
    k_mode: str = "fve"
    fixed_k: float = 0.0
    t: float = DEFAULT_T

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(int(v) for v in self.layers))
        object.__setattr__(self, "channels", tuple(int(v) for v in self.channels))
        if len(self.layers) != 4 or len(self.channels) != 4:
            raise ValueError("config needs exactly 4 stages")
        if any(b <= a for a, b in zip(self.channels, self.channels[1:])):
            raise ValueError(f"stage channels must strictly increase, got {self.channels}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, got {self.dtype}")
        if self.k_mode not in ("fve", "fixed"):
            raise ValueError(f"k_mode must be 'fve' or 'fixed', got {self.k_mode!r}")

    def stage_extent(self, stage: int, input_extent: Optional[int] = None) -> int:
        return (input_extent or self.input_extent) // 4 // (2 ** stage)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["layers"] = list(self.layers)
        d["channels"] = list(self.channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        preset = d.pop("preset", None)
        base = PRESETS[preset]() if preset else cls()
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return dataclasses.replace(base, **d)

    @classmethod
    def from_json(cls, path) -> "ModelConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def tiny_config(**kw) -> ModelConfig:
    return ModelConfig(**kw)


def small_config(**kw) -> ModelConfig:
    return ModelConfig(**{"layers": (2, 2, 18, 2), "drop_path": 0.3, **kw})


def base_config(**kw) -> ModelConfig:
    # the classification column; (2,2,18,2) at width 128 is the segmentation variant
    return ModelConfig(**{"layers": (4, 4, 20, 4), "drop_path": 0.5, **kw})


def micro_config(**kw) -> ModelConfig:
    """Desk-scale preset: every code path of Tiny at 32x32 input."""
    defaults = dict(layers=(2, 2, 2, 2), channels=(16, 32, 64, 128), drop_path=0.0,
                    num_classes=10, input_extent=32, fve_canonical=64)
    defaults.update(kw)
    return ModelConfig(**defaults)


PRESETS = {"tiny": tiny_config, "small": small_config, "base": base_config, "micro": micro_config}


class Stage(Module):
    def __init__(self, index: int, C: int, depth: int, extent: int, dprs, cfg: ModelConfig, rng):
        dtype = np.dtype(cfg.dtype)
        self.index = index
        self.fve: Optional[FveTable] = None
        if cfg.k_mode == "fve":
            self.fve = FveTable.init(extent, extent, C, rng, stage=index, dtype=dtype)
        self.layers = [
            HeatLayer(C, rng, drop_path=float(dprs[i]), mlp_ratio=cfg.mlp_ratio, k_mode=cfg.k_mode,
                      fixed_k=cfg.fixed_k, t=cfg.t, dtype=dtype)
            for i in range(depth)
        ]

    def __call__(self, x: Tensor, training: bool = False, rng=None) -> Tensor:
        for layer in self.layers:
            x = layer(x, self.fve, training, rng)
        return x


class VHeat(Module):
    """stem -> stage1 -> down -> stage2 -> down -> stage3 -> down -> stage4 -> head."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        if cfg.input_extent % 32:
            raise ValueError(f"input extent {cfg.input_extent} must be divisible by 32")
        self.cfg = cfg
        self.seed = seed
        self.extent = (cfg.input_extent, cfg.input_extent)
        rng = np.random.default_rng(seed)
        dtype = np.dtype(cfg.dtype)
        total = sum(cfg.layers)
        dprs = np.linspace(0.0, cfg.drop_path, total) if total > 1 else np.zeros(total)
        self.stem = Stem(cfg.in_chans, cfg.channels[0], rng, dtype)
        self.stages = []
        self.downsamples = []
        start = 0
        for s, (depth, C) in enumerate(zip(cfg.layers, cfg.channels)):
            self.stages.append(Stage(s, C, depth, cfg.stage_extent(s), dprs[start:start + depth], cfg, rng))
            start += depth
            if s < 3:
                self.downsamples.append(Downsample(C, rng, dtype))
        self.head = ClassifierHead(cfg.channels[-1], cfg.num_classes, rng, dtype)

    @property
    def dtype(self):
        return np.dtype(self.cfg.dtype)

    def resize(self, H: int, W: int) -> None:
        """Re-align every stage FVE table to a new input extent."""
        if H % 32 or W % 32:
            raise ValueError(f"input extent {H}x{W} must be divisible by 32")
        for s, stage in enumerate(self.stages):
            if stage.fve is None:
                continue
            stride = 4 * 2 ** s
            canon = self.cfg.fve_canonical // stride
            stage.fve = resize_fve(stage.fve, H // stride, W // stride, canonical=(canon, canon))
        self.extent = (H, W)

    def features(self, images, training: bool = False, rng=None) -> list[Tensor]:
        """Per-stage outputs (after each stage, before downsampling)."""
        x = images if isinstance(images, Tensor) else Tensor(np.asarray(images, dtype=self.dtype))
        if x.ndim != 4 or x.shape[1] != self.cfg.in_chans:
            raise ValueError(f"expected images [B,{self.cfg.in_chans},H,W], got dims {x.shape}")
        H, W = x.shape[2], x.shape[3]
        if (H, W) != self.extent:
            if self.cfg.k_mode == "fve":
                raise ValueError(
                    f"input extent {H}x{W} differs from model extent {self.extent[0]}x{self.extent[1]}; "
                    "call model.resize(H, W) first")
            if H % 32 or W % 32:
                raise ValueError(f"input extent {H}x{W} must be divisible by 32")
        if x.dtype != self.dtype:
            x = Tensor(x.data.astype(self.dtype))
        outs = []
        x = self.stem(x)
        for s, stage in enumerate(self.stages):
            x = stage(x, training, rng)
            outs.append(x)
            if s < 3:
                x = self.downsamples[s](x)
        return outs

    def __call__(self, images, training: bool = False, rng=None) -> Tensor:
        return self.head(self.features(images, training, rng)[-1])

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        missing = set(params) - set(state)
        unexpected = set(state) - set(params)
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(unexpected)}")
        for name, p in params.items():
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise ValueError(f"parameter {name}: dims {arr.shape} vs model {p.shape}")
            p.data[...] = arr.astype(p.dtype)


def build_model(cfg: ModelConfig, seed: int = 0) -> VHeat:
    return VHeat(cfg, seed)


def forward(model: VHeat, images, training: bool = False, rng=None) -> Tensor:
    return model(images, training, rng)


def analytic_param_count(cfg: ModelConfig) -> int:
    from .layers import heat_layer_param_count, stem_param_count

    total = stem_param_count(cfg.in_chans, cfg.channels[0])
    for s, (depth, C) in enumerate(zip(cfg.layers, cfg.channels)):
        e = cfg.stage_extent(s)
        if cfg.k_mode == "fve":
            total += e * e * C
        total += depth * heat_layer_param_count(C, cfg.mlp_ratio, cfg.k_mode)
        if s < 3:
            total += 9 * C * 2 * C + 2 * C + 2 * (2 * C)
    C = cfg.channels[-1]
    total += 2 * C + C * cfg.num_classes + cfg.num_classes
    return total
