"""``key = value`` run configuration covering architecture, training and pipeline."""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .models.network import ArchitectureSpec
from .trainer import TrainConfig


class ConfigError(ValueError):
    pass


def _tuple_of(kind):
    def parse(raw: str):
        parts = [p for p in raw.replace(",", " ").split() if p]
        if not parts:
            raise ValueError("empty list")
        return tuple(kind(p) for p in parts)

    return parse


def _optional_float(raw: str):
    return None if raw.strip().lower() in ("", "none", "auto") else float(raw)


_PARSERS = {
    "arch": str,
    "in_channels": int,
    "out_channels": int,
    "encoder_widths": _tuple_of(int),
    "sgm_groups": int,
    "sgm_variant": str,
    "width_multiplier": _optional_float,
    "bn_momentum": float,
    "bn_eps": float,
    "lr": float,
    "weight_decay": float,
    "batch_size": int,
    "max_epochs": int,
    "patience": int,
    "seed": int,
    "patch": _tuple_of(int),
    "steps_per_epoch": int,
    "fg_prob": float,
    "window": _tuple_of(int),
    "overlap": float,
    "target_spacing": float,
    "p_low": float,
    "p_high": float,
}


@dataclass(frozen=True)
class RunConfig:
    arch: str = "sgnet"
    in_channels: int = 2
    out_channels: int = 1
    encoder_widths: tuple = (16, 32, 64, 128)
    sgm_groups: int = 8
    sgm_variant: str = "literal"
    width_multiplier: float | None = None
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5
    lr: float = 1e-4
    weight_decay: float = 1e-5
    batch_size: int = 4
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0
    patch: tuple = (48, 48, 48)
    steps_per_epoch: int = 32
    fg_prob: float = 0.5
    window: tuple = (96, 96, 32)
    overlap: float = 0.25
    target_spacing: float = 1.0
    p_low: float = 0.5
    p_high: float = 99.5

    def architecture(self) -> ArchitectureSpec:
        return ArchitectureSpec(
            kind=self.arch, in_channels=self.in_channels, out_channels=self.out_channels,
            encoder_widths=self.encoder_widths, sgm_groups=self.sgm_groups, sgm_variant=self.sgm_variant,
            width_multiplier=self.width_multiplier, bn_momentum=self.bn_momentum, bn_eps=self.bn_eps,
        )

    def training(self) -> TrainConfig:
        names = {f.name for f in fields(TrainConfig)}
        return TrainConfig(**{k: getattr(self, k) for k in names if hasattr(self, k)})

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ", ".join(str(x) for x in v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


def parse_pairs(pairs, source: str = "config") -> dict:
    values = {}
    for lineno, raw in pairs:
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
        try:
            values[key] = _PARSERS[key](value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from exc
    return values


def load_config(path=None, overrides=()) -> RunConfig:
    """Read a config file (optional) and apply ``key=value`` overrides on top."""
    values = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise FileNotFoundError(f"config file not found: {p}")
        values.update(parse_pairs(enumerate(p.read_text().splitlines(), 1), str(p)))
    values.update(parse_pairs(((i, o) for i, o in enumerate(overrides, 1)), "--set"))
    try:
        cfg = RunConfig(**values)
        cfg.architecture()
        cfg.training()
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg
