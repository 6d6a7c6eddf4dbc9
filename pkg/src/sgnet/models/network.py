"""3D U-Net family: SG-Net, plain U-Net, attention U-Net and residual U-Net."""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import autodiff as ad
from ..autodiff import ShapeError, Tensor
from . import layers
from .layers import AttentionGate, ConvBlock, ConvTranspose3d, Conv3d, Module, ResidualBlock, SpatialGatingModule

KINDS = ("sgnet", "unet", "attunet", "resunet")

# Interpretation, not a measured fact: scales the shared backbone so the
# parameter-count ordering sgnet < unet < resunet < attunet holds.
DEFAULT_WIDTH_MULTIPLIERS = {"sgnet": 0.75, "unet": 1.0, "resunet": 1.5, "attunet": 1.75}


class SpecError(ValueError):
    pass


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class ArchitectureSpec:
    kind: str = "sgnet"
    in_channels: int = 2
    out_channels: int = 1
    encoder_widths: tuple = (16, 32, 64, 128)
    sgm_groups: int = 8
    sgm_variant: str = "literal"
    width_multiplier: float | None = None
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5

    def __post_init__(self):
        object.__setattr__(self, "encoder_widths", tuple(int(w) for w in self.encoder_widths))
        self.validate()

    @property
    def multiplier(self) -> float:
        if self.width_multiplier is not None:
            return float(self.width_multiplier)
        return DEFAULT_WIDTH_MULTIPLIERS[self.kind]

    @property
    def depth(self) -> int:
        return len(self.encoder_widths)

    def widths(self) -> tuple:
        """Effective per-level widths after the per-kind multiplier.

        Scaled widths are rounded (half up) to a multiple of the group count.
        """
        m = self.multiplier
        if m == 1.0:
            return self.encoder_widths
        G = self.sgm_groups
        return tuple(max(G, _round_half_up(w * m / G) * G) for w in self.encoder_widths)

    def validate(self):
        if self.kind not in KINDS:
            raise SpecError(f"unknown architecture kind {self.kind!r}; expected one of {KINDS}")
        if self.sgm_variant not in ("literal", "spatial"):
            raise SpecError(f"unknown sgm_variant {self.sgm_variant!r}")
        if self.in_channels < 1 or self.out_channels < 1:
            raise SpecError("channel counts must be positive")
        if not self.encoder_widths:
            raise SpecError("encoder_widths must not be empty")
        if self.sgm_groups < 1:
            raise SpecError("sgm_groups must be >= 1")
        if self.width_multiplier is not None and self.width_multiplier <= 0:
            raise SpecError("width_multiplier must be positive")
        w = self.widths()
        if any(b <= a for a, b in zip(w, w[1:])) or w[0] < 1:
            raise SpecError(f"widths must be positive and strictly increasing, got {w}")
        if self.kind == "sgnet":
            bad = [x for x in w if x % self.sgm_groups]
            if bad:
                raise SpecError(f"sgnet widths {bad} are not divisible by sgm_groups={self.sgm_groups}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["encoder_widths"] = list(self.encoder_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ArchitectureSpec":
        return cls(**{**d, "encoder_widths": tuple(d["encoder_widths"])})


class SegmentationNet(Module):
    """Shared encoder/decoder; ``spec.kind`` decides skip gating and block type."""

    def __init__(self, spec: ArchitectureSpec, rng: np.random.Generator):
        super().__init__()
        self.spec = spec
        widths = spec.widths()
        L = len(widths)
        block = ResidualBlock if spec.kind == "resunet" else ConvBlock
        bn = (spec.bn_momentum, spec.bn_eps)
        self.encoders, self.ups, self.decoders, self.gates = [], [], [], []
        c = spec.in_channels
        for l, w in enumerate(widths):
            self.encoders.append(self.add_child(f"enc{l}", block(c, w, rng, *bn)))
            c = w
        for l in reversed(range(L - 1)):
            w = widths[l]
            up = self.add_child(f"up{l}", ConvTranspose3d(widths[l + 1], w, rng))
            if spec.kind == "sgnet":
                gate = self.add_child(f"sgm{l}", SpatialGatingModule(w, spec.sgm_groups, spec.sgm_variant, rng))
            elif spec.kind == "attunet":
                gate = self.add_child(f"att{l}", AttentionGate(w, w, rng))
            else:
                gate = None
            dec = self.add_child(f"dec{l}", block(2 * w, w, rng, *bn))
            self.ups.insert(0, up)
            self.gates.insert(0, gate)
            self.decoders.insert(0, dec)
        self.head = self.add_child("head", Conv3d(widths[0], spec.out_channels, 1, rng))

    @property
    def mode(self) -> str:
        return "train" if self.training else "eval"

    def train(self):
        self.set_training(True)
        return self

    def eval(self):
        self.set_training(False)
        return self

    def required_divisor(self) -> int:
        return 2 ** (len(self.encoders) - 1)

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward(x)

    def forward(self, x: Tensor) -> Tensor:
        if x.data.ndim != 5 or x.shape[1] != self.spec.in_channels:
            raise ShapeError(f"expected input (n, {self.spec.in_channels}, d, h, w), got {x.shape}")
        div = self.required_divisor()
        for size, name in zip(x.shape[2:], ("depth", "height", "width")):
            if size % div:
                raise ShapeError(f"{name} axis of size {size} must be divisible by {div}")
        skips = []
        h = x
        last = len(self.encoders) - 1
        for l, enc in enumerate(self.encoders):
            h = enc(h)
            if l < last:
                skips.append(h)
                h, _ = ad.maxpool3d(h)
        for l in reversed(range(last)):
            up = self.ups[l](h)
            skip = skips[l]
            gate = self.gates[l]
            if isinstance(gate, SpatialGatingModule):
                skip = gate(skip)
            elif isinstance(gate, AttentionGate):
                skip = gate(skip, up)
            h = self.decoders[l](ad.concat_channels(up, skip))
        return self.head(h)


ModelInstance = SegmentationNet


def build_model(spec: ArchitectureSpec, seed: int = 0) -> SegmentationNet:
    """Construct a model with deterministic He-normal initialisation.

    ``model.build_shapes`` keeps the shape of every parameter as it was
    created, independent of the module tree.
    """
    rng = np.random.default_rng(seed)
    layers._build_log = []
    try:
        model = SegmentationNet(spec, rng)
        model.build_shapes = list(layers._build_log)
        for name, t in model.named_parameters():
            t.name = name
    finally:
        layers._build_log = None
    return model


def forward(model: SegmentationNet, x) -> Tensor:
    return model.forward(x if isinstance(x, Tensor) else Tensor(x))


def count_parameters(model: Module):
    """Total parameter count and per-block subtotals keyed by top-level name."""
    blocks: "OrderedDict[str, int]" = OrderedDict()
    for name, t in model.named_parameters():
        prefix = name.split(".", 1)[0]
        blocks[prefix] = blocks.get(prefix, 0) + int(t.size)
    return sum(blocks.values()), blocks


def default_spec(kind: str, **overrides) -> ArchitectureSpec:
    return ArchitectureSpec(kind=kind, **overrides)
