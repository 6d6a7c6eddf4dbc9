from .checkpoint import CheckpointError, from_bytes, load_checkpoint, save_checkpoint, to_bytes
from .layers import AttentionGate, ResidualBlock, SpatialGatingModule
from .network import (
    DEFAULT_WIDTH_MULTIPLIERS,
    KINDS,
    ArchitectureSpec,
    ModelInstance,
    SegmentationNet,
    SpecError,
    build_model,
    count_parameters,
    forward,
)


def sgm_forward(x, module: SpatialGatingModule):
    return module(x)


__all__ = [
    "ArchitectureSpec", "AttentionGate", "CheckpointError", "DEFAULT_WIDTH_MULTIPLIERS", "KINDS",
    "ModelInstance", "ResidualBlock", "SegmentationNet", "SpatialGatingModule", "SpecError",
    "build_model", "count_parameters", "forward", "from_bytes", "load_checkpoint",
    "save_checkpoint", "sgm_forward", "to_bytes",
]
