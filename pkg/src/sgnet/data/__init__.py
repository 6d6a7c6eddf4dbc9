from .manifest import ManifestEntry, ManifestError, read_manifest, write_manifest
from .overlay import export_overlay
from .phantom import PhantomError, PhantomSpec, brain_mask, foreground_fraction, generate_phantom
from .preprocess import normalize, preprocess, reorient, reorient_to_canonical, resample_isotropic
from .volume import (
    BadMagicError,
    MaskVolume,
    PayloadSizeError,
    TruncatedFileError,
    UnsupportedVersionError,
    Volume,
    VolumeFormatError,
    read_volume,
    write_volume,
)
from .windows import DEFAULT_PATCH, SlidingWindowPlan, blend, extract, plan_windows

__all__ = [
    "BadMagicError", "DEFAULT_PATCH", "ManifestEntry", "ManifestError", "MaskVolume", "PayloadSizeError",
    "PhantomError", "PhantomSpec", "SlidingWindowPlan", "TruncatedFileError", "UnsupportedVersionError",
    "Volume", "VolumeFormatError", "blend", "brain_mask", "export_overlay", "extract", "foreground_fraction",
    "generate_phantom", "normalize", "plan_windows", "preprocess", "read_manifest", "read_volume",
    "reorient", "reorient_to_canonical", "resample_isotropic", "write_manifest", "write_volume",
]
