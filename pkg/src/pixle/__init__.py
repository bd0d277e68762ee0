"""Pixle: a black-box L0 adversarial attack engine based on rearranging
pixels inside the attacked image, with a campaign harness, an HTTP
service and a thin-client CLI."""

__version__ = "0.1.0"

from .core import (
    ImageTensor,
    Patch,
    PixelCoord,
    TransferMode,
    apply_mapping,
    build_patch_indices,
    image_from_png,
    image_to_png,
    l0_pixel_distance,
)
from .mapping import MappingKind, MappingSpec
from .search import (
    Algorithm,
    AttackConfig,
    AttackGoal,
    AttackOutcome,
    iterative_attack,
    restart_iterative_attack,
    run_attack,
)

__all__ = [
    "__version__",
    "ImageTensor",
    "Patch",
    "PixelCoord",
    "TransferMode",
    "apply_mapping",
    "build_patch_indices",
    "image_from_png",
    "image_to_png",
    "l0_pixel_distance",
    "MappingKind",
    "MappingSpec",
    "Algorithm",
    "AttackConfig",
    "AttackGoal",
    "AttackOutcome",
    "iterative_attack",
    "restart_iterative_attack",
    "run_attack",
]
