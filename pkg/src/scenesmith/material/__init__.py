from .albedo import AlbedoMap, ShiftResult, ShiftSpec, albedo_shift
from .color import lab_to_srgb, lab_to_srgb8, srgb_to_lab
from .patches import MaskInput, MaskPatch, NoUsablePatches, extract_patches, largest_rectangle, smoothness
from .search import (
    MaterialDatabase,
    MaterialError,
    MaterialRecord,
    MaterialTrace,
    infer_target_color,
    map_segments_to_patches,
    save_material,
    search_material,
)

__all__ = [
    "AlbedoMap",
    "MaskInput",
    "MaskPatch",
    "MaterialDatabase",
    "MaterialError",
    "MaterialRecord",
    "MaterialTrace",
    "NoUsablePatches",
    "ShiftResult",
    "ShiftSpec",
    "albedo_shift",
    "extract_patches",
    "infer_target_color",
    "lab_to_srgb",
    "lab_to_srgb8",
    "largest_rectangle",
    "map_segments_to_patches",
    "save_material",
    "search_material",
    "smoothness",
    "srgb_to_lab",
]
