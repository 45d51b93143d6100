from .yuv import (
    crop_to_alignment,
    load_yuv420,
    rgb_to_yuv420_bt601,
    write_yuv420,
    yuv_to_rgb_bt601,
)
from .export import read_flo, save_frame_png, save_mask_panel, save_mask_png, write_flo

__all__ = [
    "crop_to_alignment",
    "load_yuv420",
    "rgb_to_yuv420_bt601",
    "write_yuv420",
    "yuv_to_rgb_bt601",
    "read_flo",
    "save_frame_png",
    "save_mask_panel",
    "save_mask_png",
    "write_flo",
]
