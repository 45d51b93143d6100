from .ablation import DEFAULT_ANCHORS, STUDIES, AblationReport, ablation_matrix, study_cells
from .bdrate import LADDER_MIN_POINTS, MIN_POINTS, bd_rate, rate_interpolant
from .bit_profile import channel_bit_profile, top_share
from .complexity import (
    BUFFER_PRESETS,
    buffer_planes,
    buffer_preset_planes,
    complexity_report,
    count_macs,
    module_kmac_per_pixel,
)
from .quality import ms_ssim, msssim_rgb, psnr_rgb
from .reports import (
    DEFAULT_POOLING,
    FrameMeasurement,
    Pooling,
    load_curves,
    plot_rd_curves,
    pool_rd_points,
    write_csv,
    write_json,
)
from .sandbox import SandboxConfig, empirical_entropy_sandbox, histogram_entropy, sandbox_table

__all__ = [
    "LADDER_MIN_POINTS",
    "MIN_POINTS",
    "AblationReport",
    "BUFFER_PRESETS",
    "DEFAULT_ANCHORS",
    "DEFAULT_POOLING",
    "FrameMeasurement",
    "Pooling",
    "STUDIES",
    "SandboxConfig",
    "ablation_matrix",
    "bd_rate",
    "buffer_planes",
    "buffer_preset_planes",
    "channel_bit_profile",
    "complexity_report",
    "count_macs",
    "empirical_entropy_sandbox",
    "histogram_entropy",
    "load_curves",
    "module_kmac_per_pixel",
    "ms_ssim",
    "msssim_rgb",
    "plot_rd_curves",
    "pool_rd_points",
    "psnr_rgb",
    "rate_interpolant",
    "sandbox_table",
    "study_cells",
    "top_share",
    "write_csv",
    "write_json",
]
