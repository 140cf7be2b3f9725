"""Object illumination harmonization: scene generation, metrics and the training CLI."""

from ._sigan import ablation_rows, l_total, psnr, render_pair, render_sample, rmse, run_cli, ssim

__all__ = [
    "ablation_rows",
    "l_total",
    "psnr",
    "render_pair",
    "render_sample",
    "rmse",
    "run_cli",
    "ssim",
]
