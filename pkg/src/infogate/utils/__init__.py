"""Utility helpers."""

from .file_manager import prepare_output_dir, resolve_input, write_json
from .images import render_mask_pgm, render_overlay_ppm
from .logger import setup_logging
from .rng import RngStreams

__all__ = [
    "RngStreams",
    "prepare_output_dir",
    "render_mask_pgm",
    "render_overlay_ppm",
    "resolve_input",
    "setup_logging",
    "write_json",
]
