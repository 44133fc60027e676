"""Binary PGM/PPM emission for gate maps."""

import logging
from pathlib import Path
from typing import Union

import numpy as np

from ..errors import ShapeError, ValidationError

logger = logging.getLogger(__name__)

OVERLAY_GRAY = 0.5
OVERLAY_THRESHOLD = 0.5


def to_bytes(values: np.ndarray) -> np.ndarray:
    """Map [0,1] to 0..255 with round-half-up."""
    values = np.asarray(values, dtype=np.float64)
    if values.size and (np.isnan(values).any() or values.min() < 0.0 or values.max() > 1.0):
        raise ValidationError("Image values must lie in [0, 1]")
    return np.floor(values * 255.0 + 0.5).astype(np.uint8)


def _mask_plane(mask) -> np.ndarray:
    plane = np.asarray(getattr(mask, "data", mask))
    if plane.ndim == 3 and plane.shape[0] == 1:
        plane = plane[0]
    if plane.ndim != 2:
        raise ShapeError("render_mask", plane.shape, detail="expected 1×H×W or H×W")
    return plane


def _write(path: Union[str, Path], header: str, body: np.ndarray) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as f:
            f.write(header.encode("ascii"))
            f.write(np.ascontiguousarray(body).tobytes())
    except OSError as exc:
        raise ValidationError(f"Cannot write image {path}: {exc}") from exc
    return path


def render_mask_pgm(mask, path: Union[str, Path]) -> Path:
    """Write a gate map (1×H×W or H×W) as a binary greyscale PGM."""
    plane = _mask_plane(mask)
    height, width = plane.shape
    return _write(path, f"P5\n{width} {height}\n255\n", to_bytes(plane))


def render_overlay_ppm(obs, mask, path: Union[str, Path]) -> Path:
    """Write the observation with closed-gate pixels (gate < 0.5) replaced by mid gray."""
    image = np.asarray(getattr(obs, "data", obs), dtype=np.float64)
    plane = _mask_plane(mask)
    if image.ndim != 3 or image.shape[1:] != plane.shape:
        raise ShapeError("render_overlay", image.shape, plane.shape)
    if image.shape[0] == 1:
        image = np.repeat(image, 3, axis=0)
    elif image.shape[0] != 3:
        raise ShapeError("render_overlay", image.shape, detail="expected 1 or 3 channels")
    blended = np.where(plane[None] < OVERLAY_THRESHOLD, OVERLAY_GRAY, np.clip(image, 0.0, 1.0))
    height, width = plane.shape
    return _write(path, f"P6\n{width} {height}\n255\n", to_bytes(blended).transpose(1, 2, 0))
