"""Band exclusion, per-band median denoising and bilinear resizing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .cube_io import HyperspectralCube


@dataclass(frozen=True)
class PreprocessConfig:
    target_size: int = 263
    median_window: int = 3
    drop_first: int = 0
    drop_last: int = 0

    def __post_init__(self):
        if self.median_window < 1 or self.median_window % 2 == 0:
            raise ValueError("median_window must be odd and >= 1")
        if self.target_size < self.median_window:
            raise ValueError("target_size must be >= median_window")
        if self.drop_first < 0 or self.drop_last < 0:
            raise ValueError("band drop counts must be non-negative")


def exclude_bands(cube: HyperspectralCube, drop_first: int, drop_last: int) -> HyperspectralCube:
    if drop_first < 0 or drop_last < 0:
        raise ValueError("band drop counts must be non-negative")
    if drop_first + drop_last >= cube.bands:
        raise ValueError(
            f"dropping {drop_first}+{drop_last} bands leaves none of {cube.bands}"
        )
    if drop_first == 0 and drop_last == 0:
        return cube
    stop = cube.bands - drop_last
    return HyperspectralCube(cube.data[:, :, drop_first:stop], cube.wavelengths[drop_first:stop])


def median_filter_band(image: np.ndarray, window: int = 3) -> np.ndarray:
    """Median over a ``window`` x ``window`` neighbourhood, edges replicated."""
    image = np.asarray(image)
    if window < 1 or window % 2 == 0:
        raise ValueError(f"median window must be odd, got {window}")
    if image.ndim != 2 or image.size == 0:
        raise ValueError("expected a non-empty 2-D image")
    if window == 1:
        return image.copy()
    return ndimage.median_filter(image, size=window, mode="nearest")


def resize_band(image: np.ndarray, target: int) -> np.ndarray:
    """Bilinear resize to ``target`` x ``target`` with corner-aligned sampling.

    Output pixel ``i`` samples the source at ``i * (H - 1) / (target - 1)``, so
    the four corners map exactly onto the input corners.
    """
    image = np.asarray(image, dtype=np.float64)
    if target < 1:
        raise ValueError("target size must be >= 1")
    if image.ndim != 2 or min(image.shape) < 2:
        raise ValueError("resize needs a 2-D image of at least 2x2")
    h, w = image.shape
    if (h, w) == (target, target):
        return image.copy()

    def axis(n):
        if target == 1:
            pos = np.zeros(1)
        else:
            pos = np.arange(target) * ((n - 1) / (target - 1))
        i0 = np.minimum(np.floor(pos).astype(np.intp), n - 2)
        return i0, pos - i0

    y0, fy = axis(h)
    x0, fx = axis(w)
    fx = fx[None, :]
    top = image[y0][:, x0] + fx * (image[y0][:, x0 + 1] - image[y0][:, x0])
    bot = image[y0 + 1][:, x0] + fx * (image[y0 + 1][:, x0 + 1] - image[y0 + 1][:, x0])
    out = top + fy[:, None] * (bot - top)
    # guard against rounding a hair outside the input range
    return np.clip(out, image.min(), image.max())


def preprocess_cube(cube: HyperspectralCube, config: PreprocessConfig) -> HyperspectralCube:
    cube = exclude_bands(cube, config.drop_first, config.drop_last)
    bands = []
    for b in range(cube.bands):
        band = median_filter_band(cube.band(b), config.median_window)
        bands.append(resize_band(band, config.target_size))
    return HyperspectralCube(np.stack(bands, axis=2), cube.wavelengths)
