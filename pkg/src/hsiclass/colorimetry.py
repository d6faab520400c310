"""Spectral cube to linear sRGB via CIE 2006 CMFs, D65 and a silicon sensor curve.

Bundled tables (``data/*.csv``, columns ``wavelength_nm,value...``):

* ``cie2006_xyz_2deg.csv`` - CIE 2006 2-degree XYZ colour matching functions
  (CIE 170-2), 390-830 nm at 1 nm.
* ``cie_d65.csv`` - CIE standard illuminant D65, 300-780 nm at 5 nm.
* ``silicon_generic.csv`` - generic silicon photodiode responsivity (A/W),
  300-1100 nm. A stand-in for an unspecified camera sensor.

All curves are linearly resampled to a shared 1 nm grid covering their
common range.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from .cube_io import HyperspectralCube

# XYZ -> linear sRGB (IEC 61966-2-1, D65 white)
XYZ_TO_SRGB = np.array([
    [3.2404542, -1.5371385, -0.4985314],
    [-0.9692660, 1.8760108, 0.0415560],
    [0.0556434, -0.2040259, 1.0572252],
])

# nominal dominant wavelengths used to label the B, G, R output bands
RGB_NOMINAL_NM = (465.0, 550.0, 610.0)


@dataclass(frozen=True, eq=False)
class SpectralResponse:
    wavelengths: np.ndarray
    xbar: np.ndarray
    ybar: np.ndarray
    zbar: np.ndarray
    illuminant: np.ndarray
    sensor: np.ndarray

    def __post_init__(self):
        n = self.wavelengths.size
        for name in ("xbar", "ybar", "zbar", "illuminant", "sensor"):
            arr = getattr(self, name)
            if arr.shape != (n,):
                raise ValueError(f"{name} is not sampled on the response grid")
            if np.any(arr < 0):
                raise ValueError(f"{name} has negative samples")
        if np.trapezoid(self.ybar, self.wavelengths) <= 0:
            raise ValueError("ybar must have a positive integral")

    @classmethod
    def from_curves(cls, cmf, illuminant, sensor, step: float = 1.0) -> "SpectralResponse":
        """Resample ``(wl, values)`` curves onto a common grid.

        ``cmf`` is ``(wl, (N, 3) values)``; the others are ``(wl, values)``.
        """
        lo = max(cmf[0][0], illuminant[0][0], sensor[0][0])
        hi = min(cmf[0][-1], illuminant[0][-1], sensor[0][-1])
        if hi <= lo:
            raise ValueError("response curves do not overlap")
        grid = np.arange(np.ceil(lo), np.floor(hi) + step / 2, step)
        cmf_vals = np.asarray(cmf[1])
        xbar, ybar, zbar = (np.interp(grid, cmf[0], cmf_vals[:, i]) for i in range(3))
        return cls(
            grid, xbar, ybar, zbar,
            np.interp(grid, *illuminant),
            np.interp(grid, *sensor),
        )


def _read_csv(name):
    with resources.files("hsiclass").joinpath("data").joinpath(name).open() as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    body = np.array([[float(v) for v in r] for r in rows[1:]])
    return body[:, 0], body[:, 1:]


@lru_cache(maxsize=1)
def default_response() -> SpectralResponse:
    cmf_wl, cmf = _read_csv("cie2006_xyz_2deg.csv")
    d65_wl, d65 = _read_csv("cie_d65.csv")
    si_wl, si = _read_csv("silicon_generic.csv")
    return SpectralResponse.from_curves((cmf_wl, cmf), (d65_wl, d65[:, 0]), (si_wl, si[:, 0]))


def trapezoid_weights(wl: np.ndarray) -> np.ndarray:
    """Weights ``q`` with ``sum(q * f) == trapezoid(f, wl)``."""
    wl = np.asarray(wl, dtype=np.float64)
    if wl.size == 1:
        return np.ones(1)
    d = np.diff(wl)
    q = np.zeros_like(wl)
    q[:-1] += d / 2
    q[1:] += d / 2
    return q


def xyz_projection(wavelengths, response: SpectralResponse) -> np.ndarray:
    """(3, B) matrix mapping a spectrum sampled at ``wavelengths`` to XYZ.

    Bands outside the response grid are dropped from the integral (with a
    warning). The matrix is scaled so a flat unit spectrum over the covered
    bands has Y = 1.
    """
    wl = np.asarray(wavelengths, dtype=np.float64)
    inside = (wl >= response.wavelengths[0]) & (wl <= response.wavelengths[-1])
    if not np.any(inside):
        raise ValueError(
            f"cube wavelengths {wl[0]}-{wl[-1]} nm do not overlap the response "
            f"{response.wavelengths[0]}-{response.wavelengths[-1]} nm"
        )
    if not np.all(inside):
        warnings.warn(
            f"{np.count_nonzero(~inside)} bands outside the response grid are ignored",
            stacklevel=2,
        )
    q = np.zeros_like(wl)
    q[inside] = trapezoid_weights(wl[inside])
    light = np.interp(wl, response.wavelengths, response.illuminant * response.sensor)
    m = np.stack([
        np.interp(wl, response.wavelengths, cmf) for cmf in (response.xbar, response.ybar, response.zbar)
    ]) * (light * q)
    y_white = m[1].sum()
    if y_white <= 0:
        raise ValueError("no luminance signal in the overlapping range")
    return m / y_white


def rgb_projection(wavelengths, response: SpectralResponse) -> np.ndarray:
    """(3, B) matrix from spectrum to linear sRGB, before output scaling."""
    return XYZ_TO_SRGB @ xyz_projection(wavelengths, response)


def white_scale(wavelengths, response: SpectralResponse) -> float:
    """Factor that maps a flat unit spectrum's largest RGB channel to 1."""
    white = rgb_projection(wavelengths, response).sum(axis=1)
    return 1.0 / float(np.max(white))


def spectral_to_linear_rgb(data: np.ndarray, wavelengths, response: SpectralResponse | None = None) -> np.ndarray:
    """Unclamped linear RGB (..., 3) of spectra (..., B). Linear in ``data``."""
    response = response or default_response()
    proj = rgb_projection(wavelengths, response) * white_scale(wavelengths, response)
    return np.asarray(data, dtype=np.float64) @ proj.T


def chromaticity(xyz: np.ndarray) -> np.ndarray:
    xyz = np.asarray(xyz, dtype=np.float64)
    s = xyz.sum(axis=-1, keepdims=True)
    return xyz[..., :2] / s


def hsi_to_rgb_array(cube: HyperspectralCube, response: SpectralResponse | None = None) -> np.ndarray:
    """H x W x 3 linear sRGB in R, G, B order, clamped to [0, 1]."""
    rgb = spectral_to_linear_rgb(cube.data, cube.wavelengths, response)
    return np.clip(rgb, 0.0, 1.0)


def hsi_to_rgb(cube: HyperspectralCube, response: SpectralResponse | None = None) -> HyperspectralCube:
    """3-band cube of linear sRGB.

    Bands are stored in B, G, R order so the nominal wavelengths
    (``RGB_NOMINAL_NM``) stay increasing.
    """
    rgb = hsi_to_rgb_array(cube, response)
    return HyperspectralCube(rgb[:, :, ::-1], RGB_NOMINAL_NM)


def srgb_gamma(linear: np.ndarray) -> np.ndarray:
    """sRGB transfer curve, for export only."""
    linear = np.clip(linear, 0.0, 1.0)
    return np.where(linear <= 0.0031308, 12.92 * linear, 1.055 * linear ** (1 / 2.4) - 0.055)
