import warnings

import numpy as np
import pytest

import oracles
from hsiclass.colorimetry import (
    RGB_NOMINAL_NM,
    XYZ_TO_SRGB,
    chromaticity,
    default_response,
    hsi_to_rgb,
    hsi_to_rgb_array,
    spectral_to_linear_rgb,
    srgb_gamma,
    trapezoid_weights,
    xyz_projection,
)
from hsiclass.cube_io import HyperspectralCube

WL = np.arange(400.0, 721.0, 10.0)


def test_zero_cube_is_black():
    rgb = hsi_to_rgb(HyperspectralCube(np.zeros((3, 4, WL.size)), WL))
    assert rgb.bands == 3 and not rgb.data.any()
    np.testing.assert_array_equal(rgb.wavelengths, RGB_NOMINAL_NM)


def test_flat_spectrum_white_point():
    cube = HyperspectralCube(np.ones((2, 2, WL.size)), WL)
    rgb = hsi_to_rgb_array(cube)[0, 0]
    assert rgb.max() == pytest.approx(1.0) and rgb.min() > 0  # nothing clamped
    xyz = np.linalg.solve(XYZ_TO_SRGB, rgb)
    xy = chromaticity(xyz)
    assert np.max(np.abs(xy - oracles.white_point_xy(WL))) <= 0.01


def test_flat_spectrum_has_unit_luminance():
    m = xyz_projection(WL, default_response())
    assert m[1].sum() == pytest.approx(1.0, abs=1e-12)


def test_narrowband_green():
    data = np.zeros((1, 1, WL.size))
    data[0, 0, list(WL).index(550.0)] = 1.0
    rgb = hsi_to_rgb_array(HyperspectralCube(data, WL))[0, 0]
    expected = XYZ_TO_SRGB @ oracles.cmf_at(550.0)
    assert expected.argmax() == 1
    assert rgb[1] > rgb[0] and rgb[1] > rgb[2]


def test_linearity_before_clamping(rng):
    a = rng.random((5, WL.size))
    b = rng.random((5, WL.size))
    s, t = 0.7, -1.3
    lhs = spectral_to_linear_rgb(s * a + t * b, WL)
    rhs = s * spectral_to_linear_rgb(a, WL) + t * spectral_to_linear_rgb(b, WL)
    assert np.max(np.abs(lhs - rhs)) <= 1e-9


def test_bgr_storage_order(rng):
    cube = HyperspectralCube(rng.random((3, 3, WL.size)), WL)
    np.testing.assert_array_equal(hsi_to_rgb(cube).data, hsi_to_rgb_array(cube)[:, :, ::-1].astype(np.float32))


def test_trapezoid_weights():
    wl = np.array([400.0, 410.0, 430.0])
    f = np.array([1.0, 2.0, 5.0])
    assert trapezoid_weights(wl) @ f == pytest.approx(np.trapezoid(f, wl))


def test_out_of_range_bands_warn_and_are_ignored():
    wl = np.array([350.0, 500.0, 600.0, 900.0])
    with pytest.warns(UserWarning, match="outside"):
        m = xyz_projection(wl, default_response())
    assert m[:, 0].tolist() == [0, 0, 0] and m[:, 3].tolist() == [0, 0, 0]


def test_no_overlap_is_an_error():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(ValueError):
            xyz_projection(np.array([900.0, 950.0]), default_response())


def test_gamma_endpoints():
    np.testing.assert_allclose(srgb_gamma(np.array([0.0, 1.0])), [0.0, 1.0])
