import itertools

import numpy as np
import pytest

from hsiclass.cube_io import (
    CubeFormatError,
    DatasetManifest,
    HyperspectralCube,
    Sample,
    SyntheticSpec,
    cube_distance,
    generate_synthetic,
    load_cube,
    read_header,
    write_cube,
)


def _cube(rng, h=5, w=4, b=3):
    return HyperspectralCube(rng.random((h, w, b)), np.linspace(400, 720, b))


def test_round_trip_is_bitwise(tmp_path, rng):
    c = _cube(rng)
    write_cube(c, tmp_path / "a")
    back = load_cube(tmp_path / "a")
    assert back == c
    assert back.data.tobytes() == c.data.tobytes()
    np.testing.assert_array_equal(back.wavelengths, c.wavelengths)


@pytest.mark.parametrize("suffix", ["", ".hdr", ".raw"])
def test_load_accepts_any_of_the_paths(tmp_path, rng, suffix):
    c = _cube(rng)
    write_cube(c, tmp_path / "a")
    assert load_cube(str(tmp_path / "a") + suffix) == c


def test_header_contents(tmp_path, rng):
    hdr = write_cube(_cube(rng, 2, 3, 4), tmp_path / "x")
    fields = read_header(hdr)
    assert (fields["height"], fields["width"], fields["bands"]) == ("2", "3", "4")
    assert fields["interleave"] == "bsq"


def test_payload_size_mismatch(tmp_path):
    c = HyperspectralCube(np.zeros((2, 2, 3)), [400, 500, 600])
    write_cube(c, tmp_path / "m")
    (tmp_path / "m.raw").write_bytes(np.zeros(11, "<f4").tobytes())
    with pytest.raises(CubeFormatError, match="payload"):
        load_cube(tmp_path / "m")


def test_single_pixel_payload_is_four_bytes(tmp_path):
    write_cube(HyperspectralCube(np.full((1, 1, 1), 0.5), [550.0]), tmp_path / "one")
    raw = (tmp_path / "one.raw").read_bytes()
    assert raw == np.float32(0.5).tobytes()
    assert len(raw) == 4


def test_payload_size_for_dataset_geometry(tmp_path):
    wl = np.arange(400, 721, 10)
    assert wl.size == 33
    c = HyperspectralCube(np.zeros((220, 180, 33)), wl)
    write_cube(c, tmp_path / "big")
    assert (tmp_path / "big.raw").stat().st_size == 220 * 180 * 33 * 4
    assert load_cube(tmp_path / "big").bands == 33


def test_band_sequential_layout(tmp_path):
    data = np.arange(2 * 3 * 2, dtype=np.float32).reshape(2, 3, 2)
    write_cube(HyperspectralCube(data, [1, 2]), tmp_path / "b")
    raw = np.frombuffer((tmp_path / "b.raw").read_bytes(), "<f4")
    np.testing.assert_array_equal(raw[:6], data[:, :, 0].ravel())


@pytest.mark.parametrize(
    "data, wl",
    [
        (np.full((2, 2, 2), np.nan), [400, 410]),
        (np.ones((2, 2, 2)), [410, 400]),
        (np.ones((2, 2, 2)), [400, 400]),
        (np.ones((2, 2, 2)), [400]),
        (-np.ones((2, 2, 2)), [400, 410]),
        (np.ones((2, 2)), [400]),
    ],
)
def test_invalid_cubes_rejected(data, wl):
    with pytest.raises(CubeFormatError):
        HyperspectralCube(data, wl)


def test_nan_payload_rejected_on_load(tmp_path):
    write_cube(HyperspectralCube(np.ones((1, 2, 1)), [500]), tmp_path / "n")
    (tmp_path / "n.raw").write_bytes(np.array([1.0, np.nan], "<f4").tobytes())
    with pytest.raises(CubeFormatError):
        load_cube(tmp_path / "n")


def test_missing_file(tmp_path):
    with pytest.raises((CubeFormatError, FileNotFoundError)):
        load_cube(tmp_path / "nope")


def test_manifest_round_trip_and_labels(tmp_path):
    m = DatasetManifest(
        ["a", "b"],
        [Sample(s, f"{s}{i}.hdr", i) for s in "ab" for i in range(3)],
        drop_first=6,
        drop_last=3,
    )
    m.save(tmp_path / "m.json")
    back = DatasetManifest.load(tmp_path / "m.json")
    assert back == m
    assert back.labels() == [0, 0, 0, 1, 1, 1]
    assert back.sample_path(0) == tmp_path / "a0.hdr"


def test_manifest_needs_three_samples():
    with pytest.raises(ValueError, match="fewer than 3"):
        DatasetManifest(["a"], [Sample("a", "x", 0), Sample("a", "y", 1)])


def test_manifest_unknown_subject():
    with pytest.raises(ValueError):
        DatasetManifest(["a"], [Sample("b", "x", 0)] * 3)


SMALL = dict(n_subjects=3, samples_per_subject=3, height=12, width=10, bands=4)


def test_synthetic_is_deterministic(tmp_path):
    spec = SyntheticSpec(**SMALL, seed=3)
    generate_synthetic(spec, tmp_path / "a")
    generate_synthetic(spec, tmp_path / "b")
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert len(files) == 3 * 3 * 2 + 1
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_synthetic_degenerate_subjects_identical(tmp_path):
    spec = SyntheticSpec(**SMALL, spectral_contrast=0.0, spatial_contrast=0.0, noise_sigma=0.0)
    m = generate_synthetic(spec, tmp_path)
    cubes = [load_cube(m.sample_path(i)) for i in range(len(m.samples))]
    assert all(c == cubes[0] for c in cubes)


def test_synthetic_inter_subject_distance_exceeds_intra(tmp_path):
    spec = SyntheticSpec(
        n_subjects=10, samples_per_subject=4, height=64, width=64, bands=16,
        spectral_contrast=0.8, spatial_contrast=0.8, noise_sigma=0.02, seed=7,
    )
    m = generate_synthetic(spec, tmp_path)
    cubes = [load_cube(m.sample_path(i)) for i in range(len(m.samples))]
    labels = m.labels()
    intra, inter = [], []
    for i, j in itertools.combinations(range(len(cubes)), 2):
        (intra if labels[i] == labels[j] else inter).append(cube_distance(cubes[i], cubes[j]))
    assert np.mean(inter) / np.mean(intra) > 1.0


def test_synthetic_spec_validation():
    with pytest.raises(ValueError):
        SyntheticSpec(samples_per_subject=2)
    with pytest.raises(ValueError):
        SyntheticSpec(spectral_contrast=1.5)
