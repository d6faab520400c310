"""Hyperspectral cube data model, on-disk format, manifests and synthetic data.

A cube is stored as two files: a ``key: value`` text header and a raw payload
of little-endian float32 values in band-sequential (BSQ) order. The payload
lives next to the header with the ``.raw`` suffix::

    height: 220
    width: 180
    bands: 33
    wavelengths: 400,410,...,720
    dtype: float32le
    interleave: bsq
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

HEADER_SUFFIX = ".hdr"
PAYLOAD_SUFFIX = ".raw"
_DTYPE = np.dtype("<f4")


class CubeFormatError(ValueError):
    """Raised for malformed headers, payloads or invalid cube contents."""


@dataclass(frozen=True, eq=False)
class HyperspectralCube:
    """H x W x B cube with per-band wavelengths in nm.

    ``data`` is held as float32 (the storage dtype) so that write/load is
    bit-exact.
    """

    data: np.ndarray
    wavelengths: np.ndarray

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        wl = np.asarray(self.wavelengths, dtype=np.float64).ravel()
        if data.ndim != 3:
            raise CubeFormatError(f"cube data must be 3-D (H, W, B), got shape {data.shape}")
        if min(data.shape) < 1:
            raise CubeFormatError(f"empty cube of shape {data.shape}")
        if wl.size != data.shape[2]:
            raise CubeFormatError(f"{wl.size} wavelengths for {data.shape[2]} bands")
        if wl.size > 1 and np.any(np.diff(wl) <= 0):
            raise CubeFormatError("wavelengths must be strictly increasing")
        if not np.all(np.isfinite(data)):
            raise CubeFormatError("cube contains NaN or Inf")
        if np.any(data < 0):
            raise CubeFormatError("cube contains negative values")
        data.setflags(write=False)
        wl.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "wavelengths", wl)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def bands(self) -> int:
        return self.data.shape[2]

    def band(self, index: int) -> np.ndarray:
        return self.data[:, :, index]

    def __eq__(self, other):
        if not isinstance(other, HyperspectralCube):
            return NotImplemented
        return (
            self.data.shape == other.data.shape
            and self.data.tobytes() == other.data.tobytes()
            and np.array_equal(self.wavelengths, other.wavelengths)
        )

    __hash__ = None


def _paths(path) -> tuple[Path, Path]:
    path = Path(path)
    if path.suffix == PAYLOAD_SUFFIX:
        path = path.with_suffix(HEADER_SUFFIX)
    elif path.suffix != HEADER_SUFFIX:
        path = path.with_name(path.name + HEADER_SUFFIX)
    return path, path.with_suffix(PAYLOAD_SUFFIX)


def format_wavelength(w: float) -> str:
    return repr(float(w))


def write_cube(cube: HyperspectralCube, path) -> Path:
    """Write ``cube`` as header + BSQ float32 payload; returns the header path."""
    header, payload = _paths(path)
    header.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        f"height: {cube.height}",
        f"width: {cube.width}",
        f"bands: {cube.bands}",
        "wavelengths: " + ",".join(format_wavelength(w) for w in cube.wavelengths),
        "dtype: float32le",
        "interleave: bsq",
    ]
    header.write_text("\n".join(lines) + "\n")
    bsq = np.ascontiguousarray(cube.data.transpose(2, 0, 1), dtype=_DTYPE)
    payload.write_bytes(bsq.tobytes())
    return header


def read_header(path) -> dict[str, str]:
    fields = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition(":")
        if not sep:
            key, sep, value = line.partition("=")
        if not sep:
            raise CubeFormatError(f"{path}:{lineno}: expected 'key: value'")
        fields[key.strip().lower()] = value.strip()
    return fields


def load_cube(path) -> HyperspectralCube:
    header, payload = _paths(path)
    if not header.exists():
        raise FileNotFoundError(f"cube header not found: {header}")
    if not payload.exists():
        raise FileNotFoundError(f"cube payload not found: {payload}")
    fields = read_header(header)
    try:
        h, w, b = (int(fields[k]) for k in ("height", "width", "bands"))
        wl = [float(v) for v in fields["wavelengths"].split(",")]
    except KeyError as exc:
        raise CubeFormatError(f"{header}: missing header key {exc}") from None
    dtype = fields.get("dtype", "float32le").lower()
    interleave = fields.get("interleave", "bsq").lower()
    if dtype not in ("float32le", "float32"):
        raise CubeFormatError(f"{header}: unsupported dtype {dtype!r}")
    if interleave != "bsq":
        raise CubeFormatError(f"{header}: unsupported interleave {interleave!r}")
    raw = payload.read_bytes()
    expected = h * w * b * _DTYPE.itemsize
    if len(raw) != expected:
        raise CubeFormatError(
            f"{payload}: payload has {len(raw)} bytes, header {h}x{w}x{b} needs {expected}"
        )
    bsq = np.frombuffer(raw, dtype=_DTYPE).reshape(b, h, w)
    return HyperspectralCube(bsq.transpose(1, 2, 0), wl)


# ---------------------------------------------------------------------------
# manifests


@dataclass(frozen=True)
class Sample:
    subject: str
    path: str
    session: int = 0


@dataclass
class DatasetManifest:
    subjects: list[str]
    samples: list[Sample]
    drop_first: int = 0
    drop_last: int = 0
    root: Path | None = field(default=None, compare=False)

    def __post_init__(self):
        known = set(self.subjects)
        if len(known) != len(self.subjects):
            raise ValueError("duplicate subject ids in manifest")
        counts = dict.fromkeys(self.subjects, 0)
        for s in self.samples:
            if s.subject not in known:
                raise ValueError(f"sample {s.path!r} references unknown subject {s.subject!r}")
            counts[s.subject] += 1
        short = [k for k, n in counts.items() if n < 3]
        if short:
            raise ValueError(f"subjects with fewer than 3 samples: {short}")

    def sample_path(self, index: int) -> Path:
        p = Path(self.samples[index].path)
        if not p.is_absolute() and self.root is not None:
            p = self.root / p
        return p

    def labels(self) -> list[int]:
        """Class index (position in ``subjects``) of every sample."""
        lookup = {s: i for i, s in enumerate(self.subjects)}
        return [lookup[s.subject] for s in self.samples]

    def to_dict(self) -> dict:
        return {
            "subjects": list(self.subjects),
            "samples": [
                {"subject": s.subject, "path": s.path, "session": s.session}
                for s in self.samples
            ],
            "band_exclusion": {"drop_first": self.drop_first, "drop_last": self.drop_last},
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def from_dict(cls, d: dict, root=None) -> "DatasetManifest":
        excl = d.get("band_exclusion", {})
        return cls(
            subjects=[str(s) for s in d["subjects"]],
            samples=[
                Sample(str(s["subject"]), str(s["path"]), int(s.get("session", 0)))
                for s in d["samples"]
            ],
            drop_first=int(excl.get("drop_first", 0)),
            drop_last=int(excl.get("drop_last", 0)),
            root=Path(root) if root is not None else None,
        )

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text()), root=path.parent)


# ---------------------------------------------------------------------------
# synthetic data


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the synthetic face-like dataset.

    ``metameric`` makes every subject's material spectra differ from the shared
    base spectra only inside the null space of the RGB projection, so all
    subjects look identical after :func:`hsiclass.colorimetry.hsi_to_rgb`.
    """

    n_subjects: int = 10
    samples_per_subject: int = 4
    height: int = 64
    width: int = 64
    bands: int = 16
    spectral_contrast: float = 0.8
    spatial_contrast: float = 0.8
    noise_sigma: float = 0.02
    seed: int = 0
    wavelength_start: float = 400.0
    wavelength_end: float = 720.0
    metameric: bool = False

    def __post_init__(self):
        for name in ("n_subjects", "height", "width", "bands"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.samples_per_subject < 3:
            raise ValueError("samples_per_subject must be >= 3 (1 gallery + 2 probe)")
        for name in ("spectral_contrast", "spatial_contrast"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.bands > 1 and not self.wavelength_end > self.wavelength_start:
            raise ValueError("wavelength_end must exceed wavelength_start")

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        return cls(**d)

    def wavelengths(self) -> np.ndarray:
        if self.bands == 1:
            return np.array([self.wavelength_start])
        return np.linspace(self.wavelength_start, self.wavelength_end, self.bands)


_N_MATERIALS = 3  # background, skin, features (eyes/mouth/hair)


def _bumps(rng, wl, n_bumps, span):
    lo, hi = wl[0], wl[-1] if wl.size > 1 else wl[0] + 1.0
    curve = np.zeros_like(wl)
    for _ in range(n_bumps):
        center = rng.uniform(lo, hi)
        width = rng.uniform(0.08, 0.25) * span
        amp = rng.uniform(-1.0, 1.0)
        curve += amp * np.exp(-0.5 * ((wl - center) / width) ** 2)
    return curve


def _soft_ellipse(yy, xx, cy, cx, ry, rx, softness=0.15):
    r = np.sqrt(((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2)
    return 1.0 / (1.0 + np.exp((r - 1.0) / softness))


def _layout(rng, yy, xx, contrast):
    """Material abundance maps (3, H, W) summing to one at every pixel."""
    j = lambda scale: contrast * rng.uniform(-scale, scale)  # noqa: E731
    face = _soft_ellipse(yy, xx, j(0.12), j(0.12), 0.8 + j(0.12), 0.62 + j(0.12))
    feat = np.zeros_like(yy)
    # shared features: two eyes and a mouth, positions jittered per subject
    for cy, cx, ry, rx in ((-0.25, -0.25, 0.1, 0.15), (-0.25, 0.25, 0.1, 0.15), (0.35, 0.0, 0.08, 0.3)):
        feat += _soft_ellipse(
            yy, xx, cy + j(0.12), cx + j(0.12), ry * (1 + j(0.4)), rx * (1 + j(0.4)), 0.2
        )
    # subject-only marks
    for _ in range(2):
        amp = contrast * rng.uniform(0.5, 1.0)
        feat += amp * _soft_ellipse(
            yy, xx, rng.uniform(-0.5, 0.5), rng.uniform(-0.4, 0.4),
            rng.uniform(0.06, 0.15), rng.uniform(0.06, 0.15), 0.2,
        )
    feat = np.clip(feat, 0.0, 1.0) * face
    return np.stack([1.0 - face, face - feat, feat])


def generate_synthetic(spec: SyntheticSpec, out_dir) -> DatasetManifest:
    """Write a synthetic dataset under ``out_dir`` and return its manifest.

    Every cube is a per-pixel mix of three materials. Each subject owns a
    layout (jitter scaled by ``spatial_contrast``) and material spectra
    (Gaussian bumps over wavelength scaled by ``spectral_contrast``). Samples
    add i.i.d. Gaussian noise and are clamped to [0, 1].
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    wl = spec.wavelengths()
    span = max(float(wl[-1] - wl[0]), 1.0)

    base = np.stack([
        0.45 + 0.15 * np.tanh(_bumps(rng, wl, 2, span)) for _ in range(_N_MATERIALS)
    ])
    base[0] *= 0.5  # darker background

    null_proj = None
    if spec.metameric:
        from .colorimetry import default_response, rgb_projection

        m = rgb_projection(wl, default_response())  # (3, B)
        null_proj = np.eye(wl.size) - m.T @ np.linalg.pinv(m @ m.T) @ m

    ys = np.linspace(-1.0, 1.0, spec.height)
    xs = np.linspace(-1.0, 1.0, spec.width)
    yy, xx = np.meshgrid(ys, xs, indexing="ij")

    subjects = [f"s{i:03d}" for i in range(spec.n_subjects)]
    samples = []
    for si, subject in enumerate(subjects):
        spectra = np.empty_like(base)
        for m_idx in range(_N_MATERIALS):
            delta = _bumps(rng, wl, 3, span)
            if null_proj is not None:
                delta = null_proj @ delta
            peak = np.max(np.abs(delta))
            if peak > 0:
                delta = delta / peak
            amp = 0.35 * spec.spectral_contrast
            if null_proj is not None:
                # the final [0, 1] clamp would break metamerism, so stay inside it
                amp = min(amp, base[m_idx].min() - 0.02, 0.98 - base[m_idx].max())
            spectra[m_idx] = base[m_idx] + amp * delta
        abund = _layout(rng, yy, xx, spec.spatial_contrast)
        clean = np.einsum("mhw,mb->hwb", abund, spectra)
        for k in range(spec.samples_per_subject):
            noisy = clean
            if spec.noise_sigma > 0:
                noisy = clean + rng.normal(0.0, spec.noise_sigma, size=clean.shape)
            cube = HyperspectralCube(np.clip(noisy, 0.0, 1.0), wl)
            rel = f"cubes/{subject}_{k:02d}"
            write_cube(cube, out_dir / rel)
            samples.append(Sample(subject, rel + HEADER_SUFFIX, k))

    manifest = DatasetManifest(subjects, samples, root=out_dir)
    manifest.save(out_dir / "manifest.json")
    return manifest


def cube_distance(a: HyperspectralCube, b: HyperspectralCube) -> float:
    """Root-mean-square difference between two equally shaped cubes."""
    d = a.data.astype(np.float64) - b.data.astype(np.float64)
    return float(np.sqrt(np.mean(d * d)))


def list_cubes(directory) -> list[Path]:
    return sorted(Path(directory).glob("*" + HEADER_SUFFIX))


__all__ = [
    "CubeFormatError",
    "DatasetManifest",
    "HyperspectralCube",
    "Sample",
    "SyntheticSpec",
    "cube_distance",
    "generate_synthetic",
    "list_cubes",
    "load_cube",
    "read_header",
    "write_cube",
]
