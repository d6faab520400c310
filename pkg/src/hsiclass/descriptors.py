"""HOG, uniform LBP and dense SIFT on single-band images.

All extractors are pure functions of ``(image, config)``. Gradients are
central differences with edge replication, shared by HOG and SIFT.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Literal

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

Kind = Literal["HOG", "LBP", "DSIFT"]


@dataclass(frozen=True)
class HogConfig:
    cell: int = 8
    bins: int = 9
    block: int = 2
    block_stride: int = 1
    unsigned_orientations: bool = True
    epsilon: float = 1e-6
    clip: float = 0.2

    def __post_init__(self):
        if self.cell < 2 or self.bins < 2 or self.block < 1 or self.block_stride < 1:
            raise ValueError(f"invalid HOG config {self}")


@dataclass(frozen=True)
class LbpConfig:
    radius: float = 1.0
    neighbors: int = 8
    cell: int = 8
    uniform: bool = True

    def __post_init__(self):
        if self.radius <= 0 or self.cell < 1:
            raise ValueError(f"invalid LBP config {self}")
        if not 1 <= self.neighbors <= 16:
            raise ValueError("neighbors must be in [1, 16]")

    @property
    def n_labels(self) -> int:
        p = self.neighbors
        return p * (p - 1) + 3 if self.uniform else 2**p


@dataclass(frozen=True)
class SiftConfig:
    bin_size: int = 4
    step: int = 8
    spatial_bins: int = 4
    orientation_bins: int = 8
    norm_threshold: float = 1e-5
    clip: float = 0.2

    def __post_init__(self):
        if self.bin_size < 1 or self.step < 1 or self.spatial_bins < 1 or self.orientation_bins < 2:
            raise ValueError(f"invalid SIFT config {self}")

    @property
    def patch(self) -> int:
        return self.spatial_bins * self.bin_size

    @property
    def dim(self) -> int:
        return self.spatial_bins**2 * self.orientation_bins


@dataclass(frozen=True, eq=False)
class DescriptorSet:
    kind: str
    band_index: int
    vectors: np.ndarray  # (n, dim)
    grid_shape: tuple[int, int]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def image_gradients(image: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Half central differences ``(I[x+1] - I[x-1]) / 2`` with replicated edges."""
    p = np.pad(np.asarray(image, dtype=np.float64), 1, mode="edge")
    gx = 0.5 * (p[1:-1, 2:] - p[1:-1, :-2])
    gy = 0.5 * (p[2:, 1:-1] - p[:-2, 1:-1])
    return gx, gy


def _orientation_votes(gx, gy, bins, period):
    """Split each pixel's magnitude between the two nearest orientation bins.

    Bin ``k`` is centred on ``k * period / bins``.
    """
    mag = np.hypot(gx, gy)
    ang = np.mod(np.arctan2(gy, gx), period)
    pos = ang * (bins / period)
    lo = np.floor(pos)
    frac = pos - lo
    b0 = lo.astype(np.intp) % bins
    b1 = (b0 + 1) % bins
    return b0, b1, (1.0 - frac) * mag, frac * mag


def _l2_hys(v, clip, eps):
    v = v / np.sqrt(np.sum(v * v, axis=-1, keepdims=True) + eps * eps)
    v = np.minimum(v, clip)
    return v / np.sqrt(np.sum(v * v, axis=-1, keepdims=True) + eps * eps)


# ---------------------------------------------------------------------------
# HOG


def hog_cell_histograms(image: np.ndarray, config: HogConfig = HogConfig()) -> np.ndarray:
    """Per-cell orientation histograms, shape (cells_y, cells_x, bins)."""
    image = np.asarray(image, dtype=np.float64)
    c = config.cell
    ncy, ncx = image.shape[0] // c, image.shape[1] // c
    period = np.pi if config.unsigned_orientations else 2 * np.pi
    gx, gy = image_gradients(image)
    b0, b1, w0, w1 = (a[: ncy * c, : ncx * c] for a in _orientation_votes(gx, gy, config.bins, period))
    rows, cols = np.indices((ncy * c, ncx * c))
    cell_idx = (rows // c) * ncx + cols // c
    n = ncy * ncx * config.bins
    hist = np.bincount((cell_idx * config.bins + b0).ravel(), w0.ravel(), minlength=n)
    hist += np.bincount((cell_idx * config.bins + b1).ravel(), w1.ravel(), minlength=n)
    return hist.reshape(ncy, ncx, config.bins)


def hog_layout(shape: tuple[int, int], config: HogConfig = HogConfig()) -> tuple[int, int]:
    """Number of blocks per axis for an image of ``shape``."""
    cells = (shape[0] // config.cell, shape[1] // config.cell)
    return tuple((n - config.block) // config.block_stride + 1 for n in cells)


def extract_hog(image: np.ndarray, config: HogConfig = HogConfig(), band_index: int = 0) -> DescriptorSet:
    image = np.asarray(image, dtype=np.float64)
    need = config.cell * config.block
    if image.ndim != 2 or image.shape[0] < need or image.shape[1] < need:
        raise ValueError(f"HOG needs an image of at least {need}x{need}, got {image.shape}")
    hist = hog_cell_histograms(image, config)
    k, s = config.block, config.block_stride
    # (by, bx, bins, k, k) -> (by, bx, k, k, bins)
    blocks = sliding_window_view(hist, (k, k), axis=(0, 1))[::s, ::s]
    blocks = blocks.transpose(0, 1, 3, 4, 2)
    nby, nbx = blocks.shape[:2]
    blocks = blocks.reshape(nby, nbx, k * k * config.bins)
    vec = _l2_hys(blocks, config.clip, config.epsilon).reshape(1, -1)
    return DescriptorSet("HOG", band_index, vec, (nby, nbx))


# ---------------------------------------------------------------------------
# LBP


@lru_cache(maxsize=None)
def uniform_lbp_table(neighbors: int = 8) -> np.ndarray:
    """Map raw P-bit codes to uniform labels.

    Codes with at most two circular 0/1 transitions get distinct labels in
    increasing code order; every other code shares the last label.
    """
    p = neighbors
    codes = np.arange(2**p)
    bits = (codes[:, None] >> np.arange(p)) & 1
    transitions = np.sum(bits != np.roll(bits, -1, axis=1), axis=1)
    uniform = transitions <= 2
    table = np.full(2**p, p * (p - 1) + 2, dtype=np.intp)
    table[uniform] = np.arange(np.count_nonzero(uniform))
    table.setflags(write=False)
    return table


def lbp_offsets(config: LbpConfig) -> list[tuple[float, float]]:
    """(dy, dx) of each circular neighbour; neighbour 0 lies to the right."""
    out = []
    for p in range(config.neighbors):
        theta = 2 * np.pi * p / config.neighbors
        dy = round(-config.radius * np.sin(theta), 10) + 0.0
        dx = round(config.radius * np.cos(theta), 10) + 0.0
        out.append((dy, dx))
    return out


def lbp_codes(image: np.ndarray, config: LbpConfig = LbpConfig()) -> np.ndarray:
    """Raw LBP code per pixel; bit p is set when neighbour p >= centre."""
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape
    pad = int(np.ceil(config.radius)) + 1
    padded = np.pad(image, pad, mode="edge")
    codes = np.zeros((h, w), dtype=np.int64)
    for p, (dy, dx) in enumerate(lbp_offsets(config)):
        y0, x0 = int(np.floor(dy)), int(np.floor(dx))
        fy, fx = dy - y0, dx - x0

        def shifted(oy, ox):
            return padded[pad + oy : pad + oy + h, pad + ox : pad + ox + w]

        a, b = shifted(y0, x0), shifted(y0, x0 + 1)
        c, d = shifted(y0 + 1, x0), shifted(y0 + 1, x0 + 1)
        # lerp form keeps constant regions exact, so ties resolve deterministically
        top = a + fx * (b - a)
        bot = c + fx * (d - c)
        sample = top + fy * (bot - top)
        codes |= (sample >= image).astype(np.int64) << p
    return codes


def extract_lbp(image: np.ndarray, config: LbpConfig = LbpConfig(), band_index: int = 0) -> DescriptorSet:
    image = np.asarray(image, dtype=np.float64)
    need = max(int(2 * np.ceil(config.radius) + 1), config.cell)
    if image.ndim != 2 or image.shape[0] < need or image.shape[1] < need:
        raise ValueError(f"LBP needs an image of at least {need}x{need}, got {image.shape}")
    codes = lbp_codes(image, config)
    labels = uniform_lbp_table(config.neighbors)[codes] if config.uniform else codes
    c = config.cell
    ncy, ncx = image.shape[0] // c, image.shape[1] // c
    labels = labels[: ncy * c, : ncx * c]
    rows, cols = np.indices(labels.shape)
    cell_idx = (rows // c) * ncx + cols // c
    nl = config.n_labels
    hist = np.bincount((cell_idx * nl + labels).ravel(), minlength=ncy * ncx * nl).astype(np.float64)
    hist /= c * c
    return DescriptorSet("LBP", band_index, hist.reshape(1, -1), (ncy, ncx))


# ---------------------------------------------------------------------------
# dense SIFT


@lru_cache(maxsize=None)
def sift_spatial_weights(config: SiftConfig) -> np.ndarray:
    """Separable per-axis weights (spatial_bins, patch).

    Bilinear weight of each patch pixel for each bin centre, multiplied by a
    Gaussian window with sigma equal to half the patch width.
    """
    patch, bs = config.patch, config.bin_size
    p = np.arange(patch, dtype=np.float64)
    centres = (np.arange(config.spatial_bins) + 0.5) * bs - 0.5
    tri = np.maximum(0.0, 1.0 - np.abs(p[None, :] - centres[:, None]) / bs)
    sigma = patch / 2.0
    gauss = np.exp(-0.5 * ((p - (patch - 1) / 2.0) / sigma) ** 2)
    w = tri * gauss[None, :]
    w.setflags(write=False)
    return w


def dsift_grid(shape: tuple[int, int], config: SiftConfig = SiftConfig()) -> tuple[int, int]:
    return tuple((n - config.patch) // config.step + 1 for n in shape)


def orientation_channels(image: np.ndarray, bins: int) -> np.ndarray:
    """Gradient magnitude split over ``bins`` signed orientation channels (bins, H, W)."""
    gx, gy = image_gradients(image)
    b0, b1, w0, w1 = _orientation_votes(gx, gy, bins, 2 * np.pi)
    chans = np.zeros((bins,) + gx.shape)
    for o in range(bins):
        chans[o] = np.where(b0 == o, w0, 0.0) + np.where(b1 == o, w1, 0.0)
    return chans


def normalize_sift(raw: np.ndarray, config: SiftConfig = SiftConfig()) -> np.ndarray:
    """L2-normalise, clip and renormalise rows; weak rows become zero."""
    raw = np.atleast_2d(raw)
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    keep = norms[:, 0] >= config.norm_threshold
    out = np.zeros_like(raw)
    v = np.minimum(raw[keep] / norms[keep], config.clip)
    out[keep] = v / np.linalg.norm(v, axis=1, keepdims=True)
    return out


def extract_dsift(image: np.ndarray, config: SiftConfig = SiftConfig(), band_index: int = 0) -> DescriptorSet:
    """Upright single-scale SIFT on a regular grid.

    Descriptors are ordered row-major over the grid; each is laid out as
    (spatial row, spatial col, orientation).
    """
    image = np.asarray(image, dtype=np.float64)
    patch = config.patch
    if image.ndim != 2 or image.shape[0] < patch or image.shape[1] < patch:
        raise ValueError(f"dense SIFT needs an image of at least {patch}x{patch}, got {image.shape}")
    chans = orientation_channels(image, config.orientation_bins)
    ny, nx = dsift_grid(image.shape, config)
    s = config.step
    # (O, ny, nx, patch, patch)
    patches = sliding_window_view(chans, (patch, patch), axis=(1, 2))[:, : (ny - 1) * s + 1 : s, : (nx - 1) * s + 1 : s]
    w = sift_spatial_weights(config)
    raw = np.einsum("oyxpq,ap,bq->yxabo", patches, w, w, optimize=True)
    raw = raw.reshape(ny * nx, config.dim)
    return DescriptorSet("DSIFT", band_index, normalize_sift(raw, config), (ny, nx))


# ---------------------------------------------------------------------------


def extract(image: np.ndarray, kind: str, config=None, band_index: int = 0) -> DescriptorSet:
    kind = kind.upper()
    if kind == "HOG":
        return extract_hog(image, config or HogConfig(), band_index)
    if kind == "LBP":
        return extract_lbp(image, config or LbpConfig(), band_index)
    if kind in ("DSIFT", "SIFT"):
        return extract_dsift(image, config or SiftConfig(), band_index)
    raise ValueError(f"unknown descriptor kind {kind!r}")


def extract_cube(cube, kind: str, config=None, n_jobs: int = 1) -> list[DescriptorSet]:
    """Extract descriptors from every band, optionally on a thread pool."""
    run = lambda b: extract(cube.band(b), kind, config, b)  # noqa: E731
    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            return list(pool.map(run, range(cube.bands)))
    return [run(b) for b in range(cube.bands)]


# ---------------------------------------------------------------------------
# feature files: text header + little-endian float32 payload (``<path>.raw``)


def save_features(sets: list[DescriptorSet], path) -> None:
    """Write one cube's per-band descriptor sets (same kind and shape)."""
    if not sets:
        raise ValueError("nothing to save")
    first = sets[0]
    for s in sets:
        if s.kind != first.kind or s.vectors.shape != first.vectors.shape or s.grid_shape != first.grid_shape:
            raise ValueError("all bands must share kind, shape and grid")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n, dim = first.vectors.shape
    path.write_text(
        f"kind: {first.kind}\nbands: {len(sets)}\ncount: {n}\ndim: {dim}\n"
        f"grid: {first.grid_shape[0]},{first.grid_shape[1]}\ndtype: float32le\n"
    )
    payload = np.stack([s.vectors for s in sets]).astype("<f4")
    path.with_name(path.name + ".raw").write_bytes(payload.tobytes())


def load_features(path) -> list[DescriptorSet]:
    from .cube_io import read_header

    path = Path(path)
    hdr = read_header(path)
    bands, n, dim = int(hdr["bands"]), int(hdr["count"]), int(hdr["dim"])
    grid = tuple(int(v) for v in hdr["grid"].split(","))
    raw = path.with_name(path.name + ".raw").read_bytes()
    if len(raw) != bands * n * dim * 4:
        raise ValueError(f"{path}: payload size does not match {bands}x{n}x{dim}")
    vals = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(bands, n, dim)
    return [DescriptorSet(hdr["kind"], b, vals[b], grid) for b in range(bands)]
