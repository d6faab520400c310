"""Gallery/probe protocol, end-to-end experiments and report tables.

Splits are drawn with SplitMix64 so any implementation can reproduce them
bit-exactly from the seed:

    state <- state + 0x9E3779B97F4A7C15            (mod 2**64)
    z <- state
    z <- (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9      (mod 2**64)
    z <- (z ^ (z >> 27)) * 0x94D049BB133111EB      (mod 2**64)
    output z ^ (z >> 31)

A bounded draw in [0, n) rejects outputs >= 2**64 - (2**64 mod n) and
returns ``output mod n``. One generator seeded with the protocol seed is used
for the whole run. For each repetition and each subject (manifest order) the
subject's sample indices, in manifest order, are shuffled by Fisher-Yates
(i from n-1 down to 1, swap i with a bounded draw in [0, i]); the first
``gallery_per_subject`` become gallery, the next ``probe_per_subject`` probe.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classify import SvmTrainConfig, fuse_votes, predict_band, tally_votes, train_band_ensemble
from .colorimetry import hsi_to_rgb
from .cube_io import DatasetManifest, HyperspectralCube, load_cube
from .descriptors import HogConfig, LbpConfig, SiftConfig, extract_cube
from .encoding import EmConfig, GmmModel, encode, fit_gmm
from .preprocess import PreprocessConfig, exclude_bands, preprocess_cube

log = logging.getLogger(__name__)

_MASK64 = (1 << 64) - 1
METHODS = ("hog", "lbp", "dsift-fv")


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        if n < 1:
            raise ValueError("bound must be >= 1")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            v = self.next()
            if v < limit:
                return v % n

    def shuffle(self, items: list) -> list:
        items = list(items)
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]
        return items


@dataclass(frozen=True)
class ProtocolConfig:
    gallery_per_subject: int = 1
    probe_per_subject: int = 2
    repetitions: int = 5
    seed: int = 0
    subjects_limit: int | None = None

    def __post_init__(self):
        if self.gallery_per_subject < 1 or self.probe_per_subject < 1:
            raise ValueError("gallery and probe counts must be >= 1")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")


@dataclass(frozen=True)
class Split:
    gallery: tuple[int, ...]
    probe: tuple[int, ...]


def scoped_subjects(manifest: DatasetManifest, config: ProtocolConfig) -> list[str]:
    subjects = list(manifest.subjects)
    if config.subjects_limit is not None:
        subjects = subjects[: config.subjects_limit]
    return subjects


def make_splits(manifest: DatasetManifest, config: ProtocolConfig) -> list[Split]:
    subjects = scoped_subjects(manifest, config)
    per_subject = {s: [] for s in subjects}
    for i, sample in enumerate(manifest.samples):
        if sample.subject in per_subject:
            per_subject[sample.subject].append(i)
    need = config.gallery_per_subject + config.probe_per_subject
    for s, idx in per_subject.items():
        if len(idx) < need:
            raise ValueError(f"subject {s!r} has {len(idx)} samples, protocol needs {need}")
    rng = SplitMix64(config.seed)
    splits = []
    for _ in range(config.repetitions):
        gallery, probe = [], []
        for s in subjects:
            order = rng.shuffle(per_subject[s])
            gallery += order[: config.gallery_per_subject]
            probe += order[config.gallery_per_subject : need]
        splits.append(Split(tuple(gallery), tuple(probe)))
    return splits


# ---------------------------------------------------------------------------
# pipeline


@dataclass(frozen=True)
class PipelineConfig:
    preprocess: PreprocessConfig = PreprocessConfig()
    hog: HogConfig = HogConfig()
    lbp: LbpConfig = LbpConfig()
    sift: SiftConfig = SiftConfig()
    em: EmConfig = EmConfig()
    svm: SvmTrainConfig = SvmTrainConfig()
    # apply the manifest's band_exclusion on top of preprocess.drop_*
    manifest_exclusion: bool = True
    power_norm: bool = False
    per_band_gmm: bool = False
    # cap on descriptors used to fit each GMM (uniform subsample); None = all
    gmm_max_descriptors: int | None = 50_000
    n_jobs: int = 1

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        sub = {
            "preprocess": PreprocessConfig, "hog": HogConfig, "lbp": LbpConfig,
            "sift": SiftConfig, "em": EmConfig, "svm": SvmTrainConfig,
        }
        kwargs = {k: (sub[k](**v) if k in sub else v) for k, v in d.items()}
        return cls(**kwargs)


@dataclass
class ExperimentReport:
    method: str
    representation: str
    accuracies: list[float]
    per_band_accuracies: list[float]
    n_gallery: int
    n_probe: int
    bands: int
    config: dict = field(default_factory=dict)

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.accuracies))

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "representation": self.representation,
            "mean_accuracy": self.mean_accuracy,
            "accuracies": list(self.accuracies),
            "per_band_accuracies": list(self.per_band_accuracies),
            "n_gallery": self.n_gallery,
            "n_probe": self.n_probe,
            "bands": self.bands,
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentReport":
        return cls(
            d["method"], d.get("representation", "hsi"), list(d["accuracies"]),
            list(d.get("per_band_accuracies", [])), d["n_gallery"], d["n_probe"],
            d.get("bands", 0), d.get("config", {}),
        )


def method_kind(method: str) -> str:
    m = method.lower()
    if m not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    return {"hog": "HOG", "lbp": "LBP", "dsift-fv": "DSIFT"}[m]


def _descriptor_config(kind: str, config: PipelineConfig):
    return {"HOG": config.hog, "LBP": config.lbp, "DSIFT": config.sift}[kind]


def effective_preprocess(manifest: DatasetManifest, config: PipelineConfig, representation: str) -> PreprocessConfig:
    pp = config.preprocess
    if representation == "rgb":
        # band exclusion happens before the RGB projection
        return dataclasses.replace(pp, drop_first=0, drop_last=0)
    if config.manifest_exclusion:
        pp = dataclasses.replace(
            pp, drop_first=pp.drop_first + manifest.drop_first, drop_last=pp.drop_last + manifest.drop_last
        )
    return pp


def prepare_cube(cube: HyperspectralCube, manifest: DatasetManifest, config: PipelineConfig, representation: str = "hsi") -> HyperspectralCube:
    if representation == "rgb":
        drop_first, drop_last = config.preprocess.drop_first, config.preprocess.drop_last
        if config.manifest_exclusion:
            drop_first += manifest.drop_first
            drop_last += manifest.drop_last
        cube = hsi_to_rgb(exclude_bands(cube, drop_first, drop_last))
    elif representation != "hsi":
        raise ValueError(f"unknown representation {representation!r}")
    return preprocess_cube(cube, effective_preprocess(manifest, config, representation))


def extract_samples(manifest, indices, kind, config, representation="hsi", cube_cache=None):
    """Descriptor arrays per sample and band: ``out[i][b]`` is (n_vectors, dim).

    ``cube_cache`` (a dict) keeps prepared cubes for reuse by later runs with
    the same manifest and preprocessing.
    """
    dcfg = _descriptor_config(kind, config)
    out = {}
    for i in indices:
        key = (str(manifest.sample_path(i)), representation, config.preprocess, config.manifest_exclusion,
               manifest.drop_first, manifest.drop_last)
        cube = cube_cache.get(key) if cube_cache is not None else None
        if cube is None:
            cube = prepare_cube(load_cube(manifest.sample_path(i)), manifest, config, representation)
            if cube_cache is not None:
                cube_cache[key] = cube
        out[i] = [d.vectors for d in extract_cube(cube, kind, dcfg, config.n_jobs)]
    return out


def _subsample_seed(config: PipelineConfig, repetition: int, band: int | None) -> int:
    return (config.em.seed * 1_000_003 + repetition * 1009 + (band if band is not None else 0) + 1) & _MASK64


def fit_dictionary(descriptor_sets, config: PipelineConfig, repetition: int = 0, band: int | None = None) -> GmmModel:
    """Fit a GMM on pooled descriptors; all-zero (flat-patch) descriptors are left out."""
    pooled = np.concatenate([np.asarray(d) for d in descriptor_sets], axis=0)
    pooled = pooled[np.any(pooled != 0, axis=1)]
    cap = config.gmm_max_descriptors
    if cap is not None and pooled.shape[0] > cap:
        rng = np.random.default_rng(_subsample_seed(config, repetition, band))
        pooled = pooled[np.sort(rng.choice(pooled.shape[0], cap, replace=False))]
    log.info("fitting GMM k=%d on %d descriptors", config.em.k, pooled.shape[0])
    return fit_gmm(pooled, config.em)


def encode_samples(descs, indices, gallery, config: PipelineConfig, repetition: int):
    """Fisher vectors per sample and band with dictionaries fit on ``gallery`` only."""
    n_bands = len(descs[indices[0]])
    if config.per_band_gmm:
        gmms = [
            fit_dictionary([descs[g][b] for g in gallery], config, repetition, b) for b in range(n_bands)
        ]
    else:
        shared = fit_dictionary([d for g in gallery for d in descs[g]], config, repetition)
        gmms = [shared] * n_bands
    return {
        i: [encode(descs[i][b], gmms[b], config.power_norm) for b in range(n_bands)] for i in indices
    }


def _config_snapshot(method, protocol, config, preprocess):
    kind = method_kind(method)
    snap = {
        "protocol": dataclasses.asdict(protocol),
        "preprocess": dataclasses.asdict(preprocess),
        "descriptor": dataclasses.asdict(_descriptor_config(kind, config)),
        "svm": dataclasses.asdict(config.svm),
    }
    if kind == "DSIFT":
        snap["em"] = dataclasses.asdict(config.em)
        snap["fisher"] = {
            "power_norm": config.power_norm,
            "per_band_gmm": config.per_band_gmm,
            "gmm_max_descriptors": config.gmm_max_descriptors,
        }
    return snap


def run_experiment(
    manifest: DatasetManifest,
    method: str,
    protocol: ProtocolConfig = ProtocolConfig(),
    config: PipelineConfig = PipelineConfig(),
    representation: str = "hsi",
    splits: list[Split] | None = None,
    cube_cache: dict | None = None,
) -> ExperimentReport:
    """Run the gallery/probe protocol for one descriptor method.

    Cubes are preprocessed and described once; dictionaries (DSIFT-FV) and
    SVMs are refit on every repetition's gallery.
    """
    kind = method_kind(method)
    splits = splits if splits is not None else make_splits(manifest, protocol)
    labels = manifest.labels()
    used = sorted({i for s in splits for i in s.gallery + s.probe})
    descs = extract_samples(manifest, used, kind, config, representation, cube_cache)
    n_bands = len(descs[used[0]])

    accuracies, band_acc = [], []
    for rep, split in enumerate(splits):
        try:
            if kind == "DSIFT":
                feats = encode_samples(descs, list(split.gallery + split.probe), list(split.gallery), config, rep)
            else:
                feats = {i: [d.ravel() for d in descs[i]] for i in split.gallery + split.probe}
            per_band = [np.stack([feats[g][b] for g in split.gallery]) for b in range(n_bands)]
            gal_labels = [labels[g] for g in split.gallery]
            ensemble = train_band_ensemble(per_band, gal_labels, config.svm, provenance={"method": method})
            correct = 0
            band_correct = np.zeros(n_bands)
            for p in split.probe:
                votes, margins = tally_votes(ensemble, feats[p])
                if fuse_votes(ensemble.classes, votes, margins) == labels[p]:
                    correct += 1
                for b in range(n_bands):
                    band_correct[b] += predict_band(ensemble, b, feats[p][b])[0] == labels[p]
        except Exception as exc:
            raise RuntimeError(f"{method} repetition {rep} failed: {exc}") from exc
        accuracies.append(correct / len(split.probe))
        band_acc.append(band_correct / len(split.probe))
        log.info("%s/%s repetition %d: accuracy %.4f", method, representation, rep, accuracies[-1])

    return ExperimentReport(
        method=method.lower(),
        representation=representation,
        accuracies=[float(a) for a in accuracies],
        per_band_accuracies=[float(a) for a in np.mean(band_acc, axis=0)],
        n_gallery=len(splits[0].gallery),
        n_probe=len(splits[0].probe),
        bands=n_bands,
        config=_config_snapshot(method, protocol, config, effective_preprocess(manifest, config, representation)),
    )


def compare_hsi_vs_rgb(
    manifest: DatasetManifest,
    method: str,
    protocol: ProtocolConfig = ProtocolConfig(),
    config: PipelineConfig = PipelineConfig(),
    cube_cache: dict | None = None,
) -> tuple[ExperimentReport, ExperimentReport]:
    """Same protocol and splits on all bands and on the RGB rendering."""
    splits = make_splits(manifest, protocol)
    hsi = run_experiment(manifest, method, protocol, config, "hsi", splits, cube_cache)
    rgb = run_experiment(manifest, method, protocol, config, "rgb", splits, cube_cache)
    return hsi, rgb


# ---------------------------------------------------------------------------
# reports


def render_table(reports: list[ExperimentReport], dataset: str = "dataset") -> str:
    """Text table: rows per representation, columns per method (accuracy in %)."""
    methods = []
    for r in reports:
        if r.method not in methods:
            methods.append(r.method)
    reps = []
    for r in reports:
        if r.representation not in reps:
            reps.append(r.representation)
    label = {"hsi": "All-Bands", "rgb": "RGB"}
    header = ["", *(m.upper() for m in methods)]
    rows = []
    for rep in reps:
        row = [f"{dataset}_{label.get(rep, rep)}"]
        for m in methods:
            match = [r for r in reports if r.method == m and r.representation == rep]
            row.append(f"{100 * match[0].mean_accuracy:.1f}" if match else "-")
        rows.append(row)
    widths = [max(len(str(r[i])) for r in [header, *rows]) for i in range(len(header))]
    fmt = lambda r: "| " + " | ".join(str(c).rjust(w) for c, w in zip(r, widths)) + " |"  # noqa: E731
    rule = "+" + "+".join("-" * (w + 2) for w in widths) + "+"
    return "\n".join([rule, fmt(header), rule, *map(fmt, rows), rule])


def load_reports(paths) -> list[ExperimentReport]:
    out = []
    for p in paths:
        d = json.loads(Path(p).read_text())
        if "all_bands" in d:
            out += [ExperimentReport.from_dict(d["all_bands"]), ExperimentReport.from_dict(d["rgb"])]
        else:
            out.append(ExperimentReport.from_dict(d))
    return out
