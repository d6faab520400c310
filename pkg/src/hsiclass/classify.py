"""Per-band one-vs-all linear SVMs and majority-vote fusion across bands."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class SvmTrainConfig:
    c: float = 10.0
    tol: float = 1e-3
    max_epochs: int = 1000
    shuffle_seed: int = 0

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError("C must be > 0")
        if self.tol <= 0:
            raise ValueError("tol must be > 0")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")


@dataclass(eq=False)
class LinearSvm:
    weights: np.ndarray
    bias: float
    class_id: int = 1
    # solver diagnostics, not persisted
    alpha: np.ndarray | None = field(default=None, repr=False)
    epochs: int = 0
    converged: bool = True

    def decision(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) @ self.weights + self.bias


def _augment(x):
    return np.hstack([x, np.ones((x.shape[0], 1))])


def augmented_gram(features: np.ndarray) -> np.ndarray:
    """Gram matrix of the features with a constant-1 column appended."""
    x = np.asarray(features, dtype=np.float64)
    return x @ x.T + 1.0


def train_svm(
    features: np.ndarray,
    labels: np.ndarray,
    config: SvmTrainConfig = SvmTrainConfig(),
    class_id: int = 1,
    gram: np.ndarray | None = None,
) -> LinearSvm:
    """L1-loss linear SVM by dual coordinate descent.

    The bias is learned as the weight of an appended constant-1 feature, so the
    objective actually minimised is ``0.5 * (|w|^2 + b^2) + C * sum(hinge)``.
    Stops once the largest projected-gradient violation in an epoch drops
    below ``tol``.

    Coordinate updates work on the dual through the (augmented) Gram matrix,
    which is far cheaper than touching ``w`` when N is much smaller than D.
    Pass ``gram`` to share it between the one-vs-all problems of a band.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64).ravel()
    if x.ndim != 2 or x.shape[0] != y.size:
        raise ValueError("features must be (N, D) with one label per row")
    if not np.all(np.isfinite(x)):
        raise ValueError("features contain NaN or Inf")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be -1 or +1")
    if np.all(y == 1) or np.all(y == -1):
        raise ValueError("both classes must be present")

    n = x.shape[0]
    kmat = augmented_gram(x) if gram is None else np.asarray(gram, dtype=np.float64)
    if kmat.shape != (n, n):
        raise ValueError("gram matrix does not match the number of samples")
    # signed kernel: yk[i, j] = y_i y_j K_ij, so grad_i = (yk @ alpha)_i - 1
    yk = kmat * np.outer(y, y)
    qdiag = np.diag(yk).copy()
    c = config.c
    alpha = np.zeros(n)
    margin = np.zeros(n)  # yk @ alpha
    rng = np.random.default_rng(config.shuffle_seed)
    converged = False
    epoch = 0
    for epoch in range(1, config.max_epochs + 1):
        max_viol = 0.0
        for i in rng.permutation(n):
            g = margin[i] - 1.0
            a = alpha[i]
            if a <= 0.0:
                pg = min(g, 0.0)
            elif a >= c:
                pg = max(g, 0.0)
            else:
                pg = g
            max_viol = max(max_viol, abs(pg))
            if pg != 0.0:
                new = min(max(a - g / qdiag[i], 0.0), c)
                margin += (new - a) * yk[:, i]
                alpha[i] = new
        if max_viol < config.tol:
            converged = True
            break
    coef = alpha * y
    w = coef @ x
    return LinearSvm(w, float(coef.sum()), class_id, alpha, epoch, converged)


def primal_objective(svm: LinearSvm, features, labels, c: float) -> float:
    """Objective of the augmented problem (bias regularised like a weight)."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    hinge = np.maximum(0.0, 1.0 - y * svm.decision(x))
    return 0.5 * (svm.weights @ svm.weights + svm.bias**2) + c * hinge.sum()


def dual_objective(alpha, features, labels) -> float:
    xa = _augment(np.asarray(features, dtype=np.float64))
    v = (np.asarray(alpha) * np.asarray(labels, dtype=np.float64)) @ xa
    return float(np.sum(alpha) - 0.5 * v @ v)


# ---------------------------------------------------------------------------
# band ensemble


@dataclass(eq=False)
class BandEnsemble:
    classes: list[int]
    per_band: list[list[LinearSvm]]
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        for b, svms in enumerate(self.per_band):
            if [s.class_id for s in svms] != list(self.classes):
                raise ValueError(f"band {b} does not hold one SVM per class in order")
        self._w = np.stack([np.stack([s.weights for s in svms]) for svms in self.per_band])
        self._b = np.array([[s.bias for s in svms] for svms in self.per_band])

    @property
    def bands(self) -> int:
        return len(self.per_band)

    @property
    def dim(self) -> int:
        return self._w.shape[2]

    def scores(self, band: int, feature: np.ndarray) -> np.ndarray:
        """Decision value of every class's SVM on ``feature``."""
        if not 0 <= band < self.bands:
            raise IndexError(f"band {band} out of range for {self.bands} bands")
        feature = np.asarray(feature, dtype=np.float64).ravel()
        if feature.size != self.dim:
            raise ValueError(f"feature dim {feature.size} != model dim {self.dim}")
        return self._w[band] @ feature + self._b[band]

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        meta = {
            "classes": list(self.classes),
            "bands": self.bands,
            "dim": self.dim,
            "dtype": "float32le",
            "provenance": self.provenance,
            "svms": [],
        }
        for b, svms in enumerate(self.per_band):
            for svm in svms:
                name = f"svm_b{b:03d}_c{svm.class_id}.raw"
                payload = np.append(svm.weights, svm.bias).astype("<f4")
                (directory / name).write_bytes(payload.tobytes())
                meta["svms"].append({"band": b, "class": svm.class_id, "file": name})
        (directory / "ensemble.json").write_text(json.dumps(meta, indent=2) + "\n")

    @classmethod
    def load(cls, directory) -> "BandEnsemble":
        directory = Path(directory)
        meta = json.loads((directory / "ensemble.json").read_text())
        per_band = [[None] * len(meta["classes"]) for _ in range(meta["bands"])]
        col = {c: i for i, c in enumerate(meta["classes"])}
        for entry in meta["svms"]:
            v = np.frombuffer((directory / entry["file"]).read_bytes(), dtype="<f4").astype(np.float64)
            if v.size != meta["dim"] + 1:
                raise ValueError(f"{entry['file']}: expected {meta['dim'] + 1} values")
            per_band[entry["band"]][col[entry["class"]]] = LinearSvm(v[:-1], float(v[-1]), entry["class"])
        return cls(meta["classes"], per_band, meta.get("provenance", {}))


def train_band_ensemble(per_band_features, labels, config: SvmTrainConfig = SvmTrainConfig(), classes=None, provenance=None) -> BandEnsemble:
    """Train one one-vs-all SVM per class for every band.

    ``per_band_features`` is a sequence of (N, D) arrays, one per band.
    ``classes`` defaults to the sorted distinct labels.
    """
    labels = np.asarray(labels)
    classes = sorted(set(labels.tolist())) if classes is None else list(classes)
    present = set(labels.tolist())
    missing = [c for c in classes if c not in present]
    if missing:
        raise ValueError(f"classes without training samples: {missing}")
    if len(classes) < 2:
        raise ValueError("one-vs-all training needs at least two classes")
    per_band = []
    for feats in per_band_features:
        feats = np.asarray(feats, dtype=np.float64)
        if feats.shape[0] != labels.size:
            raise ValueError("every band must have one feature row per label")
        gram = augmented_gram(feats)
        per_band.append([
            train_svm(feats, np.where(labels == c, 1.0, -1.0), config, c, gram) for c in classes
        ])
    if not per_band:
        raise ValueError("no bands to train on")
    return BandEnsemble(classes, per_band, provenance or {})


def predict_band(ensemble: BandEnsemble, band: int, feature) -> tuple[int, float]:
    """Class with the largest decision value; ties go to the lower class index."""
    s = ensemble.scores(band, feature)
    i = int(np.argmax(s))
    return ensemble.classes[i], float(s[i])


def tally_votes(ensemble: BandEnsemble, per_band_features):
    """Per-class vote counts and summed winning margins across bands."""
    if len(per_band_features) == 0:
        raise ValueError("majority vote needs at least one band")
    if len(per_band_features) != ensemble.bands:
        raise ValueError(f"got {len(per_band_features)} band features for {ensemble.bands} bands")
    col = {c: i for i, c in enumerate(ensemble.classes)}
    votes = np.zeros(len(ensemble.classes), dtype=np.int64)
    margins = np.zeros(len(ensemble.classes))
    for b, feat in enumerate(per_band_features):
        cls, margin = predict_band(ensemble, b, feat)
        votes[col[cls]] += 1
        margins[col[cls]] += margin
    return votes, margins


def fuse_votes(classes, votes, margins) -> int:
    """Most votes, then larger summed margin, then lower class index."""
    best = None
    for i in range(len(classes)):
        key = (votes[i], margins[i])
        if best is None or key > best[0]:
            best = (key, i)
    return classes[best[1]]


def majority_vote(ensemble: BandEnsemble, per_band_features) -> int:
    votes, margins = tally_votes(ensemble, per_band_features)
    return fuse_votes(ensemble.classes, votes, margins)
