"""Diagonal-covariance GMM (EM), Fisher-vector encoding and L2 normalisation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

_LOG_2PI = np.log(2.0 * np.pi)


class SingularFitError(RuntimeError):
    """EM cannot place separate components on the data (e.g. all points equal)."""


@dataclass(frozen=True)
class EmConfig:
    k: int = 100
    max_iters: int = 100
    rel_tol: float = 1e-4
    variance_floor: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be > 0")
        if self.variance_floor <= 0:
            raise ValueError("variance_floor must be > 0")


@dataclass(eq=False)
class GmmModel:
    weights: np.ndarray  # (K,)
    means: np.ndarray  # (K, D)
    variances: np.ndarray  # (K, D)
    variance_floor: float = 1e-4
    history: list = field(default_factory=list, repr=False)

    @property
    def k(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def log_joint(self, x: np.ndarray, x2: np.ndarray | None = None) -> np.ndarray:
        """log w_k + log N(x_n | mu_k, var_k), shape (N, K)."""
        x = np.asarray(x, dtype=np.float64)
        if x2 is None:
            x2 = x * x
        inv = 1.0 / self.variances
        maha = x2 @ inv.T - 2.0 * x @ (self.means * inv).T + np.sum(self.means**2 * inv, axis=1)
        log_norm = -0.5 * (self.dim * _LOG_2PI + np.sum(np.log(self.variances), axis=1))
        with np.errstate(divide="ignore"):
            log_w = np.log(self.weights)
        return log_w + log_norm - 0.5 * maha

    def posteriors(self, x: np.ndarray) -> np.ndarray:
        return _e_step(self.log_joint(x))[1]

    def mean_log_likelihood(self, x: np.ndarray) -> float:
        return float(np.mean(_e_step(self.log_joint(x))[0]))

    def save(self, path) -> None:
        path = Path(path)
        path.write_text(
            f"k: {self.k}\ndim: {self.dim}\nfloor: {self.variance_floor!r}\n"
            f"dtype: float32le\npayload: {path.name}.raw\n"
        )
        payload = np.concatenate([self.weights, self.means.ravel(), self.variances.ravel()])
        path.with_name(path.name + ".raw").write_bytes(payload.astype("<f4").tobytes())

    @classmethod
    def load(cls, path) -> "GmmModel":
        from .cube_io import read_header

        path = Path(path)
        hdr = read_header(path)
        k, dim = int(hdr["k"]), int(hdr["dim"])
        raw = path.with_name(hdr.get("payload", path.name + ".raw")).read_bytes()
        vals = np.frombuffer(raw, dtype="<f4").astype(np.float64)
        if vals.size != k + 2 * k * dim:
            raise ValueError(f"{path}: payload size does not match k={k}, dim={dim}")
        weights = vals[:k] / np.sum(vals[:k])
        means = vals[k : k + k * dim].reshape(k, dim)
        floor = float(hdr.get("floor", 1e-4))
        variances = np.maximum(vals[k + k * dim :].reshape(k, dim), floor)
        return cls(weights, means, variances, floor)


def _e_step(lj):
    """Per-row log-normaliser and posteriors from log joint densities (in place)."""
    top = lj.max(axis=1, keepdims=True)
    lj -= top
    np.exp(lj, out=lj)
    total = lj.sum(axis=1, keepdims=True)
    lj /= total
    return np.log(total) + top, lj


def _kmeans_pp(x, k, rng):
    n = x.shape[0]
    centres = np.empty((k, x.shape[1]))
    first = rng.integers(n)
    centres[0] = x[first]
    d2 = np.sum((x - centres[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = rng.choice(n, p=d2 / total)
        else:
            idx = rng.integers(n)
        centres[j] = x[idx]
        d2 = np.minimum(d2, np.sum((x - centres[j]) ** 2, axis=1))
    return centres


def _hard_init(x, centres, floor):
    """One hard-assignment moment estimate around the k-means++ centres."""
    k = centres.shape[0]
    d2 = np.sum(x * x, axis=1)[:, None] - 2.0 * x @ centres.T + np.sum(centres**2, axis=1)
    assign = np.argmin(d2, axis=1)
    counts = np.bincount(assign, minlength=k).astype(np.float64)
    global_var = np.maximum(x.var(axis=0), floor)
    means = centres.copy()
    variances = np.tile(global_var, (k, 1))
    for j in np.flatnonzero(counts):
        pts = x[assign == j]
        means[j] = pts.mean(axis=0)
        if counts[j] > 1:
            variances[j] = np.maximum(pts.var(axis=0), floor)
    weights = np.maximum(counts, 1.0)
    return weights / weights.sum(), means, variances


def fit_gmm(descriptors: np.ndarray, config: EmConfig = EmConfig()) -> GmmModel:
    """Fit a K-component diagonal GMM by EM.

    Starts from k-means++ centres (seeded by ``config.seed``) refined by one
    hard-assignment moment estimate, then alternates E/M steps until the mean
    log-likelihood improves by less than ``rel_tol`` (relative) or
    ``max_iters`` is reached. ``model.history`` holds the mean log-likelihood
    evaluated before every M-step.
    """
    x = np.asarray(descriptors, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("descriptors must be an (N, D) array")
    n, _ = x.shape
    k, floor = config.k, config.variance_floor
    if n < k:
        raise ValueError(f"need at least k={k} descriptors, got {n}")
    if not np.all(np.isfinite(x)):
        raise ValueError("descriptors contain NaN or Inf")
    if k > 1 and np.all(x == x[0]):
        raise SingularFitError("all descriptors are identical; components cannot separate")

    rng = np.random.default_rng(config.seed)
    weights, means, variances = _hard_init(x, _kmeans_pp(x, k, rng), floor)
    model = GmmModel(weights, means, variances, floor)
    x2 = x * x
    history = []
    for it in range(config.max_iters):
        norm, gamma = _e_step(model.log_joint(x, x2))
        ll = float(np.mean(norm))
        history.append(ll)
        if it > 0 and ll - history[-2] < config.rel_tol * abs(history[-2]):
            break
        nk = gamma.sum(axis=0)
        live = nk > 1e-10 * n
        s1 = gamma.T @ x
        s2 = gamma.T @ x2
        new_w = np.where(live, nk / n, 0.0)
        new_means = model.means.copy()
        new_vars = model.variances.copy()
        new_means[live] = s1[live] / nk[live, None]
        new_vars[live] = np.maximum(s2[live] / nk[live, None] - new_means[live] ** 2, floor)
        model = GmmModel(new_w / new_w.sum(), new_means, new_vars, floor)
    else:
        history.append(float(np.mean(_e_step(model.log_joint(x, x2))[0])))
    log.debug("EM finished after %d evaluations, mean log-lik %.6f", len(history), history[-1])
    model.history = history
    return model


def fisher_encode(descriptors: np.ndarray, gmm: GmmModel) -> np.ndarray:
    """Unnormalised Fisher vector (mean block then variance block), length 2*K*D.

    Components with zero weight contribute zeros.
    """
    x = np.asarray(descriptors, dtype=np.float64)
    if x.size == 0:
        if x.ndim == 2 and x.shape[1] not in (0, gmm.dim):
            raise ValueError(f"descriptor dim {x.shape[1]} != gmm dim {gmm.dim}")
        return np.zeros(2 * gmm.k * gmm.dim)
    x = np.atleast_2d(x)
    if x.ndim != 2 or x.shape[1] != gmm.dim:
        raise ValueError(f"descriptor dim {x.shape[-1]} != gmm dim {gmm.dim}")
    n = x.shape[0]
    gamma = gmm.posteriors(x)
    s0 = gamma.sum(axis=0)[:, None]
    s1 = gamma.T @ x
    s2 = gamma.T @ (x * x)
    mu, var = gmm.means, gmm.variances
    sigma = np.sqrt(var)
    w = gmm.weights[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        g_mu = (s1 - s0 * mu) / (sigma * n * np.sqrt(w))
        g_var = ((s2 - 2.0 * mu * s1 + s0 * mu * mu) / var - s0) / (n * np.sqrt(2.0 * w))
    dead = (w[:, 0] <= 0)
    g_mu[dead] = 0.0
    g_var[dead] = 0.0
    return np.concatenate([g_mu.ravel(), g_var.ravel()])


def l2_normalize(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot normalise a vector with NaN or Inf")
    norm = np.linalg.norm(v)
    return v / norm if norm > 0 else v.copy()


def power_normalize(v: np.ndarray) -> np.ndarray:
    """Signed square root."""
    v = np.asarray(v, dtype=np.float64)
    return np.sign(v) * np.sqrt(np.abs(v))


def encode(descriptors: np.ndarray, gmm: GmmModel, power: bool = False) -> np.ndarray:
    """Fisher vector followed by optional power and mandatory L2 normalisation."""
    fv = fisher_encode(descriptors, gmm)
    if power:
        fv = power_normalize(fv)
    return l2_normalize(fv)
