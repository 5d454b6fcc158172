"""Gaussian mixture fitting over pooled (time, joints) data points.

One movement is modelled by a single full-covariance mixture over vectors
x = (t, q0, ..., q{D-1}). Means are initialized with K-means (k-means++
seeding), refined with EM, and the number of components is chosen by the
Bayesian Information Criterion. All likelihood work happens in the log
domain so a few thousand points cannot underflow.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from .errors import DegenerateComponent, FormatError, TooFewDistinctPoints

GMM_FORMAT_VERSION = "1"

DEFAULT_COV_REGULARIZATION = 1e-6
DEFAULT_EM_TOL = 1e-8            # relative log-likelihood change
DEFAULT_EM_MAX_ITER = 200
DEFAULT_KMEANS_MAX_ITER = 100
DEFAULT_K_RANGE = (1, 8)
DEFAULT_RESTARTS = 3

_LOG_TWO_PI = math.log(2.0 * math.pi)


def _readonly(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.flags.writeable = False
    return arr


def _cholesky_all(covariances: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor per component; raises DegenerateComponent."""
    try:
        return np.linalg.cholesky(covariances)
    except np.linalg.LinAlgError as exc:
        raise DegenerateComponent(
            "covariance is not positive definite after regularization") from exc


@dataclass(frozen=True)
class GmmModel:
    """K weighted Gaussians over R^d with full covariances.

    ``priors`` (K,), ``means`` (K, d), ``covariances`` (K, d, d). Weights
    must be positive and sum to one; every covariance must be symmetric
    positive definite (checked via Cholesky at construction).
    """

    priors: np.ndarray
    means: np.ndarray
    covariances: np.ndarray

    def __post_init__(self) -> None:
        priors = np.asarray(self.priors, dtype=float)
        means = np.asarray(self.means, dtype=float)
        covs = np.asarray(self.covariances, dtype=float)
        if priors.ndim != 1 or priors.size < 1:
            raise ValueError("priors must be a non-empty vector")
        k = priors.size
        if means.ndim != 2 or means.shape[0] != k or means.shape[1] < 1:
            raise ValueError("means must have shape (K, d)")
        d = means.shape[1]
        if covs.shape != (k, d, d):
            raise ValueError("covariances must have shape (K, d, d)")
        if not (np.all(np.isfinite(priors)) and np.all(np.isfinite(means))
                and np.all(np.isfinite(covs))):
            raise ValueError("model parameters must be finite")
        if np.any(priors <= 0.0) or abs(priors.sum() - 1.0) > 1e-12:
            raise ValueError("priors must be positive and sum to 1")
        if not np.allclose(covs, np.swapaxes(covs, 1, 2), rtol=0.0, atol=1e-12):
            raise ValueError("covariances must be symmetric")
        _cholesky_all(covs)
        object.__setattr__(self, "priors", _readonly(priors))
        object.__setattr__(self, "means", _readonly(means))
        object.__setattr__(self, "covariances", _readonly(covs))

    @property
    def k(self) -> int:
        return self.priors.size

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def weighted_log_densities(self, points: np.ndarray) -> np.ndarray:
        """log(pi_k * N(x; mu_k, Sigma_k)) for every point, shape (N, K)."""
        x = np.atleast_2d(np.asarray(points, dtype=float))
        chols = _cholesky_all(self.covariances)
        out = np.empty((x.shape[0], self.k))
        for k in range(self.k):
            out[:, k] = _log_gaussian(x, self.means[k], chols[k])
        return out + np.log(self.priors)

    def log_likelihood(self, points: np.ndarray) -> float:
        """Total log-likelihood of ``points`` under the mixture."""
        return float(logsumexp(self.weighted_log_densities(points), axis=1).sum())


@dataclass(frozen=True)
class FitReport:
    """Diagnostics from one EM run.

    ``log_likelihood_trace`` holds the total log-likelihood before the first
    update and after each M-step; EM guarantees it never decreases (checked
    here to relative 1e-9).
    """

    log_likelihood_trace: tuple[float, ...]
    iterations: int
    converged: bool
    seed: int

    def __post_init__(self) -> None:
        trace = np.asarray(self.log_likelihood_trace)
        drops = np.diff(trace) < -1e-9 * np.abs(trace[:-1])
        if np.any(drops):
            raise ValueError("log-likelihood trace decreased during EM")


def _log_gaussian(x: np.ndarray, mean: np.ndarray, chol: np.ndarray) -> np.ndarray:
    """Log density of N(mean, L L^T) at rows of x, via the Cholesky factor."""
    dev = x - mean
    y = solve_triangular(chol, dev.T, lower=True)
    maha = np.einsum("ij,ij->j", y, y)
    log_det = 2.0 * np.log(np.diagonal(chol)).sum()
    return -0.5 * (x.shape[1] * _LOG_TWO_PI + log_det + maha)


def _squared_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _kmeanspp_seed(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: iteratively sample centers proportional to the
    squared distance to the nearest already-chosen center."""
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = ((points - points[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        idx = int(rng.choice(n, p=d2 / total))
        chosen.append(idx)
        d2 = np.minimum(d2, ((points - points[idx]) ** 2).sum(axis=1))
    return points[chosen].copy()


def _assign_with_refill(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Nearest-centroid assignment; empty clusters are re-seeded (in index
    order) to the point currently farthest from its own centroid, so every
    returned cluster is non-empty."""
    n, k = points.shape[0], centroids.shape[0]
    d2 = _squared_distances(points, centroids)
    assign = d2.argmin(axis=1)
    while True:
        counts = np.bincount(assign, minlength=k)
        empty = np.flatnonzero(counts == 0)
        if empty.size == 0:
            return assign
        own = d2[np.arange(n), assign]
        farthest = int(own.argmax())
        centroids[empty[0]] = points[farthest]
        d2[:, empty[0]] = ((points - points[farthest]) ** 2).sum(axis=1)
        assign = d2.argmin(axis=1)


def kmeans_init(
    points: np.ndarray,
    k: int,
    seed: int,
    max_iter: int = DEFAULT_KMEANS_MAX_ITER,
) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd's algorithm with k-means++ seeding, deterministic given seed.

    Returns (centroids (K, d), assignments (N,)); every centroid keeps at
    least one assigned point. Raises :class:`TooFewDistinctPoints` when the
    data holds fewer than K distinct points.
    """
    x = np.atleast_2d(np.asarray(points, dtype=float))
    if k < 1:
        raise ValueError("K must be at least 1")
    if np.unique(x, axis=0).shape[0] < k:
        raise TooFewDistinctPoints(f"need {k} distinct points, have fewer")
    rng = np.random.default_rng(seed)
    centroids = _kmeanspp_seed(x, k, rng)
    assign = _assign_with_refill(x, centroids)
    for _ in range(max_iter):
        centroids = np.stack([x[assign == j].mean(axis=0) for j in range(k)])
        new_assign = _assign_with_refill(x, centroids)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
    return centroids, assign


def _init_parameters(
    x: np.ndarray, k: int, init: tuple[np.ndarray, np.ndarray], reg: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Priors/means/covariances from cluster proportions, centroids, and
    within-cluster covariances (plus the diagonal regularizer)."""
    centroids, assign = init
    n, d = x.shape
    priors = np.bincount(assign, minlength=k).astype(float) / n
    means = np.asarray(centroids, dtype=float).copy()
    covs = np.empty((k, d, d))
    eye = np.eye(d)
    for j in range(k):
        members = x[assign == j]
        dev = members - members.mean(axis=0)
        covs[j] = dev.T @ dev / members.shape[0] + reg * eye
    return priors, means, covs


def em_fit(
    points: np.ndarray,
    k: int,
    init: tuple[np.ndarray, np.ndarray],
    cov_regularization: float = DEFAULT_COV_REGULARIZATION,
    tol: float = DEFAULT_EM_TOL,
    max_iter: int = DEFAULT_EM_MAX_ITER,
    seed: int = 0,
) -> tuple[GmmModel, FitReport]:
    """Full-covariance EM from a K-means initialization.

    Every M-step covariance gets ``cov_regularization`` added to its
    diagonal. Stops when the relative log-likelihood change drops below
    ``tol`` or after ``max_iter`` updates. ``seed`` is recorded in the
    report only (EM itself is deterministic given the initialization).
    """
    x = np.atleast_2d(np.asarray(points, dtype=float))
    n, d = x.shape
    if n <= k:
        raise ValueError("need more points than components")
    if cov_regularization < 0:
        raise ValueError("cov_regularization must be non-negative")
    priors, means, covs = _init_parameters(x, k, init, cov_regularization)
    eye = np.eye(d)

    def weighted_log_dens() -> np.ndarray:
        chols = _cholesky_all(covs)
        out = np.empty((n, k))
        for j in range(k):
            out[:, j] = _log_gaussian(x, means[j], chols[j])
        return out + np.log(priors)

    log_dens = weighted_log_dens()
    per_point = logsumexp(log_dens, axis=1)
    trace = [float(per_point.sum())]
    converged = False
    iterations = 0
    for it in range(1, max_iter + 1):
        resp = np.exp(log_dens - per_point[:, None])
        weight = resp.sum(axis=0)
        if not np.all(np.isfinite(weight)) or np.any(weight <= 0.0):
            raise DegenerateComponent("a component lost all responsibility")
        priors = weight / n
        priors = priors / priors.sum()
        means = (resp.T @ x) / weight[:, None]
        for j in range(k):
            dev = x - means[j]
            cov = (resp[:, j, None] * dev).T @ dev / weight[j]
            cov += cov_regularization * eye
            covs[j] = 0.5 * (cov + cov.T)
        log_dens = weighted_log_dens()
        per_point = logsumexp(log_dens, axis=1)
        trace.append(float(per_point.sum()))
        iterations = it
        if abs(trace[-1] - trace[-2]) <= tol * abs(trace[-2]):
            converged = True
            break
    model = GmmModel(priors, means, covs)
    report = FitReport(tuple(trace), iterations, converged, seed)
    return model, report


def bic_score(model: GmmModel, points: np.ndarray) -> float:
    """Bayesian Information Criterion, -2 ln L + p ln N; lower is better.

    Free parameters: K-1 weights, K*d mean entries, and K*d*(d+1)/2
    covariance entries.
    """
    x = np.atleast_2d(np.asarray(points, dtype=float))
    n = x.shape[0]
    if n < 1:
        raise ValueError("need at least one point")
    p = free_parameter_count(model.k, model.dim)
    return -2.0 * model.log_likelihood(x) + p * math.log(n)


def free_parameter_count(k: int, d: int) -> int:
    return (k - 1) + k * d + k * d * (d + 1) // 2


def select_model(
    points: np.ndarray,
    k_range: tuple[int, int] = DEFAULT_K_RANGE,
    seed: int = 0,
    restarts: int = DEFAULT_RESTARTS,
    cov_regularization: float = DEFAULT_COV_REGULARIZATION,
    tol: float = DEFAULT_EM_TOL,
    max_iter: int = DEFAULT_EM_MAX_ITER,
    kmeans_max_iter: int = DEFAULT_KMEANS_MAX_ITER,
) -> tuple[GmmModel, dict[int, float | None]]:
    """Fit every K in ``k_range`` and keep the model with the lowest BIC.

    Each (K, restart) candidate runs K-means + EM on its own RNG stream
    derived as seed XOR K XOR restart index; within a K the restart with
    the best final log-likelihood wins, and BIC ties across K go to the
    smaller K. Returns the winning model and the per-K BIC table (None for
    Ks where every restart failed). Fit errors propagate only when every
    candidate fails.
    """
    x = np.atleast_2d(np.asarray(points, dtype=float))
    k_min, k_max = int(k_range[0]), int(k_range[1])
    if k_min < 1 or k_min > k_max:
        raise ValueError("K range must satisfy 1 <= k_min <= k_max")
    if k_max >= x.shape[0]:
        raise ValueError("largest K must be smaller than the point count")
    if restarts < 1:
        raise ValueError("restarts must be at least 1")
    table: dict[int, float | None] = {}
    best_model: GmmModel | None = None
    best_bic = math.inf
    last_error: Exception | None = None
    for k in range(k_min, k_max + 1):
        k_best: GmmModel | None = None
        k_best_ll = -math.inf
        for r in range(restarts):
            sub_seed = seed ^ k ^ r
            try:
                init = kmeans_init(x, k, sub_seed, kmeans_max_iter)
                model, report = em_fit(
                    x, k, init, cov_regularization, tol, max_iter, seed=sub_seed)
            except (TooFewDistinctPoints, DegenerateComponent) as exc:
                last_error = exc
                continue
            ll = report.log_likelihood_trace[-1]
            if ll > k_best_ll:
                k_best, k_best_ll = model, ll
        if k_best is None:
            table[k] = None
            continue
        bic = bic_score(k_best, x)
        table[k] = bic
        if bic < best_bic:
            best_model, best_bic = k_best, bic
    if best_model is None:
        assert last_error is not None
        raise last_error
    return best_model, table


# ---------------------------------------------------------------------------
# JSON serialization. Floats go through Python's shortest round-trip repr,
# so load(save(m)) reproduces every parameter bit-for-bit.

def model_to_dict(model: GmmModel) -> dict:
    return {
        "format_version": GMM_FORMAT_VERSION,
        "k": model.k,
        "dim": model.dim,
        "priors": [float(v) for v in model.priors],
        "means": [[float(v) for v in row] for row in model.means],
        "covariances": [[float(v) for v in cov.ravel()] for cov in model.covariances],
    }


def model_from_dict(data: dict) -> GmmModel:
    if not isinstance(data, dict):
        raise FormatError("model payload must be a JSON object")
    for field in ("format_version", "k", "dim", "priors", "means", "covariances"):
        if field not in data:
            raise FormatError(f"model payload missing field {field!r}")
    version = data["format_version"]
    if str(version) != GMM_FORMAT_VERSION:
        raise FormatError(f"unsupported model format version {version!r}; "
                          f"this reader supports {GMM_FORMAT_VERSION!r}")
    try:
        k, d = int(data["k"]), int(data["dim"])
        priors = np.asarray(data["priors"], dtype=float)
        means = np.asarray(data["means"], dtype=float)
        covs = np.asarray(data["covariances"], dtype=float).reshape(k, d, d)
        if priors.shape != (k,) or means.shape != (k, d):
            raise ValueError("shape mismatch")
        return GmmModel(priors, means, covs)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"invalid model payload: {exc}") from exc


def save_model(model: GmmModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=2) + "\n",
                          encoding="utf-8")


def load_model(path: str | Path) -> GmmModel:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON: {exc}") from exc
    return model_from_dict(data)


def pool_aligned_points(demos: Sequence) -> np.ndarray:
    """Stack aligned demonstrations into (time, joints) rows, one per sample."""
    blocks = [np.column_stack([demo.times, demo.joints]) for demo in demos]
    return np.vstack(blocks)
