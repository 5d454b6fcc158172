"""Gaussian mixture regression over time and learned-movement playback.

Conditioning the joint (time, joints) mixture on a time value gives the
expected joint posture at that instant; sweeping time reproduces the
generalized movement. Learned movements persist as versioned JSON files and
a load reproduces playback bit-for-bit.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from . import gmm
from .errors import FormatError
from .gmm import GmmModel
from .trajectories import (
    AlignedDemoSet,
    DEFAULT_MIN_ACTIVE_SAMPLES,
    DEFAULT_VELOCITY_THRESHOLD,
    Demonstration,
    Source,
    align_to_reference,
    trim_idle,
)

MOVEMENT_FORMAT_VERSION = "1"
DEFAULT_RATE_HZ = 20.0

# Components whose time variance collapsed below this keep a tiny floor so
# the conditional stays finite.
MIN_TIME_VARIANCE = 1e-12


def gmr_regress(model: GmmModel, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Condition the mixture on time ``t``.

    Splitting each component into time/joint blocks (mu_t, mu_q, s_tt, s_qt,
    s_qq), the component responsibilities are

        h_k(t) = pi_k N(t; mu_t_k, s_tt_k) / sum_j pi_j N(t; mu_t_j, s_tt_j)

    and the regression blends the per-component conditional Gaussians:

        mean = sum_k h_k (mu_q_k + s_qt_k (t - mu_t_k) / s_tt_k)
        cov  = sum_k h_k (S_k + m_k m_k^T) - mean mean^T,
               S_k = s_qq_k - s_qt_k s_qt_k^T / s_tt_k

    Responsibilities are computed in the log domain, so any finite ``t`` is
    valid, including values outside the trained span.
    """
    if not math.isfinite(t):
        raise ValueError("t must be finite")
    mu_t = model.means[:, 0]
    mu_q = model.means[:, 1:]
    s_tt = np.maximum(model.covariances[:, 0, 0], MIN_TIME_VARIANCE)
    s_qt = model.covariances[:, 1:, 0]
    s_qq = model.covariances[:, 1:, 1:]

    log_h = (np.log(model.priors)
             - 0.5 * (np.log(2.0 * np.pi * s_tt) + (t - mu_t) ** 2 / s_tt))
    log_h = log_h - logsumexp(log_h)
    h = np.exp(log_h)

    cond_means = mu_q + s_qt * ((t - mu_t) / s_tt)[:, None]
    q_mean = h @ cond_means

    cond_covs = s_qq - np.einsum("kd,ke->kde", s_qt, s_qt) / s_tt[:, None, None]
    second = np.einsum("k,kde->de",
                       h, cond_covs + np.einsum("kd,ke->kde", cond_means, cond_means))
    q_cov = second - np.outer(q_mean, q_mean)
    q_cov = 0.5 * (q_cov + q_cov.T)
    return q_mean, q_cov


@dataclass(frozen=True)
class LearnedMovement:
    """A named, persisted movement: mixture model plus playback metadata."""

    name: str
    model: GmmModel
    duration: float
    dim: int
    default_rate: float = DEFAULT_RATE_HZ

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("movement name must be non-empty")
        if self.duration <= 0.0:
            raise ValueError("duration must be positive")
        if self.dim != self.model.dim - 1:
            raise ValueError("dim must equal the model dimension minus time")
        if self.default_rate <= 0.0:
            raise ValueError("default_rate must be positive")


@dataclass(frozen=True)
class LearnConfig:
    """Parameters of the learning pipeline, with desk-scale defaults."""

    velocity_threshold: float = DEFAULT_VELOCITY_THRESHOLD
    min_active_samples: int = DEFAULT_MIN_ACTIVE_SAMPLES
    k_range: tuple[int, int] = gmm.DEFAULT_K_RANGE
    restarts: int = gmm.DEFAULT_RESTARTS
    cov_regularization: float = gmm.DEFAULT_COV_REGULARIZATION
    em_tol: float = gmm.DEFAULT_EM_TOL
    em_max_iter: int = gmm.DEFAULT_EM_MAX_ITER
    kmeans_max_iter: int = gmm.DEFAULT_KMEANS_MAX_ITER
    seed: int = 0
    default_rate: float = DEFAULT_RATE_HZ


@dataclass(frozen=True)
class LearnResult:
    """A learned movement together with fit diagnostics."""

    movement: LearnedMovement
    bic_table: dict[int, float | None]
    aligned: AlignedDemoSet


def learn_movement_detailed(
    demos: Sequence[Demonstration],
    name: str,
    config: LearnConfig | None = None,
) -> LearnResult:
    """Full pipeline: trim each demo, align on the first, pool the samples,
    pick the mixture by BIC, and wrap the result for playback."""
    if not demos:
        raise ValueError("need at least one demonstration")
    cfg = config or LearnConfig()
    trimmed = [trim_idle(d, cfg.velocity_threshold, cfg.min_active_samples)
               for d in demos]
    aligned = align_to_reference(trimmed)
    points = gmm.pool_aligned_points(aligned.demos)
    k_max = min(cfg.k_range[1], points.shape[0] - 1)
    model, table = gmm.select_model(
        points,
        k_range=(cfg.k_range[0], k_max),
        seed=cfg.seed,
        restarts=cfg.restarts,
        cov_regularization=cfg.cov_regularization,
        tol=cfg.em_tol,
        max_iter=cfg.em_max_iter,
        kmeans_max_iter=cfg.kmeans_max_iter,
    )
    movement = LearnedMovement(
        name=name,
        model=model,
        duration=aligned.reference.duration,
        dim=aligned.dim,
        default_rate=cfg.default_rate,
    )
    return LearnResult(movement, table, aligned)


def learn_movement(
    demos: Sequence[Demonstration],
    name: str,
    config: LearnConfig | None = None,
) -> LearnedMovement:
    return learn_movement_detailed(demos, name, config).movement


def generate_trajectory(
    movement: LearnedMovement,
    speed_factor: float = 1.0,
    rate: float | None = None,
) -> Demonstration:
    """Sample the regression mean on an endpoint-inclusive uniform grid.

    Model time sweeps [0, duration]; samples are emitted at model time
    divided by ``speed_factor``, so the output lasts duration/speed_factor
    seconds and ``rate`` counts emitted samples per second.
    """
    if speed_factor <= 0.0:
        raise ValueError("speed_factor must be positive")
    rate = movement.default_rate if rate is None else rate
    if rate <= 0.0:
        raise ValueError("rate must be positive")
    out_duration = movement.duration / speed_factor
    n = max(int(round(out_duration * rate)) + 1, 2)
    model_times = np.linspace(0.0, movement.duration, n)
    joints = np.stack([gmr_regress(movement.model, t)[0] for t in model_times])
    return Demonstration(movement.name, model_times / speed_factor, joints,
                         Source.SYNTHETIC)


# ---------------------------------------------------------------------------
# Movement files.

def movement_to_dict(movement: LearnedMovement) -> dict:
    return {
        "format_version": MOVEMENT_FORMAT_VERSION,
        "name": movement.name,
        "dim": movement.dim,
        "duration_s": float(movement.duration),
        "default_rate_hz": float(movement.default_rate),
        "model": gmm.model_to_dict(movement.model),
    }


def movement_from_dict(data: dict) -> LearnedMovement:
    if not isinstance(data, dict):
        raise FormatError("movement payload must be a JSON object")
    for fld in ("format_version", "name", "dim", "duration_s",
                "default_rate_hz", "model"):
        if fld not in data:
            raise FormatError(f"movement payload missing field {fld!r}")
    version = data["format_version"]
    if str(version) != MOVEMENT_FORMAT_VERSION:
        raise FormatError(f"unsupported movement format version {version!r}; "
                          f"this reader supports {MOVEMENT_FORMAT_VERSION!r}")
    model = gmm.model_from_dict(data["model"])
    try:
        return LearnedMovement(
            name=str(data["name"]),
            model=model,
            duration=float(data["duration_s"]),
            dim=int(data["dim"]),
            default_rate=float(data["default_rate_hz"]),
        )
    except (TypeError, ValueError) as exc:
        raise FormatError(f"invalid movement payload: {exc}") from exc


def save_movement(movement: LearnedMovement, path: str | Path) -> None:
    Path(path).write_text(json.dumps(movement_to_dict(movement), indent=2) + "\n",
                          encoding="utf-8")


def load_movement(path: str | Path) -> LearnedMovement:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON: {exc}") from exc
    return movement_from_dict(data)


class MovementStore:
    """Name-keyed registry of learned movements.

    Reads take no lock (lookups are atomic on a private dict); writes are
    serialized by a mutex, so readers never observe a half-applied update.
    """

    def __init__(self) -> None:
        self._movements: dict[str, LearnedMovement] = {}
        self._lock = threading.Lock()

    def add(self, movement: LearnedMovement, overwrite: bool = False) -> None:
        with self._lock:
            if movement.name in self._movements and not overwrite:
                raise ValueError(f"movement {movement.name!r} already stored")
            self._movements[movement.name] = movement

    def get(self, name: str) -> LearnedMovement:
        return self._movements[name]

    def __contains__(self, name: str) -> bool:
        return name in self._movements

    def names(self) -> list[str]:
        return sorted(self._movements)

    def load_dir(self, directory: str | Path, pattern: str = "*.movement.json") -> int:
        """Load every movement file in a directory; returns how many."""
        count = 0
        for path in sorted(Path(directory).glob(pattern)):
            self.add(load_movement(path), overwrite=True)
            count += 1
        return count
