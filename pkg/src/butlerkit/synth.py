"""Synthetic demonstration generator, a stand-in for kinesthetic recording."""

from __future__ import annotations

import numpy as np

from .trajectories import Demonstration, Source

WAVEFORM_FAMILIES = ("sine", "quintic")


def waveform(family: str, s: np.ndarray, amplitude: float, cycles: float,
             phase: float) -> np.ndarray:
    """Evaluate a waveform on normalized time s in [0, 1]."""
    if family == "sine":
        return amplitude * np.sin(2.0 * np.pi * cycles * s + phase)
    if family == "quintic":
        # Minimum-jerk style point-to-point ramp; phase offsets the target.
        return (amplitude + phase) * (10 * s**3 - 15 * s**4 + 6 * s**5)
    raise ValueError(f"unknown waveform family {family!r}; "
                     f"choose one of {WAVEFORM_FAMILIES}")


def synth_demo(
    label: str,
    family: str = "sine",
    joints: int = 5,
    duration: float = 4.0,
    n_samples: int = 200,
    amplitude: float = 1.0,
    cycles: float = 2.0,
    noise_sigma: float = 0.0,
    pad_idle: float = 0.0,
    rng: np.random.Generator | None = None,
    duration_scale: float = 1.0,
) -> Demonstration:
    """Build one synthetic demonstration.

    Each joint follows the same waveform family with a per-joint phase
    offset. ``noise_sigma`` adds i.i.d. Gaussian noise per sample and joint;
    ``pad_idle`` prepends and appends that many seconds of rest so trimming
    has something to do; ``duration_scale`` stretches the whole recording,
    mimicking demonstrations performed at different speeds.
    """
    if joints < 1 or n_samples < 2 or duration <= 0 or duration_scale <= 0:
        raise ValueError("invalid synthetic demo parameters")
    if noise_sigma < 0 or pad_idle < 0:
        raise ValueError("noise_sigma and pad_idle must be non-negative")
    if noise_sigma > 0 and rng is None:
        raise ValueError("noise requires an RNG")
    total = duration * duration_scale
    t = np.linspace(0.0, total, n_samples)
    s = t / total
    q = np.column_stack(
        [waveform(family, s, amplitude, cycles, 0.4 * j) for j in range(joints)])
    if noise_sigma > 0:
        q = q + rng.normal(0.0, noise_sigma, size=q.shape)
    if pad_idle > 0:
        dt = total / (n_samples - 1)
        n_pad = max(int(round(pad_idle / dt)), 1)
        lead = np.arange(n_pad) * dt
        tail = t[-1] + n_pad * dt + np.arange(1, n_pad + 1) * dt
        t = np.concatenate([lead, t + n_pad * dt, tail])
        q = np.concatenate([np.tile(q[0], (n_pad, 1)), q,
                            np.tile(q[-1], (n_pad, 1))])
    return Demonstration(label, t, q, Source.SYNTHETIC)


def synth_demo_set(
    label: str,
    count: int,
    seed: int,
    family: str = "sine",
    joints: int = 5,
    duration: float = 4.0,
    n_samples: int = 200,
    amplitude: float = 1.0,
    cycles: float = 2.0,
    noise_sigma: float = 0.0,
    time_jitter: float = 0.0,
    pad_idle: float = 0.0,
) -> list[Demonstration]:
    """Generate ``count`` demonstrations of the same movement.

    ``time_jitter`` scales each demonstration's duration by a factor drawn
    uniformly from [1 - time_jitter, 1 + time_jitter]; with jitter and noise
    both zero, every demonstration is identical. Deterministic given seed.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    if not 0.0 <= time_jitter < 1.0:
        raise ValueError("time_jitter must be in [0, 1)")
    rng = np.random.default_rng(seed)
    demos = []
    for _ in range(count):
        scale = 1.0
        if time_jitter > 0:
            scale = 1.0 + time_jitter * rng.uniform(-1.0, 1.0)
        demos.append(synth_demo(
            label, family=family, joints=joints, duration=duration,
            n_samples=n_samples, amplitude=amplitude, cycles=cycles,
            noise_sigma=noise_sigma, pad_idle=pad_idle,
            rng=rng if noise_sigma > 0 else None, duration_scale=scale))
    return demos
