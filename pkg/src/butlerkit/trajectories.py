"""Joint-space trajectory types and demonstration preprocessing.

A demonstration is a labelled, time-stamped joint-angle recording. Before a
movement can be learned, each demonstration is trimmed (leading and trailing
idle removed) and the whole set is aligned onto the first demonstration's
time base. Every operation here is pure: inputs are never mutated and the
backing arrays of all returned objects are read-only.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .errors import EmptyAfterTrim, MixedDimensions, MixedLabels, OutOfRange

# Idle detection: a sample is idle when its max-over-joints speed falls below
# this threshold, far under human kinesthetic motion speeds.
DEFAULT_VELOCITY_THRESHOLD = 0.01  # rad/s
DEFAULT_MIN_ACTIVE_SAMPLES = 10

SIDECAR_NAME = "demoset.json"


class Source(Enum):
    """Where a demonstration came from."""

    RECORDED = "recorded"
    SYNTHETIC = "synthetic"


class TimedSample(NamedTuple):
    t: float
    q: np.ndarray


def _readonly(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Demonstration:
    """A labelled joint trajectory sampled at strictly increasing times.

    ``times`` has shape (N,) in seconds, ``joints`` shape (N, D) in radians.
    A 1-D ``joints`` argument is treated as a single-joint trajectory.
    """

    label: str
    times: np.ndarray
    joints: np.ndarray
    source: Source = Source.RECORDED

    def __post_init__(self) -> None:
        if not self.label:
            raise ValueError("demonstration label must be non-empty")
        times = np.asarray(self.times, dtype=float)
        joints = np.asarray(self.joints, dtype=float)
        if joints.ndim == 1:
            joints = joints[:, None]
        if times.ndim != 1 or joints.ndim != 2:
            raise ValueError("times must be (N,), joints (N, D)")
        if times.size < 2:
            raise ValueError("a demonstration needs at least 2 samples")
        if joints.shape != (times.size, joints.shape[1]) or joints.shape[1] < 1:
            raise ValueError("joints must have one row per sample and D >= 1")
        if not np.all(np.isfinite(times)) or not np.all(np.isfinite(joints)):
            raise ValueError("timestamps and joint angles must be finite")
        if times[0] < 0.0:
            raise ValueError("timestamps must be non-negative")
        if not np.all(np.diff(times) > 0.0):
            raise ValueError("timestamps must be strictly increasing")
        object.__setattr__(self, "times", _readonly(times))
        object.__setattr__(self, "joints", _readonly(joints))

    @property
    def dim(self) -> int:
        return self.joints.shape[1]

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    def __len__(self) -> int:
        return self.times.size

    def sample(self, i: int) -> TimedSample:
        return TimedSample(float(self.times[i]), self.joints[i])

    def __iter__(self) -> Iterator[TimedSample]:
        for i in range(len(self)):
            yield self.sample(i)


@dataclass(frozen=True)
class AlignedDemoSet:
    """Demonstrations resampled onto the first demonstration's timestamps."""

    label: str
    demos: tuple[Demonstration, ...]
    reference_index: int = 0
    sample_count: int = 0

    def __post_init__(self) -> None:
        if not self.demos:
            raise ValueError("an aligned set needs at least one demonstration")
        if self.reference_index != 0:
            raise ValueError("the reference is always the first demonstration")
        ref = self.demos[0]
        object.__setattr__(self, "demos", tuple(self.demos))
        object.__setattr__(self, "sample_count", len(ref))
        for demo in self.demos:
            if demo.label != self.label:
                raise MixedLabels(f"label {demo.label!r} != {self.label!r}")
            if demo.dim != ref.dim:
                raise MixedDimensions(f"dimension {demo.dim} != {ref.dim}")
            if not np.array_equal(demo.times, ref.times):
                raise ValueError("aligned demonstrations must share timestamps")

    @property
    def reference(self) -> Demonstration:
        return self.demos[self.reference_index]

    @property
    def dim(self) -> int:
        return self.reference.dim


def joint_speeds(demo: Demonstration) -> np.ndarray:
    """Max-over-joints absolute speed per sample, central differences inside,
    one-sided at the ends. Shape (N,), rad/s."""
    t, q = demo.times, demo.joints
    v = np.empty_like(q)
    v[0] = (q[1] - q[0]) / (t[1] - t[0])
    v[-1] = (q[-1] - q[-2]) / (t[-1] - t[-2])
    if len(t) > 2:
        v[1:-1] = (q[2:] - q[:-2]) / (t[2:] - t[:-2])[:, None]
    return np.abs(v).max(axis=1)


def trim_idle(
    demo: Demonstration,
    velocity_threshold: float = DEFAULT_VELOCITY_THRESHOLD,
    min_active_samples: int = DEFAULT_MIN_ACTIVE_SAMPLES,
) -> Demonstration:
    """Remove the leading and trailing stretches where no joint moves.

    Keeps the contiguous block from the first to the last sample whose speed
    reaches ``velocity_threshold``, re-based so the block starts at t = 0.
    Raises :class:`EmptyAfterTrim` when fewer than ``min_active_samples``
    samples (or fewer than 2) would remain.
    """
    if velocity_threshold <= 0.0:
        raise ValueError("velocity_threshold must be positive")
    active = joint_speeds(demo) >= velocity_threshold
    indices = np.flatnonzero(active)
    if indices.size == 0:
        raise EmptyAfterTrim(f"{demo.label!r}: no sample moves faster than "
                             f"{velocity_threshold} rad/s")
    first, last = int(indices[0]), int(indices[-1])
    kept = last - first + 1
    if kept < max(min_active_samples, 2):
        raise EmptyAfterTrim(f"{demo.label!r}: only {kept} active samples, "
                             f"need {min_active_samples}")
    return Demonstration(
        label=demo.label,
        times=demo.times[first:last + 1] - demo.times[first],
        joints=demo.joints[first:last + 1],
        source=demo.source,
    )


def resample(demo: Demonstration, target_times: Sequence[float]) -> Demonstration:
    """Linearly interpolate every joint at ``target_times``.

    Target times must be strictly increasing and lie within the
    demonstration's time span; times that hit a source timestamp exactly
    reproduce that sample bit-for-bit.
    """
    targets = np.asarray(target_times, dtype=float)
    if targets.ndim != 1 or targets.size == 0:
        raise ValueError("target_times must be a non-empty 1-D sequence")
    if targets.size > 1 and not np.all(np.diff(targets) > 0.0):
        raise ValueError("target_times must be strictly increasing")
    t = demo.times
    if targets[0] < t[0] or targets[-1] > t[-1]:
        raise OutOfRange(f"targets [{targets[0]}, {targets[-1]}] outside "
                         f"demo span [{t[0]}, {t[-1]}]")
    out = np.column_stack([np.interp(targets, t, col) for col in demo.joints.T])
    # np.interp is not guaranteed exact on knots; copy exact hits verbatim.
    j = np.searchsorted(t, targets)
    j = np.minimum(j, t.size - 1)
    hit = t[j] == targets
    out[hit] = demo.joints[j[hit]]
    return Demonstration(demo.label, targets, out, demo.source)


def align_to_reference(demos: Sequence[Demonstration]) -> AlignedDemoSet:
    """Align a set of (already trimmed) demonstrations on the first one.

    The first demonstration is the reference and passes through unchanged.
    Every other demonstration is linearly rescaled in time so its duration
    matches the reference's, then resampled at the reference's timestamps.
    """
    if not demos:
        raise ValueError("need at least one demonstration")
    ref = demos[0]
    for demo in demos[1:]:
        if demo.label != ref.label:
            raise MixedLabels(f"{demo.label!r} != {ref.label!r}")
        if demo.dim != ref.dim:
            raise MixedDimensions(f"dimension {demo.dim} != {ref.dim}")
    aligned = [ref]
    ref_start = float(ref.times[0])
    ref_span = ref.duration
    for demo in demos[1:]:
        scaled = ref_start + (demo.times - demo.times[0]) * (ref_span / demo.duration)
        # Pin the endpoints so rounding can never push the span short.
        scaled = scaled.copy()
        scaled[0] = ref_start
        scaled[-1] = ref_start + ref_span
        rescaled = Demonstration(demo.label, scaled, demo.joints, demo.source)
        aligned.append(resample(rescaled, ref.times))
    return AlignedDemoSet(label=ref.label, demos=tuple(aligned))


# ---------------------------------------------------------------------------
# Demonstration files: CSV with header t,q0,...,q{D-1}; the label rides in
# the file name as <label>__<index>.csv and a JSON sidecar describes the set.

def save_demo_csv(demo: Demonstration, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"q{j}" for j in range(demo.dim)])
        for i in range(len(demo)):
            row = [repr(float(demo.times[i]))]
            row += [repr(float(v)) for v in demo.joints[i]]
            writer.writerow(row)


def label_from_filename(path: str | Path) -> str:
    stem = Path(path).stem
    return stem.rsplit("__", 1)[0] if "__" in stem else stem


def load_demo_csv(path: str | Path, source: Source = Source.RECORDED) -> Demonstration:
    path = Path(path)
    with path.open("r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "t" or len(header) < 2:
            raise ValueError(f"{path}: expected header t,q0,...")
        rows = [[float(cell) for cell in row] for row in reader if row]
    data = np.asarray(rows, dtype=float)
    return Demonstration(label_from_filename(path), data[:, 0], data[:, 1:], source)


def save_demo_set(demos: Sequence[Demonstration], directory: str | Path) -> list[Path]:
    """Write one CSV per demonstration plus the JSON sidecar."""
    if not demos:
        raise ValueError("no demonstrations to save")
    label = demos[0].label
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, demo in enumerate(demos):
        if demo.label != label:
            raise MixedLabels(f"{demo.label!r} != {label!r}")
        path = directory / f"{label}__{i}.csv"
        save_demo_csv(demo, path)
        paths.append(path)
    sidecar = {
        "label": label,
        "dim": demos[0].dim,
        "source": demos[0].source.value,
    }
    (directory / SIDECAR_NAME).write_text(
        json.dumps(sidecar, indent=2) + "\n", encoding="utf-8")
    return paths


def load_demo_dir(directory: str | Path) -> list[Demonstration]:
    """Load every demonstration CSV in a movement directory, index order."""
    directory = Path(directory)
    source = Source.RECORDED
    sidecar = directory / SIDECAR_NAME
    if sidecar.is_file():
        meta = json.loads(sidecar.read_text(encoding="utf-8"))
        source = Source(meta.get("source", "recorded"))

    def index_of(p: Path) -> tuple:
        stem = p.stem
        if "__" in stem:
            tail = stem.rsplit("__", 1)[1]
            if tail.isdigit():
                return (0, int(tail), stem)
        return (1, 0, stem)

    paths = sorted(directory.glob("*.csv"), key=index_of)
    return [load_demo_csv(p, source) for p in paths]
