"""Perception-frame interchange files and synthetic scene rendering.

Frames travel as JSON: depth as base64 little-endian float32, masks as
row-major run-length counts alternating false/true runs (first count is the
leading false run, possibly zero). The synthetic renderer emits the same
format and carries ground-truth annotations, which makes it the oracle for
the localization pipeline.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import FormatError
from .perception import (
    CameraModel,
    DetectionMask,
    DepthImage,
    PerceptionFrame,
    PersonKeypoints,
    RobotPose2D,
    pixel_bearing,
    project_to_world,
)

FRAME_LABELS = ("chair", "bag", "table", "person", "bottle", "cup")


def rle_encode(mask: np.ndarray) -> list[int]:
    """Row-major run lengths, alternating false/true and starting with the
    (possibly zero) false run."""
    flat = np.asarray(mask, dtype=bool).ravel()
    if flat.size == 0:
        return []
    boundaries = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    runs = np.diff(np.concatenate(([0], boundaries, [flat.size])))
    counts = runs.tolist()
    if flat[0]:
        counts = [0] + counts
    return [int(c) for c in counts]


def rle_decode(counts: Sequence[int], shape: tuple[int, int]) -> np.ndarray:
    """Invert :func:`rle_encode` back into a (H, W) boolean bitmap."""
    counts = [int(c) for c in counts]
    if any(c < 0 for c in counts):
        raise FormatError("run lengths must be non-negative")
    total = sum(counts)
    if total != shape[0] * shape[1]:
        raise FormatError(f"run lengths sum to {total}, expected "
                          f"{shape[0] * shape[1]}")
    values = np.arange(len(counts)) % 2 == 1
    return np.repeat(values, counts).reshape(shape)


def _encode_depth(depth: DepthImage) -> dict:
    data = depth.depth.astype("<f4").tobytes()
    return {
        "width": depth.width,
        "height": depth.height,
        "data_b64_f32le": base64.b64encode(data).decode("ascii"),
    }


def _decode_depth(payload: dict) -> DepthImage:
    for fld in ("width", "height", "data_b64_f32le"):
        if fld not in payload:
            raise FormatError(f"depth payload missing field {fld!r}")
    w, h = int(payload["width"]), int(payload["height"])
    try:
        raw = base64.b64decode(payload["data_b64_f32le"], validate=True)
    except (ValueError, TypeError) as exc:
        raise FormatError(f"depth data is not valid base64: {exc}") from exc
    if len(raw) != 4 * w * h:
        raise FormatError(f"depth data holds {len(raw)} bytes, expected {4 * w * h}")
    arr = np.frombuffer(raw, dtype="<f4").reshape(h, w)
    return DepthImage(arr)


def frame_to_dict(frame: PerceptionFrame) -> dict:
    return {
        "camera": {"width": frame.camera.width, "height": frame.camera.height,
                   "hfov": float(frame.camera.hfov)},
        "pose": {"x": float(frame.pose.x), "y": float(frame.pose.y),
                 "theta": float(frame.pose.theta)},
        "depth": _encode_depth(frame.depth),
        "detections": [
            {
                "label": det.class_label,
                "bbox": list(det.bbox),
                "mask_rle": rle_encode(det.mask),
                "confidence": float(det.confidence),
            }
            for det in frame.detections
        ],
        "persons": [
            {"keypoints": {name: [u, v, c]
                           for name, (u, v, c) in person.points.items()}}
            for person in frame.persons
        ],
    }


def frame_from_dict(data: dict) -> PerceptionFrame:
    if not isinstance(data, dict):
        raise FormatError("frame payload must be a JSON object")
    for fld in ("camera", "pose", "depth", "detections", "persons"):
        if fld not in data:
            raise FormatError(f"frame payload missing field {fld!r}")
    try:
        cam = data["camera"]
        camera = CameraModel(int(cam["width"]), int(cam["height"]),
                             float(cam["hfov"]))
        pose = RobotPose2D(float(data["pose"]["x"]), float(data["pose"]["y"]),
                           float(data["pose"]["theta"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"invalid camera/pose payload: {exc}") from exc
    depth = _decode_depth(data["depth"])
    shape = (camera.height, camera.width)
    detections = []
    for det in data["detections"]:
        try:
            mask = rle_decode(det["mask_rle"], shape)
            detections.append(DetectionMask(
                class_label=str(det["label"]),
                bbox=tuple(int(v) for v in det["bbox"]),
                mask=mask,
                confidence=float(det["confidence"]),
            ))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"invalid detection payload: {exc}") from exc
    persons = []
    for person in data["persons"]:
        try:
            points = {str(name): (float(p[0]), float(p[1]), float(p[2]))
                      for name, p in person["keypoints"].items()}
            persons.append(PersonKeypoints(points))
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise FormatError(f"invalid person payload: {exc}") from exc
    return PerceptionFrame(camera, pose, depth, tuple(detections), tuple(persons))


def save_frame(frame: PerceptionFrame, path: str | Path) -> None:
    Path(path).write_text(json.dumps(frame_to_dict(frame), indent=2) + "\n",
                          encoding="utf-8")


def load_frame(path: str | Path) -> PerceptionFrame:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON: {exc}") from exc
    return frame_from_dict(data)


# ---------------------------------------------------------------------------
# Synthetic scenes.

@dataclass(frozen=True)
class SyntheticScene:
    """A rendered frame plus the ground truth it was rendered from."""

    frame: PerceptionFrame
    truth: dict


def random_pose(rng: np.random.Generator) -> RobotPose2D:
    return RobotPose2D(
        x=float(rng.uniform(-3.0, 3.0)),
        y=float(rng.uniform(-3.0, 3.0)),
        theta=float(rng.uniform(-np.pi, np.pi)),
    )


def render_object_scene(
    seed: int,
    n_objects: int = 3,
    camera: CameraModel | None = None,
    pose: RobotPose2D | None = None,
    labels: Sequence[str] = FRAME_LABELS,
) -> SyntheticScene:
    """Place objects at known world positions and render a noise-free frame.

    Every object gets a rectangular mask, symmetric about an integer
    center column so its centroid is exact, with uniform depth equal to the
    object range (quantized to float32 like the wire format). The truth
    annotations are computed through the same projection, which makes the
    scene an exact oracle for the localization pipeline.
    """
    rng = np.random.default_rng(seed)
    camera = camera or CameraModel(160, 120)
    pose = pose or random_pose(rng)
    w, h = camera.width, camera.height
    slot = w // n_objects
    if slot < 12:
        raise ValueError("too many objects for the image width")
    depth = np.zeros((h, w), dtype=np.float32)
    detections = []
    truth_objects = []
    for i in range(n_objects):
        half_width = int(rng.integers(2, min(6, slot // 2 - 2) + 1))
        u0 = int(rng.integers(i * slot + half_width + 1,
                              (i + 1) * slot - half_width - 1))
        r0 = int(rng.integers(h // 6, h // 2))
        r1 = int(rng.integers(r0 + 6, min(r0 + 24, h - 1) + 1))
        distance = float(np.float32(rng.uniform(0.6, 3.5)))
        mask = np.zeros((h, w), dtype=bool)
        mask[r0:r1, u0 - half_width:u0 + half_width + 1] = True
        depth[mask] = distance
        label = str(labels[int(rng.integers(len(labels)))])
        detections.append(DetectionMask.from_mask(
            label, mask, confidence=float(rng.uniform(0.5, 1.0))))
        bearing = pixel_bearing(camera, u0)
        x, y = project_to_world(pose, bearing, distance)
        truth_objects.append({"label": label, "x": x, "y": y,
                              "distance": distance})
    frame = PerceptionFrame(camera, pose, DepthImage(depth), tuple(detections))
    return SyntheticScene(frame, {"objects": truth_objects})


def make_person_keypoints(
    waving: bool,
    camera: CameraModel,
    rng: np.random.Generator,
    confidence: float = 0.9,
) -> PersonKeypoints:
    """Arm keypoints for one person; the right arm is raised when waving."""
    w, h = camera.width, camera.height
    cx = float(rng.uniform(0.3, 0.7)) * w
    shoulder_v = float(rng.uniform(0.35, 0.5)) * h
    points = {}
    for side, sign in (("l", -1.0), ("r", 1.0)):
        su = cx + sign * 0.08 * w
        ev = shoulder_v + 0.12 * h
        wv_down = shoulder_v + 0.25 * h
        points[f"shoulder_{side}"] = (su, shoulder_v, confidence)
        points[f"elbow_{side}"] = (su + sign * 0.03 * w, ev, confidence)
        if waving and side == "r":
            points[f"wrist_{side}"] = (su + sign * 0.05 * w,
                                       shoulder_v - 0.15 * h, confidence)
        else:
            points[f"wrist_{side}"] = (su + sign * 0.05 * w, wv_down, confidence)
    return PersonKeypoints(points)


def make_occupancy_masks(
    camera: CameraModel,
    taken: Sequence[bool],
    overlap_fraction: float = 0.6,
) -> tuple[list[DetectionMask], list[DetectionMask]]:
    """Chair masks in a row plus person masks covering the taken chairs.

    ``overlap_fraction`` of each taken chair's pixels is covered by its
    person, well above the default occupancy threshold.
    """
    w, h = camera.width, camera.height
    n = len(taken)
    slot = w // max(n, 1)
    chair_w = max(slot - 6, 4)
    chair_h = max(h // 4, 6)
    top = h // 2
    chairs = []
    persons = []
    for i, is_taken in enumerate(taken):
        c0 = i * slot + 3
        chair = np.zeros((h, w), dtype=bool)
        chair[top:top + chair_h, c0:c0 + chair_w] = True
        chairs.append(DetectionMask.from_mask("chair", chair, 0.95))
        if is_taken:
            covered_rows = max(int(round(chair_h * overlap_fraction)), 1)
            person = np.zeros((h, w), dtype=bool)
            person[top - chair_h:top + covered_rows, c0:c0 + chair_w] = True
            persons.append(DetectionMask.from_mask("person", person, 0.9))
    return chairs, persons
