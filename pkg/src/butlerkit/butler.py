"""The five-stage hotel-butler demonstration scenario.

Builds a complete scenario script plus its stub kit: reception of a guest,
pointing out a free seat, reporting to the office, answering a waving guest
who wants a taxi, and carrying the guest's bag. The stub frames are
rendered synthetically and the two arm movements (``point_seat`` and
``take_bag``) are learned from seeded synthetic demonstrations, so the
whole scenario is a deterministic function of one seed.
"""

from __future__ import annotations

import numpy as np

from .frames import make_occupancy_masks, make_person_keypoints, render_object_scene
from .gmr import LearnConfig, learn_movement
from .manager import ScenarioScript, Stage, StubKit, Task, TaskAction
from .perception import CameraModel, DepthImage, PerceptionFrame, RobotPose2D
from .synth import synth_demo_set

BUTLER_MOVEMENTS = ("point_seat", "take_bag")

_WAYPOINTS = {
    "guest": RobotPose2D(1.2, 0.4, 0.0),
    "free_chair": RobotPose2D(2.0, -1.0, -0.8),
    "office": RobotPose2D(-2.5, 1.5, 2.4),
    "lobby": RobotPose2D(0.0, 0.0, 0.0),
    "bag": RobotPose2D(1.8, 1.1, 0.6),
    "home": RobotPose2D(0.0, 0.0, 1.6),
}


def _task(tid: str, name: str, duration: float, deps: tuple[str, ...] = (),
          kind: str = "noop", **args) -> Task:
    return Task(id=tid, name=name, estimated_duration=duration,
                deps=frozenset(deps), action=TaskAction(kind, args))


def build_butler_script() -> ScenarioScript:
    """The stage/task graph of the butler scenario."""
    reception = Stage("reception", (
        _task("await_guest", "Wait for a client to arrive", 2.0,
              kind="localize", frame="reception", label="person"),
        _task("detect_features", "Save the guest's physical features", 1.0,
              ("await_guest",), kind="record", key="guest/features",
              value={"gender": "female", "age": 31}),
        _task("greet_guest", "Welcome the guest", 1.5, ("await_guest",),
              kind="say", text="Welcome to the hotel, how can I help you?"),
        _task("take_reservation", "Listen to the reservation request", 2.0,
              ("greet_guest", "detect_features"), kind="listen"),
        _task("save_reservation", "Record the reservation", 0.5,
              ("take_reservation",), kind="record", key="guest/reservation",
              value=True),
    ))
    seat = Stage("seat", (
        _task("scan_chairs", "Look for an empty seat", 1.0,
              kind="check_chairs", frame="seat"),
        _task("approach_chair", "Move towards the free seat", 2.0,
              ("scan_chairs",), kind="navigate", waypoint="free_chair"),
        _task("point_seat", "Point the seat with the learned movement", 2.5,
              ("approach_chair",), kind="play_movement", movement="point_seat",
              speed=1.0),
        _task("offer_seat", "Propose the seat", 1.0, ("point_seat",),
              kind="say", text="Please, have a seat."),
        _task("offer_drink", "Listen to the drink request", 2.0,
              ("offer_seat",), kind="listen"),
        _task("record_drink", "Record the drink choice", 0.5,
              ("offer_drink",), kind="record", key="guest/drink",
              value="water"),
    ))
    dialog = Stage("dialog", (
        _task("goto_office", "Navigate to the receptionist's office", 3.0,
              kind="navigate", waypoint="office"),
        _task("report_guest", "Report the guest's features", 2.0,
              ("goto_office",), kind="say",
              text="A guest has arrived and is seated in the lobby."),
        _task("return_lobby", "Go back to the starting position", 3.0,
              ("report_guest",), kind="navigate", waypoint="lobby"),
    ))
    taxi = Stage("taxi", (
        _task("watch_for_waving", "Wait for someone to wave", 1.0,
              kind="watch_waving", frame="taxi"),
        _task("approach_guest", "Move towards the waving person", 2.0,
              ("watch_for_waving",), kind="navigate", waypoint="guest"),
        _task("offer_service", "Listen to the request", 1.5,
              ("approach_guest",), kind="listen"),
        _task("call_taxi", "Pretend to phone the taxi station", 2.0,
              ("offer_service",), kind="say", text="Calling a taxi for you now."),
        _task("confirm_taxi", "Relay the taxi's answer", 1.0, ("call_taxi",),
              kind="say", text="Your taxi will arrive in five minutes."),
    ))
    bag = Stage("bag", (
        _task("find_bag", "Detect the guest's bag", 1.0,
              kind="localize", frame="bag", label="bag"),
        _task("goto_bag", "Move in front of the bag", 2.0, ("find_bag",),
              kind="navigate", waypoint="bag"),
        _task("take_bag", "Grasp the bag with the learned movement", 3.0,
              ("goto_bag",), kind="play_movement", movement="take_bag",
              speed=1.0),
        _task("return_home", "Carry the bag to the start position", 3.0,
              ("take_bag",), kind="navigate", waypoint="home"),
        _task("farewell", "Close the scenario", 1.0, ("return_home",),
              kind="say", text="Thank you for visiting, see you soon."),
    ))
    return ScenarioScript("butler", (reception, seat, dialog, taxi, bag))


def _reception_frame(rng: np.random.Generator, camera: CameraModel) -> PerceptionFrame:
    scene = render_object_scene(int(rng.integers(2**31)), n_objects=2,
                                camera=camera, labels=("person", "table"))
    # Guarantee one person detection regardless of the random label draw.
    frame = scene.frame
    if not any(d.class_label == "person" for d in frame.detections):
        relabeled = list(frame.detections)
        first = relabeled[0]
        relabeled[0] = type(first)(
            "person", first.bbox, first.mask, first.confidence)
        frame = PerceptionFrame(frame.camera, frame.pose, frame.depth,
                                tuple(relabeled), frame.persons)
    return frame


def _seat_frame(camera: CameraModel) -> PerceptionFrame:
    chairs, persons = make_occupancy_masks(camera, taken=[True, False, True])
    depth = np.zeros((camera.height, camera.width), dtype=np.float32)
    for det in chairs + persons:
        depth[det.mask] = 2.0
    return PerceptionFrame(camera, RobotPose2D(0.0, 0.0, 0.0),
                           DepthImage(depth), tuple(chairs + persons))


def _taxi_frame(rng: np.random.Generator, camera: CameraModel) -> PerceptionFrame:
    person = make_person_keypoints(True, camera, rng)
    depth = np.zeros((camera.height, camera.width), dtype=np.float32)
    return PerceptionFrame(camera, RobotPose2D(0.5, 0.0, 0.1),
                           DepthImage(depth), (), (person,))


def _bag_frame(rng: np.random.Generator, camera: CameraModel) -> PerceptionFrame:
    scene = render_object_scene(int(rng.integers(2**31)), n_objects=2,
                                camera=camera, labels=("bag", "table"))
    frame = scene.frame
    if not any(d.class_label == "bag" for d in frame.detections):
        relabeled = list(frame.detections)
        first = relabeled[0]
        relabeled[0] = type(first)("bag", first.bbox, first.mask,
                                   first.confidence)
        frame = PerceptionFrame(frame.camera, frame.pose, frame.depth,
                                tuple(relabeled), frame.persons)
    return frame


def build_butler_stubs(seed: int = 0) -> StubKit:
    """Scripted dialogue, waypoints, frames, and learned arm movements."""
    rng = np.random.default_rng(seed)
    camera = CameraModel(160, 120)
    kit = StubKit()
    kit.dialogue = {
        "reception": ["I have a reservation for tonight."],
        "seat": ["A glass of water, please."],
        "taxi": ["Could you call me a taxi?"],
    }
    kit.nav = dict(_WAYPOINTS)
    kit.frames = {
        "reception": _reception_frame(rng, camera),
        "seat": _seat_frame(camera),
        "taxi": _taxi_frame(rng, camera),
        "bag": _bag_frame(rng, camera),
    }
    config = LearnConfig(k_range=(1, 6), seed=seed)
    for i, name in enumerate(BUTLER_MOVEMENTS):
        demos = synth_demo_set(
            name, count=2, seed=seed + 101 * (i + 1), joints=5, duration=3.0,
            n_samples=120, noise_sigma=0.02, time_jitter=0.1, pad_idle=0.3,
            family="sine" if i == 0 else "quintic")
        kit.movements.add(learn_movement(demos, name, config))
    return kit


def build_butler_scenario(seed: int = 0) -> tuple[ScenarioScript, StubKit]:
    """Script and stubs for the full five-stage scenario."""
    return build_butler_script(), build_butler_stubs(seed)
