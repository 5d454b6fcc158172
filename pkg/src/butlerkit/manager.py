"""Rule-based task manager.

A scenario is an ordered list of stages, each a small task graph. Within a
stage the engine repeatedly picks the shortest ready job (priority classes
first, then estimated duration, then id) and runs its bound action against
scripted stubs. Module outputs land on a blackboard and every step is
appended to a deterministic event log. Time is simulated: finishing a task
advances the clock by its estimated duration.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

from .errors import FormatError, StubMissing, TaskActionFailed
from .frames import frame_from_dict, frame_to_dict
from .gmr import (
    LearnedMovement,
    MovementStore,
    generate_trajectory,
    movement_from_dict,
    movement_to_dict,
)
from .perception import (
    ChairStatus,
    PerceptionFrame,
    RobotPose2D,
    chair_occupancy,
    frame_waving,
    localize_objects,
)

SCENARIO_FORMAT_VERSION = "1"

EVENT_KINDS = ("task_started", "task_finished", "stage_entered", "feedback",
               "blackboard_write", "error")

ACTION_KINDS = ("noop", "say", "listen", "navigate", "record", "check_chairs",
                "watch_waving", "localize", "play_movement")

EYES_SIGNAL = "eyes_color_changed"


@dataclass(frozen=True)
class TaskAction:
    """Binding of a task to a module operation or stub call."""

    kind: str
    args: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in ACTION_KINDS:
            raise ValueError(f"unknown action kind {self.kind!r}; "
                             f"expected one of {ACTION_KINDS}")
        object.__setattr__(self, "args", dict(self.args))


@dataclass(frozen=True)
class Task:
    """One schedulable job: id, estimate, priority class, and dependencies."""

    id: str
    name: str
    estimated_duration: float
    priority_class: int = 0
    deps: frozenset[str] = frozenset()
    action: TaskAction = TaskAction("noop")

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("task id must be non-empty")
        if self.estimated_duration < 0.0:
            raise ValueError("estimated_duration must be non-negative")
        object.__setattr__(self, "deps", frozenset(self.deps))


@dataclass(frozen=True)
class Stage:
    """A named task graph; all of it completes before the next stage starts."""

    name: str
    tasks: tuple[Task, ...]

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("stage name must be non-empty")
        object.__setattr__(self, "tasks", tuple(self.tasks))


@dataclass(frozen=True)
class ScenarioScript:
    """Ordered stages whose dependencies reference the same or earlier stages."""

    name: str
    stages: tuple[Stage, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "stages", tuple(self.stages))
        seen: set[str] = set()
        for stage in self.stages:
            ids = {t.id for t in stage.tasks}
            if len(ids) != len(stage.tasks):
                raise ValueError(f"duplicate task ids in stage {stage.name!r}")
            if ids & seen:
                raise ValueError(f"task ids reused across stages: {ids & seen}")
            available = seen | ids
            for task in stage.tasks:
                missing = task.deps - available
                if missing:
                    raise ValueError(
                        f"task {task.id!r} depends on unknown/later tasks {missing}")
            _check_acyclic(stage, seen)
            seen |= ids

    def all_tasks(self) -> list[Task]:
        return [t for stage in self.stages for t in stage.tasks]


def _check_acyclic(stage: Stage, earlier: set[str]) -> None:
    """Kahn's algorithm over the in-stage dependency edges."""
    indeg = {t.id: len(t.deps - earlier) for t in stage.tasks}
    dependents: dict[str, list[str]] = {t.id: [] for t in stage.tasks}
    for task in stage.tasks:
        for dep in task.deps:
            if dep in dependents:
                dependents[dep].append(task.id)
    queue = [tid for tid, deg in indeg.items() if deg == 0]
    done = 0
    while queue:
        tid = queue.pop()
        done += 1
        for nxt in dependents[tid]:
            indeg[nxt] -= 1
            if indeg[nxt] == 0:
                queue.append(nxt)
    if done != len(stage.tasks):
        raise ValueError(f"dependency cycle in stage {stage.name!r}")


@dataclass(frozen=True)
class Event:
    """One event-log entry; ``tick`` is simulated seconds since scenario start."""

    tick: float
    kind: str
    payload: Mapping[str, Any]

    def __post_init__(self) -> None:
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")
        object.__setattr__(self, "payload", dict(self.payload))


class EventLog:
    """Append-only ordered event record with a canonical JSON-lines form."""

    def __init__(self) -> None:
        self._events: list[Event] = []

    def append(self, event: Event) -> None:
        if self._events and event.tick < self._events[-1].tick:
            raise ValueError("event ticks must be non-decreasing")
        self._events.append(event)

    @property
    def events(self) -> tuple[Event, ...]:
        return tuple(self._events)

    def __len__(self) -> int:
        return len(self._events)

    def of_kind(self, kind: str) -> list[Event]:
        return [e for e in self._events if e.kind == kind]

    def to_jsonl(self) -> str:
        lines = [
            json.dumps({"tick": e.tick, "kind": e.kind, "payload": e.payload},
                       sort_keys=True, separators=(",", ":"))
            for e in self._events
        ]
        return "\n".join(lines) + ("\n" if lines else "")

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")


class Blackboard:
    """Latest-wins keyed store of module outputs.

    Each write stamps a globally increasing sequence number, so per-key
    timestamps strictly increase even when several writes land on the same
    simulated tick. Reads are lock-free (single dict lookup); writes are
    serialized by a mutex.
    """

    def __init__(self) -> None:
        self._entries: dict[str, tuple[Any, int]] = {}
        self._lock = threading.Lock()
        self._seq = 0

    def put(self, key: str, value: Any) -> int:
        if not key:
            raise ValueError("blackboard key must be non-empty")
        with self._lock:
            self._seq += 1
            self._entries[key] = (value, self._seq)
            return self._seq

    def get(self, key: str) -> tuple[Any, int] | None:
        return self._entries.get(key)

    def keys(self) -> list[str]:
        return sorted(self._entries)


def schedule_next(ready: Iterable[Task]) -> Task | None:
    """Pick the next job: most urgent priority class first, then shortest
    estimated duration, ties broken by lexicographic id. None when idle."""
    best: Task | None = None
    for task in ready:
        if best is None:
            best = task
            continue
        a = (task.priority_class, task.estimated_duration, task.id)
        b = (best.priority_class, best.estimated_duration, best.id)
        if a < b:
            best = task
    return best


# ---------------------------------------------------------------------------
# Stub bindings.

@dataclass
class StubKit:
    """Scripted module bindings: dialogue, navigation, frames, movements."""

    dialogue: dict[str, list[str]] = field(default_factory=dict)
    nav: dict[str, RobotPose2D] = field(default_factory=dict)
    frames: dict[str, PerceptionFrame] = field(default_factory=dict)
    movements: MovementStore = field(default_factory=MovementStore)

    def to_dict(self) -> dict:
        return {
            "dialogue": {k: list(v) for k, v in self.dialogue.items()},
            "nav": {k: {"x": p.x, "y": p.y, "theta": p.theta}
                    for k, p in self.nav.items()},
            "frames": {k: frame_to_dict(f) for k, f in self.frames.items()},
            "movements": {name: movement_to_dict(self.movements.get(name))
                          for name in self.movements.names()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "StubKit":
        if not isinstance(data, dict):
            raise FormatError("stubs payload must be a JSON object")
        kit = cls()
        for stage, lines in data.get("dialogue", {}).items():
            kit.dialogue[str(stage)] = [str(line) for line in lines]
        for name, p in data.get("nav", {}).items():
            try:
                kit.nav[str(name)] = RobotPose2D(float(p["x"]), float(p["y"]),
                                                 float(p["theta"]))
            except (KeyError, TypeError, ValueError) as exc:
                raise FormatError(f"invalid nav stub {name!r}: {exc}") from exc
        for name, f in data.get("frames", {}).items():
            kit.frames[str(name)] = frame_from_dict(f)
        for name, m in data.get("movements", {}).items():
            kit.movements.add(movement_from_dict(m), overwrite=True)
        return kit


def save_scenario(script: ScenarioScript, stubs: StubKit,
                  path: str | Path) -> None:
    payload = {
        "format_version": SCENARIO_FORMAT_VERSION,
        "name": script.name,
        "stages": [
            {
                "name": stage.name,
                "tasks": [
                    {
                        "id": t.id,
                        "name": t.name,
                        "duration_s": t.estimated_duration,
                        "priority": t.priority_class,
                        "deps": sorted(t.deps),
                        "action": {"kind": t.action.kind,
                                   "args": dict(t.action.args)},
                    }
                    for t in stage.tasks
                ],
            }
            for stage in script.stages
        ],
        "stubs": stubs.to_dict(),
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def load_scenario(path: str | Path) -> tuple[ScenarioScript, StubKit]:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise FormatError("scenario payload must be a JSON object")
    for fld in ("name", "stages", "stubs"):
        if fld not in data:
            raise FormatError(f"scenario payload missing field {fld!r}")
    version = data.get("format_version", SCENARIO_FORMAT_VERSION)
    if str(version) != SCENARIO_FORMAT_VERSION:
        raise FormatError(f"unsupported scenario format version {version!r}; "
                          f"this reader supports {SCENARIO_FORMAT_VERSION!r}")
    stages = []
    try:
        for stage in data["stages"]:
            tasks = [
                Task(
                    id=str(t["id"]),
                    name=str(t.get("name", t["id"])),
                    estimated_duration=float(t["duration_s"]),
                    priority_class=int(t.get("priority", 0)),
                    deps=frozenset(str(d) for d in t.get("deps", [])),
                    action=TaskAction(str(t["action"]["kind"]),
                                      dict(t["action"].get("args", {}))),
                )
                for t in stage["tasks"]
            ]
            stages.append(Stage(str(stage["name"]), tuple(tasks)))
        script = ScenarioScript(str(data["name"]), tuple(stages))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"invalid scenario payload: {exc}") from exc
    stubs = StubKit.from_dict(data["stubs"])
    return script, stubs


# ---------------------------------------------------------------------------
# Execution engine.

class _Execution:
    """Mutable state threaded through one scenario run."""

    def __init__(self, stubs: StubKit, seed: int) -> None:
        self.stubs = stubs
        self.seed = seed
        self.blackboard = Blackboard()
        self.log = EventLog()
        self.clock = 0.0
        self.stage = ""
        self.dialogue_cursor: dict[str, int] = {}

    def put(self, key: str, value: Any) -> None:
        self.blackboard.put(key, value)
        self.log.append(Event(self.clock, "blackboard_write",
                              {"key": key, "value": value}))

    def feedback(self, signal: str, **extra: Any) -> None:
        payload = {"signal": signal, "stage": self.stage}
        payload.update(extra)
        self.log.append(Event(self.clock, "feedback", payload))

    def frame(self, key: str) -> PerceptionFrame:
        if key not in self.stubs.frames:
            raise StubMissing(f"no perception frame stub named {key!r}")
        return self.stubs.frames[key]

    def next_response(self) -> str:
        lines = self.stubs.dialogue.get(self.stage, [])
        i = self.dialogue_cursor.get(self.stage, 0)
        if i >= len(lines):
            raise StubMissing(f"stage {self.stage!r} has no scripted response "
                              f"left (asked for #{i + 1})")
        self.dialogue_cursor[self.stage] = i + 1
        return lines[i]


def _do_noop(ex: _Execution, task: Task) -> None:
    pass


def _do_say(ex: _Execution, task: Task) -> None:
    text = str(task.action.args.get("text", ""))
    ex.put("dialogue/utterance", text)


def _do_listen(ex: _Execution, task: Task) -> None:
    ex.put("dialogue/response", ex.next_response())


def _do_navigate(ex: _Execution, task: Task) -> None:
    waypoint = str(task.action.args["waypoint"])
    if waypoint not in ex.stubs.nav:
        raise StubMissing(f"no navigation stub for waypoint {waypoint!r}")
    pose = ex.stubs.nav[waypoint]
    ex.put("nav/waypoint", waypoint)
    ex.put("nav/pose", {"x": pose.x, "y": pose.y, "theta": pose.theta})


def _do_record(ex: _Execution, task: Task) -> None:
    ex.put(str(task.action.args["key"]), task.action.args.get("value"))


def _do_check_chairs(ex: _Execution, task: Task) -> None:
    frame = ex.frame(str(task.action.args["frame"]))
    threshold = float(task.action.args.get("threshold", 0.2))
    chairs = [d for d in frame.detections if d.class_label == "chair"]
    persons = [d for d in frame.detections if d.class_label == "person"]
    statuses = chair_occupancy(chairs, persons, threshold)
    ex.put("perception/chairs", [s.value for s in statuses])
    free = next((i for i, s in enumerate(statuses) if s is ChairStatus.FREE), None)
    ex.put("perception/free_chair", free)


def _do_watch_waving(ex: _Execution, task: Task) -> None:
    frame = ex.frame(str(task.action.args["frame"]))
    min_conf = float(task.action.args.get("min_confidence", 0.3))
    waving = frame_waving(frame, min_conf)
    ex.put("perception/waving", waving)
    if waving:
        ex.feedback(EYES_SIGNAL, reason="waving_detected")


def _do_localize(ex: _Execution, task: Task) -> None:
    frame = ex.frame(str(task.action.args["frame"]))
    label = str(task.action.args["label"])
    result = localize_objects(frame, timestamp=ex.clock)
    match = next((o for o in result.objects if o.class_label == label), None)
    if match is None:
        raise TaskActionFailed(f"no {label!r} visible in frame "
                               f"{task.action.args['frame']!r}")
    ex.put(f"perception/{label}_position",
           {"x": match.position[0], "y": match.position[1],
            "distance": match.distance})


def _do_play_movement(ex: _Execution, task: Task) -> None:
    name = str(task.action.args["movement"])
    if name not in ex.stubs.movements:
        raise StubMissing(f"no learned movement stub named {name!r}")
    movement = ex.stubs.movements.get(name)
    speed = float(task.action.args.get("speed", 1.0))
    rate = task.action.args.get("rate")
    trajectory = generate_trajectory(movement, speed,
                                     float(rate) if rate is not None else None)
    ex.put("movement/played", {
        "movement": name,
        "speed": speed,
        "samples": len(trajectory),
        "duration_s": trajectory.duration,
    })


_HANDLERS: dict[str, Callable[[_Execution, Task], None]] = {
    "noop": _do_noop,
    "say": _do_say,
    "listen": _do_listen,
    "navigate": _do_navigate,
    "record": _do_record,
    "check_chairs": _do_check_chairs,
    "watch_waving": _do_watch_waving,
    "localize": _do_localize,
    "play_movement": _do_play_movement,
}


def _validate_stub_bindings(script: ScenarioScript, stubs: StubKit) -> None:
    """Every referenced stub must exist before the run starts."""
    for stage in script.stages:
        listens = 0
        for task in stage.tasks:
            kind, args = task.action.kind, task.action.args
            if kind == "listen":
                listens += 1
            elif kind == "navigate":
                wp = str(args.get("waypoint", ""))
                if wp not in stubs.nav:
                    raise StubMissing(f"task {task.id!r}: no navigation stub "
                                      f"for waypoint {wp!r}")
            elif kind in ("check_chairs", "watch_waving", "localize"):
                key = str(args.get("frame", ""))
                if key not in stubs.frames:
                    raise StubMissing(f"task {task.id!r}: no frame stub {key!r}")
            elif kind == "play_movement":
                name = str(args.get("movement", ""))
                if name not in stubs.movements:
                    raise StubMissing(f"task {task.id!r}: no movement stub "
                                      f"{name!r}")
        scripted = len(stubs.dialogue.get(stage.name, []))
        if listens > scripted:
            raise StubMissing(f"stage {stage.name!r} has {listens} listen tasks "
                              f"but only {scripted} scripted responses")


def run_scenario(script: ScenarioScript, stubs: StubKit, seed: int = 0) -> EventLog:
    """Execute a scenario to completion against scripted stubs.

    Stages run in order; inside a stage the scheduler repeatedly picks from
    the ready set until the task graph is exhausted. A failing action is
    recorded as an ``error`` event and the scenario halts there; missing
    stub bindings are rejected up front with :class:`StubMissing`. The
    returned log is a deterministic function of (script, stubs, seed).
    """
    _validate_stub_bindings(script, stubs)
    ex = _Execution(stubs, seed)
    completed: set[str] = set()
    for stage in script.stages:
        ex.stage = stage.name
        ex.log.append(Event(ex.clock, "stage_entered", {"stage": stage.name}))
        pending = {t.id: t for t in stage.tasks}
        while pending:
            ready = [t for t in pending.values() if t.deps <= completed]
            task = schedule_next(ready)
            if task is None:
                raise ValueError(f"stage {stage.name!r} deadlocked")
            ex.log.append(Event(ex.clock, "task_started",
                                {"task": task.id, "name": task.name}))
            try:
                _HANDLERS[task.action.kind](ex, task)
            except (TaskActionFailed, StubMissing) as exc:
                ex.log.append(Event(ex.clock, "error",
                                    {"task": task.id, "message": str(exc)}))
                return ex.log
            ex.clock += task.estimated_duration
            ex.log.append(Event(ex.clock, "task_finished", {"task": task.id}))
            completed.add(task.id)
            del pending[task.id]
    return ex.log
