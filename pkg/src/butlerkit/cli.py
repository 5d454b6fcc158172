"""Command-line entry points tying the toolkit together.

Subcommands: ``gen-demos`` (synthetic demonstrations), ``learn`` (fit a
movement from a demo directory), ``play`` (generate a trajectory from a
movement file), ``perceive`` (report objects/occupancy/waving from frame
files), and ``scenario`` (run a scenario script). Every option can come
from a JSON config file; flags win over the file. Stochastic commands
require a seed and are bit-reproducible given it.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import butler, frames, gmm, gmr, manager, perception, synth, trajectories
from .errors import ToolkitError

_GEN_DEFAULTS: dict[str, Any] = {
    "label": "wave",
    "family": "sine",
    "demos": 3,
    "joints": 5,
    "samples": 200,
    "duration": 4.0,
    "amplitude": 1.0,
    "cycles": 2.0,
    "noise": 0.0,
    "time_jitter": 0.0,
    "pad_idle": 0.0,
}

_LEARN_DEFAULTS: dict[str, Any] = {
    "name": None,
    "k_min": gmm.DEFAULT_K_RANGE[0],
    "k_max": gmm.DEFAULT_K_RANGE[1],
    "restarts": gmm.DEFAULT_RESTARTS,
    "velocity_threshold": trajectories.DEFAULT_VELOCITY_THRESHOLD,
    "min_active_samples": trajectories.DEFAULT_MIN_ACTIVE_SAMPLES,
    "rate": gmr.DEFAULT_RATE_HZ,
}

_PLAY_DEFAULTS: dict[str, Any] = {
    "speed": 1.0,
    "rate": None,
    "plot_data": False,
    "demos_dir": None,
}

_PERCEIVE_DEFAULTS: dict[str, Any] = {
    "overlap_threshold": perception.DEFAULT_OVERLAP_THRESHOLD,
    "min_confidence": perception.DEFAULT_MIN_KEYPOINT_CONFIDENCE,
}


class CliError(Exception):
    """A usage or validation problem reported with a nonzero exit."""


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        config = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise CliError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CliError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(config, dict):
        raise CliError("config must be a JSON object")
    return config


def _resolve(args: argparse.Namespace, config: dict, command: str,
             key: str, default: Any) -> Any:
    """Precedence: explicit flag, then config[command][key], then
    config[key], then the built-in default."""
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    section = config.get(command, {})
    if isinstance(section, dict) and key in section:
        return section[key]
    if key in config:
        return config[key]
    return default


def _resolve_all(args: argparse.Namespace, config: dict, command: str,
                 defaults: dict[str, Any]) -> dict[str, Any]:
    return {key: _resolve(args, config, command, key, default)
            for key, default in defaults.items()}


def _require_seed(args: argparse.Namespace, config: dict, command: str) -> int:
    seed = _resolve(args, config, command, "seed", None)
    if seed is None:
        raise CliError(f"{command} is stochastic: a seed is required "
                       f"(--seed or config)")
    seed = int(seed)
    if seed < 0:
        raise CliError("seed must be non-negative")
    return seed


def _out_dir(args: argparse.Namespace, config: dict, command: str) -> Path:
    out = Path(_resolve(args, config, command, "out", "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _check(condition: bool, message: str) -> None:
    if not condition:
        raise CliError(message)


# ---------------------------------------------------------------------------
# Subcommands.

def _cmd_gen_demos(args: argparse.Namespace, config: dict) -> int:
    opts = _resolve_all(args, config, "gen-demos", _GEN_DEFAULTS)
    seed = _require_seed(args, config, "gen-demos")
    out = _out_dir(args, config, "gen-demos")
    _check(opts["family"] in synth.WAVEFORM_FAMILIES,
           f"unknown waveform family {opts['family']!r}")
    _check(int(opts["demos"]) >= 1, "demos must be at least 1")
    _check(int(opts["joints"]) >= 1, "joints must be at least 1")
    _check(int(opts["samples"]) >= 2, "samples must be at least 2")
    _check(float(opts["duration"]) > 0, "duration must be positive")
    _check(float(opts["noise"]) >= 0, "noise must be non-negative")
    _check(0 <= float(opts["time_jitter"]) < 1, "time-jitter must be in [0, 1)")
    _check(float(opts["pad_idle"]) >= 0, "pad-idle must be non-negative")
    demos = synth.synth_demo_set(
        label=str(opts["label"]),
        count=int(opts["demos"]),
        seed=seed,
        family=str(opts["family"]),
        joints=int(opts["joints"]),
        duration=float(opts["duration"]),
        n_samples=int(opts["samples"]),
        amplitude=float(opts["amplitude"]),
        cycles=float(opts["cycles"]),
        noise_sigma=float(opts["noise"]),
        time_jitter=float(opts["time_jitter"]),
        pad_idle=float(opts["pad_idle"]),
    )
    paths = trajectories.save_demo_set(demos, out)
    print(f"wrote {len(paths)} demonstrations to {out}")
    return 0


def _cmd_learn(args: argparse.Namespace, config: dict) -> int:
    opts = _resolve_all(args, config, "learn", _LEARN_DEFAULTS)
    seed = _require_seed(args, config, "learn")
    out = _out_dir(args, config, "learn")
    demos_dir = _resolve(args, config, "learn", "demos_dir", None)
    _check(demos_dir is not None, "learn needs --demos-dir")
    demos = trajectories.load_demo_dir(demos_dir)
    if not demos:
        raise CliError(f"no demonstrations found in {demos_dir}")
    name = str(opts["name"] or demos[0].label)
    k_min, k_max = int(opts["k_min"]), int(opts["k_max"])
    _check(1 <= k_min <= k_max, "k range must satisfy 1 <= k-min <= k-max")
    _check(int(opts["restarts"]) >= 1, "restarts must be at least 1")
    _check(float(opts["velocity_threshold"]) > 0,
           "velocity-threshold must be positive")
    _check(int(opts["min_active_samples"]) >= 2,
           "min-active-samples must be at least 2")
    _check(float(opts["rate"]) > 0, "rate must be positive")
    learn_config = gmr.LearnConfig(
        velocity_threshold=float(opts["velocity_threshold"]),
        min_active_samples=int(opts["min_active_samples"]),
        k_range=(k_min, k_max),
        restarts=int(opts["restarts"]),
        seed=seed,
        default_rate=float(opts["rate"]),
    )
    result = gmr.learn_movement_detailed(demos, name, learn_config)
    movement_path = out / f"{name}.movement.json"
    gmr.save_movement(result.movement, movement_path)
    bic_rows = [{"k": k, "bic": bic} for k, bic in sorted(result.bic_table.items())]
    bic_path = out / f"{name}.bic.json"
    bic_path.write_text(json.dumps(
        {"movement": name, "selected_k": result.movement.model.k,
         "table": bic_rows}, indent=2) + "\n", encoding="utf-8")
    print(f"learned {name!r} from {len(demos)} demonstrations: "
          f"K={result.movement.model.k}, duration="
          f"{result.movement.duration:.3f}s")
    print(f"wrote {movement_path} and {bic_path}")
    return 0


def _write_trajectory_csv(demo: trajectories.Demonstration, path: Path) -> None:
    trajectories.save_demo_csv(demo, path)


def _cmd_play(args: argparse.Namespace, config: dict) -> int:
    opts = _resolve_all(args, config, "play", _PLAY_DEFAULTS)
    out = _out_dir(args, config, "play")
    movement_path = _resolve(args, config, "play", "movement", None)
    _check(movement_path is not None, "play needs --movement")
    speed = float(opts["speed"])
    _check(speed > 0, "speed must be positive")
    movement = gmr.load_movement(movement_path)
    rate = float(opts["rate"]) if opts["rate"] is not None else movement.default_rate
    _check(rate > 0, "rate must be positive")
    trajectory = gmr.generate_trajectory(movement, speed, rate)
    csv_path = out / f"{movement.name}.trajectory.csv"
    _write_trajectory_csv(trajectory, csv_path)
    meta = {
        "movement": movement.name,
        "speed_factor": speed,
        "rate_hz": rate,
        "samples": len(trajectory),
        "duration_s": trajectory.duration,
    }
    meta_path = out / f"{movement.name}.trajectory.meta.json"
    meta_path.write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    written = [csv_path, meta_path]
    if opts["plot_data"]:
        _check(opts["demos_dir"] is not None, "--plot-data needs --demos-dir")
        demos = trajectories.load_demo_dir(opts["demos_dir"])
        if not demos:
            raise CliError(f"no demonstrations found in {opts['demos_dir']}")
        written += _export_plot_data(movement, demos, out)
    print(f"played {movement.name!r} at speed {speed}: "
          f"{meta['samples']} samples over {meta['duration_s']:.3f}s")
    for path in written:
        print(f"wrote {path}")
    return 0


def _export_plot_data(movement: gmr.LearnedMovement,
                      demos: list[trajectories.Demonstration],
                      out: Path) -> list[Path]:
    """Demos-vs-learned-curve export: the per-joint comparison view."""
    trimmed = [trajectories.trim_idle(d) for d in demos]
    aligned = trajectories.align_to_reference(trimmed)
    name = movement.name
    demos_path = out / f"{name}.plot_demos.csv"
    with demos_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["demo", "t"] + [f"q{j}" for j in range(aligned.dim)])
        for i, demo in enumerate(aligned.demos):
            for k in range(len(demo)):
                writer.writerow([i, repr(float(demo.times[k]))]
                                + [repr(float(v)) for v in demo.joints[k]])
    curve_path = out / f"{name}.plot_learned.csv"
    with curve_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"q{j}" for j in range(movement.dim)]
                        + [f"std{j}" for j in range(movement.dim)])
        for t in aligned.reference.times:
            mean, cov = gmr.gmr_regress(movement.model, float(t))
            std = np.sqrt(np.maximum(np.diagonal(cov), 0.0))
            writer.writerow([repr(float(t))]
                            + [repr(float(v)) for v in mean]
                            + [repr(float(v)) for v in std])
    gauss_path = out / f"{name}.plot_gaussians.json"
    gauss_path.write_text(
        json.dumps(gmm.model_to_dict(movement.model), indent=2) + "\n",
        encoding="utf-8")
    return [demos_path, curve_path, gauss_path]


def _cmd_perceive(args: argparse.Namespace, config: dict) -> int:
    opts = _resolve_all(args, config, "perceive", _PERCEIVE_DEFAULTS)
    out = _out_dir(args, config, "perceive")
    frame_paths = _resolve(args, config, "perceive", "frame", None)
    _check(bool(frame_paths), "perceive needs at least one --frame")
    if isinstance(frame_paths, (str, Path)):
        frame_paths = [frame_paths]
    overlap = float(opts["overlap_threshold"])
    min_conf = float(opts["min_confidence"])
    _check(0 <= overlap <= 1, "overlap-threshold must lie in [0, 1]")
    _check(0 <= min_conf <= 1, "min-confidence must lie in [0, 1]")
    reports = []
    for path in frame_paths:
        frame = frames.load_frame(path)
        located = perception.localize_objects(frame)
        chairs = [d for d in frame.detections if d.class_label == "chair"]
        persons = [d for d in frame.detections if d.class_label == "person"]
        statuses = perception.chair_occupancy(chairs, persons, overlap)
        reports.append({
            "frame": str(path),
            "objects": [
                {"label": o.class_label, "x": o.position[0],
                 "y": o.position[1], "distance": o.distance}
                for o in located.objects
            ],
            "skipped": located.skipped,
            "chairs": [s.value for s in statuses],
            "waving": perception.frame_waving(frame, min_conf),
        })
    report_path = out / "report.json"
    report_path.write_text(json.dumps({"frames": reports}, indent=2) + "\n",
                           encoding="utf-8")
    print(f"analysed {len(reports)} frame(s), wrote {report_path}")
    return 0


def _cmd_scenario(args: argparse.Namespace, config: dict) -> int:
    seed = _require_seed(args, config, "scenario")
    out = _out_dir(args, config, "scenario")
    script_path = _resolve(args, config, "scenario", "script", None)
    if script_path is None:
        script, stubs = butler.build_butler_scenario(seed)
        script_path = out / "butler_scenario.json"
        manager.save_scenario(script, stubs, script_path)
        print(f"wrote built-in scenario to {script_path}")
        script, stubs = manager.load_scenario(script_path)
    else:
        script, stubs = manager.load_scenario(script_path)
    log = manager.run_scenario(script, stubs, seed)
    log_path = out / "events.jsonl"
    log.save(log_path)
    errors = log.of_kind("error")
    stages = [e.payload["stage"] for e in log.of_kind("stage_entered")]
    print(f"ran scenario {script.name!r}: stages {stages}, "
          f"{len(log)} events, {len(errors)} error(s)")
    print(f"wrote {log_path}")
    if errors:
        for event in errors:
            print(f"error in task {event.payload['task']}: "
                  f"{event.payload['message']}", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# Argument parsing.

def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags override it")
    parser.add_argument("--seed", type=int, help="RNG seed (u64)")
    parser.add_argument("--out", help="output directory (default: .)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="butlerkit",
        description="Service-robot skills toolkit: demonstration learning, "
                    "perception fusion, and scenario execution.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-demos", help="generate synthetic demonstrations")
    _add_common(p)
    p.add_argument("--label")
    p.add_argument("--family", choices=synth.WAVEFORM_FAMILIES)
    p.add_argument("--demos", type=int)
    p.add_argument("--joints", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--duration", type=float)
    p.add_argument("--amplitude", type=float)
    p.add_argument("--cycles", type=float)
    p.add_argument("--noise", type=float)
    p.add_argument("--time-jitter", dest="time_jitter", type=float)
    p.add_argument("--pad-idle", dest="pad_idle", type=float)
    p.set_defaults(func=_cmd_gen_demos)

    p = sub.add_parser("learn", help="learn a movement from demonstrations")
    _add_common(p)
    p.add_argument("--demos-dir", dest="demos_dir")
    p.add_argument("--name")
    p.add_argument("--k-min", dest="k_min", type=int)
    p.add_argument("--k-max", dest="k_max", type=int)
    p.add_argument("--restarts", type=int)
    p.add_argument("--velocity-threshold", dest="velocity_threshold", type=float)
    p.add_argument("--min-active-samples", dest="min_active_samples", type=int)
    p.add_argument("--rate", type=float)
    p.set_defaults(func=_cmd_learn)

    p = sub.add_parser("play", help="generate a trajectory from a movement file")
    _add_common(p)
    p.add_argument("--movement")
    p.add_argument("--speed", type=float)
    p.add_argument("--rate", type=float)
    p.add_argument("--plot-data", dest="plot_data", action="store_const",
                   const=True)
    p.add_argument("--demos-dir", dest="demos_dir")
    p.set_defaults(func=_cmd_play)

    p = sub.add_parser("perceive", help="report objects, occupancy, and waving")
    _add_common(p)
    p.add_argument("--frame", action="append")
    p.add_argument("--overlap-threshold", dest="overlap_threshold", type=float)
    p.add_argument("--min-confidence", dest="min_confidence", type=float)
    p.set_defaults(func=_cmd_perceive)

    p = sub.add_parser("scenario", help="run a scenario script")
    _add_common(p)
    p.add_argument("--script")
    p.set_defaults(func=_cmd_scenario)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(args.config)
        return args.func(args, config)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ToolkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
