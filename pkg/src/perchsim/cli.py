"""``perchsim`` command line: simulate, sweep, statics, analyze.

Standard output carries only the documented JSON or CSV; progress and
warnings go to standard error.  Exit codes: 0 success, 2 simulated failure,
1 tool error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Any, Sequence


from . import __version__
from .core import CalibrationSet, ConfigError, PerchSpec, catalog_perch, load_scenario_text, validate_config, CATALOG_KEYS

EXIT_OK, EXIT_TOOL, EXIT_FAIL = 0, 1, 2
DEFAULT_OUT = "perchsim-out"
OUT_ENV = "PERCHSIM_OUT"


class ToolError(RuntimeError):
    pass


class _Parser(argparse.ArgumentParser):
    # usage errors are tool errors; 2 is reserved for simulated failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_TOOL, f"{self.prog}: error: {message}\n")


def _warn(msg: str) -> None:
    print(f"perchsim: {msg}", file=sys.stderr)


# ---------------------------------------------------------------------------
# run bookkeeping


class Run:
    """One invocation's output directory and manifest line."""

    def __init__(self, args, command: str):
        self.args = args
        self.command = command
        self.root = Path(args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)
        self.root.mkdir(parents=True, exist_ok=True)
        self.manifest = self.root / "manifest.jsonl"
        n = 1
        if self.manifest.exists():
            n += sum(1 for line in self.manifest.read_text().splitlines() if line.strip())
        self.dir = self.root / f"run-{n:04d}-{command}"
        while self.dir.exists():
            n += 1
            self.dir = self.root / f"run-{n:04d}-{command}"
        self.dir.mkdir()
        self.files: list[str] = []
        self.t0 = time.perf_counter()
        self.calibration_id = None
        self.seed = args.seed  # replaced by the effective seed once resolved

    def write(self, name: str, text: str) -> Path:
        path = self.dir / name
        path.write_text(text)
        self.files.append(str(path.relative_to(self.root)))
        return path

    def close(self, status: str, exit_code: int) -> None:
        entry = {
            "command": self.command,
            "scenario": getattr(self.args, "config", None),
            "seed": self.seed,
            "output_dir": str(self.dir),
            "tool_version": __version__,
            "calibration_id": self.calibration_id,
            "duration_s": round(time.perf_counter() - self.t0, 6),
            "files": self.files,
            "status": status,
            "exit_code": exit_code,
        }
        with self.manifest.open("a") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# shared loading


def _load_calibration(path: str | None) -> CalibrationSet:
    from .calibration import default_calibration

    cal = default_calibration()
    if not path:
        return cal
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ToolError(f"cannot read calibration {path}: {exc}") from exc
    try:
        if isinstance(data, dict) and "params" in data:
            return CalibrationSet.from_dict(data)
        if isinstance(data, dict):
            return cal.with_overrides({k: float(v) for k, v in data.items()}, name=f"{cal.name}+{Path(path).stem}")
    except (KeyError, TypeError, ValueError) as exc:
        raise ToolError(f"bad calibration {path}: {exc}") from exc
    raise ToolError(f"calibration {path} must be a JSON object")


def _load_scenario(path: str | None, cal: CalibrationSet, overridden: Sequence[str] = ()):
    raw: Any = {}
    if path:
        p = Path(path)
        try:
            raw = load_scenario_text(p.read_text(), p.suffix.lower())
        except OSError as exc:
            raise ToolError(f"cannot read scenario {path}: {exc}") from exc
        except Exception as exc:  # yaml / json syntax
            raise ToolError(f"cannot parse scenario {path}: {exc}") from exc
        if raw is None:
            raw = {}
    config, report = validate_config(raw, cal)
    for note in report.notes:
        if not any(note.startswith(prefix) for prefix in overridden):
            _warn(note)
    for key in report.unknown_keys:
        _warn(f"unknown key ignored: {key}")
    if config is None:
        raise ToolError("invalid scenario: " + "; ".join(f"{f or '<root>'}: {m}" for f, m in report.errors))
    return config


def _perch_from_name(name: str, inclination: float = 0.0) -> PerchSpec:
    try:
        return catalog_perch(name, inclination)
    except KeyError as exc:
        raise ToolError(str(exc.args[0])) from exc


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args, run: Run) -> int:
    from .dynamics import ApproachScenario, ImpactModel
    from .core import default_system

    cal = _load_calibration(args.calibration)
    overridden = []
    if args.velocity is not None or args.height is not None:
        overridden.append("approach.")
    if args.perch:
        overridden.append("perch")
    config = _load_scenario(args.config, cal, overridden)
    if config.calibration_overrides:
        cal = cal.with_overrides(config.calibration_overrides)
    run.calibration_id = cal.name
    _, _, mech, _ = default_system()
    model = ImpactModel(config.mass, mech, cal)
    perch = config.perch
    if args.perch:
        perch = _perch_from_name(args.perch, perch.inclination)
    if args.inclination is not None:
        perch = perch.at_inclination(args.inclination)
    app = config.approach
    velocity, height = app.impact_velocity, app.height
    if args.velocity is not None:
        velocity, height = args.velocity, None
    elif args.height is not None:
        velocity, height = None, args.height
    if velocity is None and height is None:
        velocity = 0.82
        _warn("approach.impact_velocity defaulted to 0.82 m/s")
    seed = args.seed if args.seed is not None else app.seed
    run.seed = seed
    disturbance = args.disturbance if args.disturbance is not None else app.disturbance
    try:
        scenario = ApproachScenario(perch, impact_velocity=velocity, height=height,
                                    lateral_offset=app.lateral_offset, seed=seed, disturbance=disturbance)
    except ValueError as exc:
        raise ToolError(str(exc)) from exc
    run.write("scenario.json", json.dumps({"scenario": replace(config, perch=perch).to_dict(),
                                            "resolved": {"impact_velocity": velocity, "height": height,
                                                         "seed": seed, "disturbance": disturbance}},
                                           indent=2, sort_keys=True) + "\n")

    if args.full_cycle:
        from .cycle import CycleFailure, run_full_cycle

        delay = args.release_delay if args.release_delay is not None else config.release_delay
        try:
            fc = run_full_cycle(scenario, release_delay=delay, model=model)
        except CycleFailure as exc:
            report = {"cycle": "failed", "outcome": exc.outcome.to_dict()}
            run.write("outcome.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
            print(json.dumps(report, sort_keys=True))
            return EXIT_FAIL
        from .telemetry import segment_cycle, to_csv

        detected = segment_cycle(fc.trace).to_dict()
        run.write("events.jsonl", fc.events_jsonl())
        run.write("cycle_trace_imu.csv", to_csv(fc.trace, "accel"))
        run.write("segmentation.json", json.dumps(detected, indent=2, sort_keys=True) + "\n")
        report = {
            "cycle": "completed",
            "outcome": fc.outcome.to_dict(),
            "ground_truth": fc.truth.to_dict(),
            "segmentation": detected,
            "servo_energy_perched": {"entering": fc.perched_energy[0], "leaving": fc.perched_energy[1]},
        }
        run.write("outcome.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
        print(json.dumps(report, sort_keys=True))
        return EXIT_OK

    outcome = model.simulate(scenario, record=True)
    from .telemetry import to_csv

    run.write("outcome.json", json.dumps(outcome.to_dict(), indent=2, sort_keys=True) + "\n")
    run.write("trace_imu.csv", to_csv(outcome.trace, "accel"))
    run.write("trace_mocap.csv", to_csv(outcome.trace, "position"))
    run.write("trace_mocap.meta.json", json.dumps({k: outcome.trace.metadata[k] for k in ("perch_height", "approach")},
                                                  sort_keys=True) + "\n")
    print(json.dumps(outcome.to_dict(), sort_keys=True))
    return EXIT_OK if outcome.success else EXIT_FAIL


# ---------------------------------------------------------------------------
# sweep


def grid(lo: float, hi: float, step: float, what: str) -> list[float]:
    if not (math.isfinite(lo) and math.isfinite(hi) and math.isfinite(step)):
        raise ToolError(f"{what} grid bounds must be finite")
    if step <= 0:
        raise ToolError(f"{what} step must be positive")
    if hi < lo:
        raise ToolError(f"{what} grid is empty ({lo} > {hi})")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [round(lo + i * step, 10) for i in range(n)]


def cmd_sweep(args, run: Run) -> int:
    from .dynamics import ImpactModel, sweep_envelope
    from .core import default_system

    cal = _load_calibration(args.calibration)
    run.calibration_id = cal.name
    mass, _, mech, _ = default_system()
    if args.config:
        config = _load_scenario(args.config, cal)
        mass = config.mass
        if config.calibration_overrides:
            cal = cal.with_overrides(config.calibration_overrides)
            run.calibration_id = cal.name
    vs = grid(args.v_min, args.v_max, args.v_step, "velocity")
    ths = grid(args.theta_min, args.theta_max, args.theta_step, "inclination")
    if args.trials < 1:
        raise ToolError("trials must be >= 1")
    if min(vs) < 0 or max(vs) > 3.0:
        raise ToolError("velocities must lie in [0, 3] m/s")
    perch = _perch_from_name(args.perch)
    seed = args.seed if args.seed is not None else 0
    run.seed = seed

    def progress(done, total):
        if args.progress:
            print(f"\rsweep {done}/{total} cells", end="" if done < total else "\n", file=sys.stderr)

    g = sweep_envelope(vs, ths, args.trials, seed, model=ImpactModel(mass, mech, cal), perch=perch,
                       disturbance=args.disturbance, workers=args.workers, progress=progress)
    csv_text = g.to_csv()
    json_text = g.to_json() + "\n"
    run.write("envelope.csv", csv_text)
    run.write("envelope.json", json_text)
    sys.stdout.write(csv_text if args.format == "csv" else json_text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# statics


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ToolError(f"bad number list {text!r}") from exc


def cmd_statics(args, run: Run) -> int:
    from .core import default_system
    from .statics import StaticsModel, catalog_table, inclination_table

    cal = _load_calibration(args.calibration)
    run.calibration_id = cal.name
    mass, _, mech, _ = default_system()
    model = StaticsModel(mass, mech, cal)
    keys = args.perch or list(CATALOG_KEYS)
    perches = [_perch_from_name(k) for k in keys]
    if args.inclinations:
        thetas = _floats(args.inclinations)
        if any(not 0 <= t <= 20 for t in thetas):
            raise ToolError("inclinations must lie in [0, 20] deg")
        parts = [inclination_table(model, p, thetas) for p in perches]
        text = parts[0] + "".join(p.split("\n", 1)[1] for p in parts[1:])
        name = "inclination.csv"
    else:
        text = catalog_table(model.catalog_envelopes(keys=keys))
        name = "catalog.csv"
    run.write(name, text)
    sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# analyze


def _read_with_sidecar(path: Path, args):
    from .telemetry import read_csv

    trace = read_csv(path, gravity_included=args.gravity_included)
    meta = {}
    side = path.with_suffix(".meta.json")
    if side.exists():
        try:
            meta = json.loads(side.read_text())
        except json.JSONDecodeError as exc:
            _warn(f"{side}: ignoring unreadable metadata ({exc})")
    if args.perch_height is not None:
        meta["perch_height"] = args.perch_height
    if args.free_fall:
        meta["approach"] = "free-fall"
    if args.source != "auto":
        from .telemetry import Source

        want = Source.IMU if args.source == "imu" else Source.MOCAP
        if trace.source is not want:
            raise ValueError(f"{path}: expected a {args.source} file")
    return trace.with_(metadata={**trace.metadata, **meta})


def _file_report(trace, args) -> dict[str, Any]:
    from .telemetry import Source, TelemetryError, segment_cycle, velocity_from_accel, velocity_from_position

    rep: dict[str, Any] = {"file": trace.metadata.get("file"), "source": trace.source.value, "samples": len(trace),
                           "sample_rate": trace.sample_rate}
    try:
        if trace.source is Source.MOCAP:
            rep["impact_velocity"] = velocity_from_position(trace)[1]
        else:
            rep["impact_velocity"] = velocity_from_accel(trace)
    except TelemetryError as exc:
        rep["impact_velocity"] = None
        rep["warning"] = str(exc)
    if trace.accel is not None:
        rep["segmentation"] = segment_cycle(trace).to_dict()
    return rep


def _pair_up(paths: list[Path]) -> list[tuple[Path, Path]]:
    by_stem: dict[str, dict[str, Path]] = {}
    for p in paths:
        stem = p.stem
        for tag in ("mocap", "imu"):
            if stem.endswith("_" + tag):
                by_stem.setdefault(stem[: -len(tag) - 1], {})[tag] = p
    pairs = []
    for stem in sorted(by_stem):
        d = by_stem[stem]
        if "mocap" in d and "imu" in d:
            pairs.append((d["mocap"], d["imu"]))
        else:
            _warn(f"{stem}: unpaired file skipped")
    return pairs


def _expand(inputs: Sequence[str]) -> list[Path]:
    out = []
    for s in inputs:
        p = Path(s)
        if p.is_dir():
            out.extend(sorted(p.glob("*.csv")))
        else:
            out.append(p)
    return out


def cmd_analyze(args, run: Run) -> int:
    from .telemetry import TelemetryError, butterworth_lowpass, cross_validate, to_csv

    paths = _expand(args.files)
    if not paths:
        raise ToolError("no input files")
    loaded = {}
    for p in paths:
        try:
            loaded[p] = _read_with_sidecar(p, args)
        except (OSError, TelemetryError, ValueError) as exc:
            _warn(f"skipping {p}: {exc}")
    if not loaded:
        _warn("no readable input files")
        return EXIT_TOOL

    if args.paired:
        refs, others, names = [], [], []
        for m, i in _pair_up(list(loaded)):
            refs.append(loaded[m])
            others.append(loaded[i])
            names.append(m.stem[: -len("_mocap")])
        if not refs:
            _warn("no complete mocap/imu pairs")
            return EXIT_TOOL
        try:
            cv = cross_validate(refs, others)
        except TelemetryError as exc:
            raise ToolError(str(exc)) from exc
        table = cv.to_csv()
        run.write("cross_validation.csv", table)
        summary = {"n": len(cv.pairs), "mean_pct": cv.mean_pct, "std_pct": cv.std_pct, "pairs": names}
        run.write("cross_validation.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
        sys.stdout.write(table)
        _warn(f"{len(cv.pairs)} pairs: mean discrepancy {cv.mean_pct:.2f} %, std {cv.std_pct:.2f} %")
        return EXIT_OK

    reports = []
    for p, trace in loaded.items():
        rep = _file_report(trace, args)
        reports.append(rep)
        run.write(f"{p.stem}.report.json", json.dumps(rep, indent=2, sort_keys=True) + "\n")
        if args.cutoff is not None:
            try:
                filt = butterworth_lowpass(trace, args.cutoff)
            except TelemetryError as exc:
                raise ToolError(str(exc)) from exc
            run.write(f"{p.stem}.filtered.csv", to_csv(filt))
    print(json.dumps(reports, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="scenario file (YAML or JSON)")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed")
    common.add_argument("--out", default=argparse.SUPPRESS, help=f"output directory (env {OUT_ENV})")
    common.add_argument("--calibration", default=argparse.SUPPRESS, help="calibration JSON (full set or overrides)")

    p = _Parser(prog="perchsim", description="Perching-gripper simulation and telemetry tools.")
    p.add_argument("--version", action="version", version=f"perchsim {__version__}")
    p.add_argument("--config", default=None, help="scenario file (YAML or JSON)")
    p.add_argument("--seed", type=int, default=None, help="master seed")
    p.add_argument("--out", default=None, help=f"output directory (env {OUT_ENV}, default {DEFAULT_OUT})")
    p.add_argument("--calibration", default=None, help="calibration JSON (full set or overrides)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[common], help="simulate one perching attempt")
    s.add_argument("--velocity", type=float, help="impact velocity (m/s)")
    s.add_argument("--height", type=float, help="drop height (m)")
    s.add_argument("--perch", help="catalog perch name")
    s.add_argument("--inclination", type=float, help="perch inclination (deg)")
    s.add_argument("--disturbance", type=float, help="disturbance magnitude")
    s.add_argument("--full-cycle", action="store_true", help="land, perch, release and take off")
    s.add_argument("--release-delay", type=float, help="perched time before release (s)")
    s.set_defaults(func=cmd_simulate)

    w = sub.add_parser("sweep", parents=[common], help="velocity x inclination success envelope")
    w.add_argument("--v-min", type=float, default=0.2)
    w.add_argument("--v-max", type=float, default=1.6)
    w.add_argument("--v-step", type=float, default=0.1)
    w.add_argument("--theta-min", type=float, default=0.0)
    w.add_argument("--theta-max", type=float, default=12.0)
    w.add_argument("--theta-step", type=float, default=2.0)
    w.add_argument("--trials", type=int, default=50)
    w.add_argument("--disturbance", type=float, default=1.0)
    w.add_argument("--perch", default="wood-40")
    w.add_argument("--workers", type=int, default=1)
    w.add_argument("--format", choices=("csv", "json"), default="csv")
    w.add_argument("--progress", action="store_true", help="report progress on stderr")
    w.set_defaults(func=cmd_sweep)

    t = sub.add_parser("statics", parents=[common], help="static holding envelopes")
    t.add_argument("--perch", action="append", help="catalog perch (repeatable; default all)")
    t.add_argument("--inclinations", help="comma-separated inclinations (deg)")
    t.set_defaults(func=cmd_statics)

    a = sub.add_parser("analyze", parents=[common], help="velocity estimation and cycle segmentation")
    a.add_argument("files", nargs="+", help="trace CSVs or directories")
    a.add_argument("--cutoff", type=float, help="low-pass cutoff (Hz) for the filtered output")
    a.add_argument("--source", choices=("auto", "imu", "mocap"), default="auto")
    a.add_argument("--paired", action="store_true", help="cross-validate *_mocap.csv / *_imu.csv pairs")
    a.add_argument("--perch-height", type=float, help="perch level in the MoCap frame (m)")
    a.add_argument("--free-fall", action="store_true", help="approach was a throttle-off fall")
    a.add_argument("--gravity-included", action="store_true", help="IMU files include gravity")
    a.set_defaults(func=cmd_analyze)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        run = Run(args, args.command)
    except OSError as exc:
        _warn(f"cannot create output directory: {exc}")
        return EXIT_TOOL
    code, status = EXIT_TOOL, "failed"
    try:
        code = args.func(args, run)
        status = "complete"
    except (ToolError, ConfigError) as exc:
        _warn(str(exc))
        code, status = EXIT_TOOL, "error"
    except KeyboardInterrupt:
        _warn("interrupted; partial outputs listed in the manifest")
        code, status = EXIT_TOOL, "interrupted"
    finally:
        run.close(status, code)
    return code


if __name__ == "__main__":
    sys.exit(main())
