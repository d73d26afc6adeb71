"""Bundled synthetic fixtures: scenario files, the paired drop corpus, a full-cycle trace and golden outputs.

Every file under ``perchsim/data`` is produced by :func:`build_fixtures`; the
test suite regenerates them and compares byte for byte.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

FIXTURE_VELOCITIES = (0.29, 0.82, 1.29)
CYCLE_VELOCITY = 0.82
FILTER_CUTOFF = 7.0
# keys a logger would know at record time; ground truth stays out of sidecars
SIDECAR_KEYS = ("perch_height", "approach")


def data_dir() -> Path:
    return Path(str(resources.files("perchsim") / "data"))


def scenario_text(velocity: float) -> str:
    return (
        "# drop onto the 40 mm wooden dowel\n"
        "perch:\n"
        "  catalog: wood-40\n"
        "  friction_coefficient: 0.9\n"
        "approach:\n"
        f"  impact_velocity: {velocity} m/s\n"
        "  seed: 0\n"
        "cycle:\n"
        "  release_delay: 10 s\n"
    )


def scenario_name(velocity: float) -> str:
    return f"drop_{int(round(velocity * 100)):03d}.yaml"


def _sidecar(trace) -> str:
    return json.dumps({k: trace.metadata[k] for k in SIDECAR_KEYS if k in trace.metadata}, sort_keys=True) + "\n"


def build_fixtures() -> dict[str, str]:
    """Relative path -> file text for every bundled fixture."""
    from .core import catalog_perch, default_system, load_scenario_text, validate_config
    from .cycle import run_full_cycle
    from .dynamics import ApproachScenario
    from .statics import StaticsModel, catalog_table, inclination_table
    from .telemetry import butterworth_lowpass, cross_validate, segment_cycle, synthetic_corpus, to_csv

    files: dict[str, str] = {}
    mass, _, mech, cal = default_system()

    for v in FIXTURE_VELOCITIES:
        text = scenario_text(v)
        name = scenario_name(v)
        files[f"scenarios/{name}"] = text
        config, _ = validate_config(load_scenario_text(text, ".yaml"), cal)
        files[f"golden/{name.replace('.yaml', '.echo.json')}"] = config.to_json() + "\n"

    corpus = synthetic_corpus()
    index = ["pair,true_impact_velocity_mps"]
    for k, (mocap, imu) in enumerate(corpus):
        stem = f"corpus/drop{k:02d}"
        files[f"{stem}_mocap.csv"] = to_csv(mocap, "position")
        files[f"{stem}_mocap.meta.json"] = _sidecar(mocap)
        files[f"{stem}_imu.csv"] = to_csv(imu, "accel")
        index.append(f"drop{k:02d},{mocap.metadata['true_impact_velocity']!r}")
    files["corpus_index.csv"] = "\n".join(index) + "\n"
    files["golden/cross_validation.csv"] = cross_validate([m for m, _ in corpus], [i for _, i in corpus]).to_csv()

    fc = run_full_cycle(ApproachScenario(catalog_perch("wood-40"), impact_velocity=CYCLE_VELOCITY))
    files["full_cycle_imu.csv"] = to_csv(fc.trace, "accel")
    files["golden/full_cycle_truth.json"] = json.dumps(fc.truth.to_dict(), indent=2, sort_keys=True) + "\n"
    files["golden/full_cycle_segmentation.json"] = (
        json.dumps(segment_cycle(fc.trace).to_dict(), indent=2, sort_keys=True) + "\n")
    files["golden/full_cycle_events.jsonl"] = fc.events_jsonl()
    files["golden/full_cycle_filtered_7hz.csv"] = to_csv(butterworth_lowpass(fc.trace, FILTER_CUTOFF), "accel")

    model = StaticsModel(mass, mech, cal)
    files["golden/statics_catalog.csv"] = catalog_table(model.catalog_envelopes())
    files["golden/statics_inclination.csv"] = "".join(
        t if n == 0 else t.split("\n", 1)[1]
        for n, t in enumerate(inclination_table(model, catalog_perch(k), (0.0, 5.0, 10.0, 12.5))
                              for k in ("wood-40", "square-diamond")))
    return files


def write_fixtures(root: Path | None = None) -> list[Path]:
    root = Path(root) if root is not None else data_dir()
    written = []
    for rel, text in sorted(build_fixtures().items()):
        path = root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        written.append(path)
    return written
