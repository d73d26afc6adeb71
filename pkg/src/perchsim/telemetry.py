"""Telemetry traces and the signal-processing pipeline.

Accelerations are kinematic and gravity-excluded internally: a vehicle at rest
reads 0 and one in free fall reads ``-g`` on the vertical (``z``) axis.  IMU
files that include gravity are normalized on ingestion.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
from scipy import signal

from .core import G

SAMPLE_RATE = 250.0
PRE_ROLL = 0.2
NOISE_PEAK_FACTOR = 8.0
FIT_SAMPLES = 12


class TelemetryError(ValueError):
    pass


class NoImpactPeak(TelemetryError):
    pass


class SyncError(TelemetryError):
    pass


class Source(str, enum.Enum):
    IMU = "IMU"
    MOCAP = "MoCap"
    SYNTHETIC = "Synthetic"


@dataclass(frozen=True, eq=False)
class TelemetryTrace:
    """Uniformly sampled trace.  ``accel`` and ``position`` are (n, 3) arrays."""

    time: np.ndarray
    accel: np.ndarray | None
    position: np.ndarray | None = None
    source: Source = Source.SYNTHETIC
    sample_rate: float = SAMPLE_RATE
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.time, dtype=float)
        object.__setattr__(self, "time", t)
        if t.ndim != 1 or t.size < 2:
            raise TelemetryError("a trace needs at least two samples")
        for name in ("accel", "position"):
            arr = getattr(self, name)
            if arr is None:
                continue
            arr = np.asarray(arr, dtype=float)
            if arr.shape != (t.size, 3):
                raise TelemetryError(f"{name} must have shape ({t.size}, 3), got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise TelemetryError(f"non-finite {name} values")
            object.__setattr__(self, name, arr)
        if self.accel is None and self.position is None:
            raise TelemetryError("a trace needs an accel or a position channel")
        if not np.all(np.isfinite(t)):
            raise TelemetryError("non-finite time stamps")
        if not self.sample_rate > 0:
            raise TelemetryError("sample_rate must be positive")
        dt = np.diff(t)
        ts = 1.0 / self.sample_rate
        tol = 1e-9 if self.source is Source.SYNTHETIC else 0.5 * ts
        if np.any(np.abs(dt - ts) > tol):
            raise TelemetryError("non-uniform sampling (gap or jitter beyond tolerance)")

    def __len__(self) -> int:
        return self.time.size

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def vertical_accel(self) -> np.ndarray:
        if self.accel is None:
            raise TelemetryError("trace has no accel channel")
        return self.accel[:, 2]

    @property
    def vertical_position(self) -> np.ndarray:
        if self.position is None:
            raise TelemetryError("trace has no position channel")
        return self.position[:, 2]

    def with_(self, **changes) -> TelemetryTrace:
        return replace(self, **changes)

    def slice(self, start: int, stop: int | None = None) -> TelemetryTrace:
        sl = np.s_[start:stop]
        return replace(
            self,
            time=self.time[sl],
            accel=None if self.accel is None else self.accel[sl],
            position=None if self.position is None else self.position[sl],
        )

    def imu_view(self) -> TelemetryTrace:
        return replace(self, position=None, source=Source.IMU, metadata={**self.metadata, "view": "imu"})

    def mocap_view(self) -> TelemetryTrace:
        return replace(self, accel=None, source=Source.MOCAP, metadata={**self.metadata, "view": "mocap"})


def normalize_gravity(accel: np.ndarray, gravity_included: bool) -> np.ndarray:
    """Return gravity-excluded accel (rest = 0 on the vertical axis)."""
    a = np.array(accel, dtype=float)
    if gravity_included:
        a[:, 2] -= G
    return a


# ---------------------------------------------------------------------------
# CSV I/O

IMU_HEADER = ["t", "ax", "ay", "az"]
MOCAP_HEADER = ["t", "x", "y", "z"]


def _read_rows(text: str, header: list[str], where: str) -> np.ndarray:
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise TelemetryError(f"{where}: empty file")
    head = [c.strip() for c in rows[0]]
    if head != header:
        raise TelemetryError(f"{where}: expected header {','.join(header)}, got {','.join(head)}")
    data = []
    for n, r in enumerate(rows[1:], start=2):
        if len(r) != len(header):
            raise TelemetryError(f"{where}: line {n}: expected {len(header)} fields, got {len(r)}")
        try:
            data.append([float(c) for c in r])
        except ValueError as exc:
            raise TelemetryError(f"{where}: line {n}: {exc}") from None
    if len(data) < 2:
        raise TelemetryError(f"{where}: fewer than two samples")
    return np.array(data)


def _rate_from_time(t: np.ndarray, sample_rate: float | None) -> float:
    if sample_rate is not None:
        return float(sample_rate)
    rate = 1.0 / float(np.median(np.diff(t)))
    # timestamps written as k / fs carry rounding; snap to the nominal rate
    nominal = round(rate)
    return float(nominal) if nominal > 0 and abs(rate - nominal) < 1e-6 * nominal else rate


def parse_csv(text: str, *, where: str = "<string>", gravity_included: bool = False,
              sample_rate: float | None = None) -> TelemetryTrace:
    """Parse an IMU (``t,ax,ay,az``) or MoCap (``t,x,y,z``) CSV; the header decides."""
    first = text.lstrip().split("\n", 1)[0].strip() if text.strip() else ""
    head = [c.strip() for c in first.split(",")]
    if head == MOCAP_HEADER:
        d = _read_rows(text, MOCAP_HEADER, where)
        return TelemetryTrace(d[:, 0], None, d[:, 1:], Source.MOCAP, _rate_from_time(d[:, 0], sample_rate),
                              {"file": where})
    d = _read_rows(text, IMU_HEADER, where)
    accel = normalize_gravity(d[:, 1:], gravity_included)
    return TelemetryTrace(d[:, 0], accel, None, Source.IMU, _rate_from_time(d[:, 0], sample_rate),
                          {"file": where, "gravity_included_on_ingest": gravity_included})


def read_csv(path: str | Path, **kw) -> TelemetryTrace:
    path = Path(path)
    return parse_csv(path.read_text(), where=str(path), **kw)


def _fmt(x: float) -> str:
    return repr(float(x))


def to_csv(trace: TelemetryTrace, channel: str = "auto") -> str:
    """Serialize one channel; ``auto`` picks accel when present."""
    if channel == "auto":
        channel = "accel" if trace.accel is not None else "position"
    arr = trace.accel if channel == "accel" else trace.position
    if arr is None:
        raise TelemetryError(f"trace has no {channel} channel")
    header = IMU_HEADER if channel == "accel" else MOCAP_HEADER
    lines = [",".join(header)]
    for t, row in zip(trace.time, arr):
        lines.append(",".join([_fmt(t), *(_fmt(v) for v in row)]))
    return "\n".join(lines) + "\n"


def write_csv(trace: TelemetryTrace, path: str | Path, channel: str = "auto") -> Path:
    path = Path(path)
    path.write_text(to_csv(trace, channel))
    return path


# ---------------------------------------------------------------------------
# filtering


def butterworth_sos(cutoff: float, sample_rate: float, order: int = 4, btype: str = "lowpass") -> np.ndarray:
    nyq = sample_rate / 2.0
    edges = np.atleast_1d(cutoff)
    if np.any(edges <= 0) or np.any(edges >= nyq):
        raise TelemetryError(f"cutoff {cutoff} Hz must lie in (0, {nyq}) Hz")
    if order < 1:
        raise TelemetryError("filter order must be >= 1")
    return signal.butter(order, cutoff, btype=btype, fs=sample_rate, output="sos")


def lowpass(x: np.ndarray, cutoff: float, sample_rate: float = SAMPLE_RATE, order: int = 4) -> np.ndarray:
    """Zero-phase (forward-backward) Butterworth low-pass along axis 0.

    Two passes square the magnitude response, so the cutoff sits at -6 dB.
    """
    sos = butterworth_sos(cutoff, sample_rate, order)
    x = np.asarray(x, dtype=float)
    padlen = min(3 * (2 * len(sos) + 1), x.shape[0] - 1)
    return signal.sosfiltfilt(sos, x, axis=0, padlen=padlen)


def zero_phase_gain(freq: float, cutoff: float, sample_rate: float = SAMPLE_RATE, order: int = 4) -> float:
    """Analytic magnitude of the forward-backward digital Butterworth at ``freq``.

    The bilinear transform maps ``freq`` to the analog frequency
    ``tan(pi f / fs)``; the single-pass gain is ``1 / sqrt(1 + r^(2n))`` with
    ``r`` the ratio of warped frequencies, and the two passes square it.
    """
    r = math.tan(math.pi * freq / sample_rate) / math.tan(math.pi * cutoff / sample_rate)
    return 1.0 / (1.0 + r ** (2 * order))


def butterworth_lowpass(trace: TelemetryTrace, cutoff: float, order: int = 4) -> TelemetryTrace:
    fs = trace.sample_rate
    butterworth_sos(cutoff, fs, order)  # validate even for tiny traces
    return replace(
        trace,
        accel=None if trace.accel is None else lowpass(trace.accel, cutoff, fs, order),
        position=None if trace.position is None else lowpass(trace.position, cutoff, fs, order),
        metadata={**trace.metadata, "lowpass_hz": cutoff, "lowpass_order": order},
    )


def noise_sigma(x: np.ndarray) -> float:
    """Robust white-noise level from the MAD of first differences."""
    d = np.diff(np.asarray(x, dtype=float))
    if d.size == 0:
        return 0.0
    return float(1.4826 * np.median(np.abs(d - np.median(d))) / math.sqrt(2.0))


# ---------------------------------------------------------------------------
# velocity estimators


def _crossing(t0: float, a0: float, t1: float, a1: float) -> float:
    return t0 + (t1 - t0) * (a0 / (a0 - a1)) if a0 != a1 else t0


@dataclass(frozen=True)
class AccelImpact:
    impact_velocity: float
    peak_index: int
    peak_time: float
    impact_time: float  # rising zero crossing before the peak
    release_time: float  # falling zero crossing that opens the fall
    baseline: float


def locate_accel_impact(trace: TelemetryTrace, cutoff: float | None = None) -> AccelImpact:
    """Impact velocity from the vertical accel lobe before the impact peak.

    The two zero crossings preceding the peak bound the fall; the integral of
    the baseline-corrected accel between them is the velocity gained.  Samples
    are interval averages (what an averaging accelerometer reports), so each
    lobe sample contributes one full period; a trapezoid over the same
    samples would drop half a period at the impact end.
    """
    a = trace.vertical_accel
    if cutoff is not None:
        a = lowpass(a, cutoff, trace.sample_rate)
    t = trace.time
    ts = trace.dt
    sigma = noise_sigma(a)
    p = int(np.argmax(a))
    floor = NOISE_PEAK_FACTOR * max(sigma, 1e-9)
    if a[p] <= floor:
        raise NoImpactPeak("no impact peak above the noise floor")
    # rising crossing: last negative sample before the peak
    j = p
    while j > 0 and a[j - 1] >= 0:
        j -= 1
    if j == 0:
        raise TelemetryError("fewer than two zero crossings before the impact peak")
    k = j - 1  # last negative sample of the lobe
    i = k
    while i > 0 and a[i - 1] < 0:
        i -= 1
    if i == 0:
        raise TelemetryError("fewer than two zero crossings before the impact peak")
    lobe = a[i:k + 1]
    if lobe.min() > -floor:
        raise TelemetryError("no fall lobe above the noise floor before the impact peak")
    pre = a[max(0, i - int(0.1 * trace.sample_rate)):i]
    baseline = float(np.median(pre)) if pre.size else 0.0
    ac = a - baseline
    area = float(np.sum(ac[i:k + 1])) * ts
    # each sample stands for the interval after its stamp, so crossings are
    # interpolated between interval midpoints
    tm = t + 0.5 * ts
    t_in = _crossing(tm[i - 1], a[i - 1], tm[i], a[i])
    t_out = _crossing(tm[k], a[k], tm[k + 1], a[k + 1])
    return AccelImpact(abs(area), p, float(tm[p]), t_out, t_in, baseline)


def velocity_from_accel(trace: TelemetryTrace, cutoff: float | None = None) -> float:
    return locate_accel_impact(trace, cutoff).impact_velocity


def _perch_level(trace: TelemetryTrace, perch_height: float | None) -> float | None:
    if perch_height is not None:
        return float(perch_height)
    v = trace.metadata.get("perch_height")
    return None if v is None else float(v)


def velocity_from_position(trace: TelemetryTrace, *, smoothing_hz: float | None = 20.0,
                           perch_height: float | None = None,
                           approach_accel: float | None = None) -> tuple[np.ndarray, float]:
    """Velocity trace by central differences and the impact velocity.

    The returned velocity trace is differentiated after zero-phase smoothing;
    the impact velocity is the largest downward raw central difference, since
    smoothing blunts the stop at the perch.  When the perch level
    is known (argument or ``metadata['perch_height']``), the last approach
    samples are fitted with a parabola whose slope is taken where it meets
    the perch level; this removes the up-to-one-sample lag of the raw maximum.
    A known approach acceleration (argument, or ``-g`` when the metadata marks
    a free-fall approach) fixes the parabola's curvature.
    """
    if trace.position is None:
        raise TelemetryError("trace has no position channel")
    pos = trace.position
    smooth = pos if smoothing_hz is None or len(trace) < 16 else lowpass(pos, smoothing_hz, trace.sample_rate)
    vel = np.gradient(smooth, trace.dt, axis=0)
    raw_v = np.gradient(pos[:, 2], trace.dt)
    v_max = float(max((-raw_v).max(), 0.0))
    level = _perch_level(trace, perch_height)
    if level is None:
        return vel, v_max
    if approach_accel is None and trace.metadata.get("approach") == "free-fall":
        approach_accel = -G
    fitted = _fit_approach(trace.time, pos[:, 2], level, trace.dt, approach_accel)
    return vel, v_max if fitted is None else fitted


def _fit_approach(t: np.ndarray, z: np.ndarray, level: float, ts: float, accel: float | None) -> float | None:
    """Slope where a parabola through the last approach samples meets ``level``.

    With ``accel`` given (e.g. ``-g`` for a throttle-off fall) the curvature
    is fixed and only offset and slope are fitted; otherwise all three are.
    """
    below = np.nonzero(z <= level)[0]
    if below.size == 0 or below[0] < 3:
        return None
    c = int(below[0])
    idx = np.arange(max(0, c - FIT_SAMPLES), c)
    tt = t[idx] - t[c]
    coef = None
    for _ in range(3):
        if idx.size < 3:
            return None
        if accel is None:
            coef = np.polyfit(tt, z[idx] - level, 2)
        else:
            b, a0 = np.polyfit(tt, z[idx] - level - 0.5 * accel * tt * tt, 1)
            coef = np.array([0.5 * accel, b, a0])
        # keep only samples after the apex (the fall starts there)
        if coef[0] >= 0:
            break
        apex = -coef[1] / (2 * coef[0])
        keep = tt > apex
        if keep.all():
            break
        idx, tt = idx[keep], tt[keep]
    roots = np.roots(np.trim_zeros(coef, "f"))
    roots = roots[np.abs(roots.imag) < 1e-12].real
    # the crossing belongs to the last interval; noise may shift it a little
    mid = 0.5 * tt[-1]
    cand = roots[np.abs(roots - mid) <= 1.5 * ts]
    if cand.size == 0:
        return None
    t_hit = float(cand[np.argmin(np.abs(cand - mid))])
    slope = float(np.polyval(np.polyder(coef), t_hit))
    return max(-slope, 0.0)


def mocap_impact_time(trace: TelemetryTrace) -> float:
    """Time of the highest approach speed (used to align MoCap with IMU)."""
    vel, _ = velocity_from_position(trace, smoothing_hz=None)
    return float(trace.time[int(np.argmax(-vel[:, 2]))])


def estimate_impact_velocity(trace: TelemetryTrace) -> float:
    if trace.source is Source.IMU or trace.position is None:
        return velocity_from_accel(trace)
    return velocity_from_position(trace)[1]


def _impact_time(trace: TelemetryTrace) -> float:
    if trace.source is Source.IMU or trace.position is None:
        return locate_accel_impact(trace).impact_time
    return mocap_impact_time(trace)


@dataclass(frozen=True)
class PairResult:
    reference_velocity: float
    other_velocity: float
    discrepancy: float  # relative, fraction
    time_offset: float


@dataclass(frozen=True)
class CrossValidation:
    pairs: tuple[PairResult, ...]

    @property
    def discrepancies(self) -> np.ndarray:
        return np.array([p.discrepancy for p in self.pairs])

    @property
    def mean_pct(self) -> float:
        return float(100.0 * self.discrepancies.mean())

    @property
    def std_pct(self) -> float:
        d = self.discrepancies
        return float(100.0 * d.std(ddof=1)) if d.size > 1 else 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "n": len(self.pairs),
            "mean_pct": self.mean_pct,
            "std_pct": self.std_pct,
            "pairs": [p.__dict__ for p in self.pairs],
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["pair", "reference_mps", "other_mps", "discrepancy_pct", "time_offset_s"])
        for n, p in enumerate(self.pairs):
            w.writerow([n, f"{p.reference_velocity:.6f}", f"{p.other_velocity:.6f}",
                        f"{100 * p.discrepancy:.4f}", f"{p.time_offset:.6f}"])
        return buf.getvalue()


MAX_SYNC_OFFSET = 1.0


def cross_validate(reference: TelemetryTrace | Sequence[TelemetryTrace],
                   other: TelemetryTrace | Sequence[TelemetryTrace]) -> CrossValidation:
    """Relative impact-velocity discrepancy of ``other`` against ``reference``.

    Each pair is aligned at impact first; a pair whose impacts cannot be
    located or lie more than ``MAX_SYNC_OFFSET`` apart is rejected.
    """
    refs = [reference] if isinstance(reference, TelemetryTrace) else list(reference)
    others = [other] if isinstance(other, TelemetryTrace) else list(other)
    if len(refs) != len(others) or not refs:
        raise TelemetryError("need equally many (>= 1) reference and other traces")
    out = []
    for n, (r, o) in enumerate(zip(refs, others)):
        try:
            offset = _impact_time(o) - _impact_time(r)
        except TelemetryError as exc:
            raise SyncError(f"pair {n}: cannot locate impact ({exc})") from exc
        if abs(offset) > MAX_SYNC_OFFSET:
            raise SyncError(f"pair {n}: impacts {offset:.3f} s apart")
        vr = estimate_impact_velocity(r)
        vo = estimate_impact_velocity(o)
        if vr <= 0:
            raise SyncError(f"pair {n}: zero reference velocity")
        out.append(PairResult(vr, vo, abs(vo - vr) / vr, offset))
    return CrossValidation(tuple(out))


# ---------------------------------------------------------------------------
# cycle segmentation

PHASES = ("Approach", "Impact", "Perched", "SpinUp", "Release", "Takeoff")


@dataclass(frozen=True)
class PhaseInterval:
    name: str
    start: float
    end: float

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class CycleSegmentation:
    phases: tuple[PhaseInterval, ...]
    impact_velocity: float | None = None
    takeoff_end_velocity: float | None = None
    servo_cutoff_time: float | None = None
    impact_time: float | None = None
    spinup_onset: float | None = None
    release_time: float | None = None
    partial: bool = False
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        prev = None
        for ph in self.phases:
            if ph.name not in PHASES:
                raise TelemetryError(f"unknown phase {ph.name!r}")
            if ph.end < ph.start:
                raise TelemetryError(f"phase {ph.name} ends before it starts")
            if prev is not None:
                if PHASES.index(ph.name) <= PHASES.index(prev.name):
                    raise TelemetryError("phases out of order")
                if abs(ph.start - prev.end) > 1e-9:
                    raise TelemetryError(f"gap between {prev.name} and {ph.name}")
            prev = ph
        if self.impact_time is not None and self.release_time is not None and self.release_time < self.impact_time:
            raise TelemetryError("release precedes impact")

    def phase(self, name: str) -> PhaseInterval | None:
        for ph in self.phases:
            if ph.name == name:
                return ph
        return None

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.phases]

    @property
    def spinup_lead(self) -> float | None:
        if self.spinup_onset is None or self.release_time is None:
            return None
        return self.release_time - self.spinup_onset

    def to_dict(self) -> dict[str, Any]:
        return {
            "phases": [{"name": p.name, "start": p.start, "end": p.end} for p in self.phases],
            "impact_velocity": self.impact_velocity,
            "impact_time": self.impact_time,
            "servo_cutoff_time": self.servo_cutoff_time,
            "spinup_onset": self.spinup_onset,
            "spinup_lead": self.spinup_lead,
            "release_time": self.release_time,
            "takeoff_end_velocity": self.takeoff_end_velocity,
            "partial": self.partial,
            "notes": list(self.notes),
        }


def band_envelope(x: np.ndarray, sample_rate: float, band: tuple[float, float] = (15.0, 25.0),
                  order: int = 4) -> np.ndarray:
    """Hilbert envelope of the zero-phase band-passed signal."""
    sos = butterworth_sos(list(band), sample_rate, order, btype="bandpass")
    y = signal.sosfiltfilt(sos, np.asarray(x, dtype=float))
    return np.abs(signal.hilbert(y))


SPINUP_MIN_AMPLITUDE = 0.25  # m/s^2; impact ringing stays well below the flapping harmonic


def spinup_onset(trace: TelemetryTrace, start: float = -math.inf, band=(15.0, 25.0),
                 threshold: float = 0.5, min_amplitude: float = SPINUP_MIN_AMPLITUDE) -> float | None:
    """First time after ``start`` the flapping-band envelope reaches half its maximum.

    ``None`` when the envelope never rises above the noise or ``min_amplitude``.
    """
    env = band_envelope(trace.vertical_accel, trace.sample_rate, band)
    mask = trace.time >= start
    if not mask.any():
        return None
    idx = np.nonzero(mask)[0]
    e = env[idx]
    if e.max() <= max(2.0 * noise_sigma(trace.vertical_accel), min_amplitude):
        return None
    level = threshold * e.max()
    hit = int(np.argmax(e >= level))
    n = idx[hit]
    if hit == 0:
        return float(trace.time[n])
    t0, t1 = trace.time[n - 1], trace.time[n]
    return float(_crossing(t0, env[n - 1] - level, t1, env[n] - level))


def segment_cycle(trace: TelemetryTrace, *, servo_cutoff_delay: float = 0.5,
                  quiet_threshold: float = 1.0) -> CycleSegmentation:
    """Split a full-cycle accel trace into its six phases (best effort).

    Impact is the rising zero crossing before the acceleration peak.  The
    servo cutoff leaves no inertial signature; it is placed at the
    controller's fixed delay after the detected impact, and Perched runs from
    there to the onset of flapping-band energy (spin-up).  Release and
    lift-off bound the ramp of the low-passed climb acceleration.  Missing
    phases truncate the result and set ``partial``.
    """
    t = trace.time
    t_end = float(t[-1])
    try:
        imp = locate_accel_impact(trace)
    except NoImpactPeak:
        return CycleSegmentation((PhaseInterval("Perched", float(t[0]), t_end),), notes=("no impact detected",))
    except TelemetryError as exc:
        return CycleSegmentation((PhaseInterval("Approach", float(t[0]), t_end),), partial=True,
                                 notes=(f"impact not resolved: {exc}",))
    t_imp = imp.impact_time
    cutoff = t_imp + servo_cutoff_delay
    phases = [PhaseInterval("Approach", float(t[0]), t_imp)]
    notes: list[str] = []
    if cutoff >= t_end:
        phases.append(PhaseInterval("Impact", t_imp, t_end))
        return CycleSegmentation(tuple(phases), imp.impact_velocity, None, cutoff, t_imp, partial=True,
                                 notes=("trace ends before the servo cutoff",))
    phases.append(PhaseInterval("Impact", t_imp, cutoff))
    onset = spinup_onset(trace, start=cutoff)
    if onset is None:
        phases.append(PhaseInterval("Perched", cutoff, t_end))
        return CycleSegmentation(tuple(phases), imp.impact_velocity, None, cutoff, t_imp, partial=True,
                                 notes=("no spin-up detected",))
    lp = lowpass(trace.accel, 7.0, trace.sample_rate)
    quiet = np.linalg.norm(lp, axis=1)
    held = (t >= cutoff) & (t < onset)
    if held.any() and quiet[held].max() > quiet_threshold:
        notes.append("perched interval not quiescent")
    phases.append(PhaseInterval("Perched", cutoff, onset))
    ramp = _climb_ramp(t, lp, onset)
    if ramp is None:
        phases.append(PhaseInterval("SpinUp", onset, t_end))
        return CycleSegmentation(tuple(phases), imp.impact_velocity, None, cutoff, t_imp, onset, partial=True,
                                 notes=tuple(notes + ["no release detected"]))
    release, lift = ramp
    lift = min(max(lift, release), t_end)
    phases.append(PhaseInterval("SpinUp", onset, release))
    phases.append(PhaseInterval("Release", release, lift))
    phases.append(PhaseInterval("Takeoff", lift, t_end))
    v_end = takeoff_velocity(trace, release)
    return CycleSegmentation(tuple(phases), imp.impact_velocity, v_end, cutoff, t_imp, onset, release,
                             notes=tuple(notes))


def _climb_ramp(t: np.ndarray, lp: np.ndarray, onset: float) -> tuple[float, float] | None:
    """Start and end of the climb-out ramp in the low-passed vertical accel.

    A line through the first 25 % and 75 % crossings of the plateau level is
    extended down to zero (release) and up to the plateau (lift-off).
    """
    idx = np.nonzero(t >= onset)[0]
    if idx.size < 3:
        return None
    az = lp[idx, 2]
    peak = float(az.max())
    if peak <= 0:
        return None
    tt = t[idx]

    def first_cross(level: float) -> float:
        k = int(np.argmax(az >= level))
        if k == 0:
            return float(tt[0])
        return _crossing(tt[k - 1], az[k - 1] - level, tt[k], az[k] - level)

    t25, t75 = first_cross(0.25 * peak), first_cross(0.75 * peak)
    if t75 <= t25:
        return float(t25), float(t25)
    slope = 0.5 * peak / (t75 - t25)
    release = t25 - 0.25 * peak / slope
    return float(max(release, onset)), float(t25 + 0.75 * peak / slope)


def takeoff_velocity(trace: TelemetryTrace, release: float) -> float:
    """Speed reached at the end of the trace, integrating x/z accel from release."""
    t = trace.time
    # include the sample whose interval holds the release instant
    i = max(int(np.searchsorted(t, release, side="right")) - 1, 0)
    if i >= len(t) - 1:
        return 0.0
    a = trace.accel[i:, [0, 2]]
    v = a[:-1].sum(axis=0) * trace.dt
    return float(np.hypot(*v))


# ---------------------------------------------------------------------------
# synthetic traces


def _uniform_time(n: int, rate: float = SAMPLE_RATE) -> np.ndarray:
    return np.arange(n, dtype=float) / rate


def box_accel(vz: np.ndarray, rate: float = SAMPLE_RATE) -> np.ndarray:
    """Accel samples as interval averages: ``(v[i+1] - v[i]) * rate``.

    The last sample repeats the one before it.
    """
    a = np.empty_like(vz)
    a[:-1] = np.diff(vz) * rate
    a[-1] = a[-2] if vz.size > 1 else 0.0
    return a


def trace_from_simulation(rec: np.ndarray, scenario, t_contact: float, *, pre_roll: float = PRE_ROLL,
                          rate: float = SAMPLE_RATE) -> TelemetryTrace:
    """Build the 250 Hz synthetic trace for a simulated attempt.

    ``rec`` holds the integrator rows ``t, y, vy, force, psi`` starting at
    contact.  The free fall is prepended in closed form, so the trace begins
    with the vehicle at rest and contact falls on a sample boundary.
    """
    ts = 1.0 / rate
    y_sim = rec[:, 1]
    vy_sim = rec[:, 2]
    v = float(scenario.nominal_velocity)
    t_ff = v / G if v > 0 else 0.0
    n_pre = int(math.ceil(t_ff * rate - 1e-9)) + int(round(pre_roll * rate))
    tk = -np.arange(n_pre, 0, -1, dtype=float) * ts
    falling = tk >= -t_ff
    vy_pre = np.where(falling, -(v + G * tk), 0.0)
    y_pre = np.where(falling, -v * tk - 0.5 * G * tk * tk, v * v / (2 * G))
    t_imp = n_pre * ts if t_contact >= 0 else None
    vz = np.concatenate([vy_pre, vy_sim])
    z = np.concatenate([y_pre, y_sim])
    n = vz.size
    accel = np.zeros((n, 3))
    accel[:, 2] = box_accel(vz, rate)
    pos = np.zeros((n, 3))
    pos[:, 2] = z
    # the last row has no following sample to average over
    meta = {
        "perch_height": 0.0,
        "approach": "free-fall",
        "t_impact": t_imp,
        "true_impact_velocity": scenario.nominal_velocity,
        "gravity_included": False,
    }
    return TelemetryTrace(_uniform_time(n - 1, rate), accel[:-1], pos[:-1], Source.SYNTHETIC, rate, meta)


def drop_trace(velocity: float, *, post: float = 0.4, pre_roll: float = PRE_ROLL, rate: float = SAMPLE_RATE,
               z0: float = 0.0) -> TelemetryTrace:
    """Ideal free fall onto a rigid stop: rest, fall, then rest at the perch level.

    No fork dynamics; used where only the approach matters.
    """
    ts = 1.0 / rate
    v = float(velocity)
    t_ff = v / G
    n_pre = int(math.ceil(t_ff * rate - 1e-9)) + int(round(pre_roll * rate))
    tk = -np.arange(n_pre, 0, -1, dtype=float) * ts
    falling = tk >= -t_ff
    n_post = int(round(post * rate)) + 1
    stop = np.zeros(n_post)
    stop[0] = -v  # contact instant; stopped from the next sample on
    vz = np.concatenate([np.where(falling, -(v + G * tk), 0.0), stop])
    z = np.concatenate([np.where(falling, -v * tk - 0.5 * G * tk * tk, v * v / (2 * G)), np.zeros(n_post)]) + z0
    n = vz.size
    accel = np.zeros((n, 3))
    accel[:, 2] = box_accel(vz, rate)
    pos = np.zeros((n, 3))
    pos[:, 2] = z
    meta = {"perch_height": z0, "approach": "free-fall", "t_impact": n_pre * ts, "true_impact_velocity": v, "gravity_included": False}
    return TelemetryTrace(_uniform_time(n - 1, rate), accel[:-1], pos[:-1], Source.SYNTHETIC, rate, meta)


@dataclass(frozen=True)
class NoiseModel:
    imu_noise_std: float = 0.6
    flap_amplitude: float = 0.8
    flap_frequency: float = 19.0
    scale_std: float = 0.05
    mocap_noise_std: float = 0.0002

    @classmethod
    def from_calibration(cls, cal) -> NoiseModel:
        return cls(cal["imu.noise_std"], cal["imu.flap_amplitude"], cal["flap_frequency"], cal["imu.scale_std"],
                   cal["mocap.noise_std"])


def add_imu_noise(trace: TelemetryTrace, rng: np.random.Generator, noise: NoiseModel,
                  flapping: np.ndarray | None = None) -> TelemetryTrace:
    """IMU view with scale error, white noise and the flapping harmonic.

    ``flapping`` is an optional per-sample amplitude factor (motors on = 1).
    """
    if trace.accel is None:
        raise TelemetryError("trace has no accel channel")
    scale = 1.0 + noise.scale_std * rng.standard_normal()
    phase = rng.uniform(0.0, 2 * math.pi)
    a = trace.accel * scale + noise.imu_noise_std * rng.standard_normal(trace.accel.shape)
    gate = np.ones(len(trace)) if flapping is None else np.asarray(flapping, dtype=float)
    a[:, 2] += noise.flap_amplitude * gate * np.sin(2 * math.pi * noise.flap_frequency * trace.time + phase)
    return replace(trace, accel=a, position=None, source=Source.IMU,
                   metadata={**trace.metadata, "imu_scale": scale})


def add_mocap_noise(trace: TelemetryTrace, rng: np.random.Generator, noise: NoiseModel) -> TelemetryTrace:
    if trace.position is None:
        raise TelemetryError("trace has no position channel")
    p = trace.position + noise.mocap_noise_std * rng.standard_normal(trace.position.shape)
    return replace(trace, accel=None, position=p, source=Source.MOCAP)


CORPUS_SIZE = 26
CORPUS_SEED = 2024


def synthetic_corpus(n: int = CORPUS_SIZE, seed: int = CORPUS_SEED, velocities: Iterable[float] | None = None,
                     noise: NoiseModel | None = None, simulate: bool = True) -> list[tuple[TelemetryTrace, TelemetryTrace]]:
    """Paired (MoCap, IMU) drops with the default noise model.

    Pair ``i`` draws its noise from ``SeedSequence(seed, spawn_key=(i,))``.
    """
    from .core import catalog_perch
    from .dynamics import ApproachScenario, simulate_attempt

    noise = noise or NoiseModel.from_calibration(_default_cal())
    vs = list(np.linspace(0.3, 1.3, n)) if velocities is None else [float(v) for v in velocities]
    out = []
    for i, v in enumerate(vs):
        if simulate:
            clean = simulate_attempt(ApproachScenario(catalog_perch("wood-40"), impact_velocity=v)).trace
            clean = clean.slice(0, int(round((PRE_ROLL + v / G + 0.4) * SAMPLE_RATE)))
        else:
            clean = drop_trace(v)
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
        mocap = add_mocap_noise(clean, rng, noise)
        imu = add_imu_noise(clean, rng, noise)
        out.append((mocap, imu))
    return out


def _default_cal():
    from .calibration import default_calibration

    return default_calibration()
