"""Core domain types and time alignment shared by every pipeline stage.

All types are immutable after construction (arrays are marked read-only),
so they can be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import RangeError, ValidationError

# Activity labels are plain strings; configs declare the closed label space.
ActivityLabel = str

TRUTH_KINDS = ("primary", "auxiliary")


@dataclass(frozen=True)
class Interval:
    """Half-open time interval [start_ms, end_ms) on the scenario clock."""

    start_ms: float
    end_ms: float

    def __post_init__(self):
        if not np.isfinite(self.start_ms) or not np.isfinite(self.end_ms):
            raise ValidationError("interval endpoints must be finite")
        if not self.start_ms < self.end_ms:
            raise ValidationError(
                f"interval start must precede end, got [{self.start_ms}, {self.end_ms})"
            )

    @property
    def duration_ms(self) -> float:
        return self.end_ms - self.start_ms

    def contains(self, other: "Interval") -> bool:
        return self.start_ms <= other.start_ms and other.end_ms <= self.end_ms

    def contains_time(self, t_ms: float) -> bool:
        return self.start_ms <= t_ms < self.end_ms

    def intersects(self, other: "Interval") -> bool:
        return self.start_ms < other.end_ms and other.start_ms < self.end_ms

    def overlap_ms(self, other: "Interval") -> float:
        return max(0.0, min(self.end_ms, other.end_ms) - max(self.start_ms, other.start_ms))

    def dilate(self, pre_ms: float, post_ms: float) -> "Interval":
        return Interval(self.start_ms - pre_ms, self.end_ms + post_ms)

    def hull(self, other: "Interval") -> "Interval":
        return Interval(min(self.start_ms, other.start_ms), max(self.end_ms, other.end_ms))

    def shift(self, delta_ms: float) -> "Interval":
        return Interval(self.start_ms + delta_ms, self.end_ms + delta_ms)


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ImuStream:
    """Timestamped tri-axial accelerometer series for one user.

    ``t_ms`` is strictly increasing, ``acc`` holds (ax, ay, az) rows in m/s².
    The effective rate must stay within ±10% of ``rate_hz`` over any 10 s span.
    """

    user_id: str
    t_ms: np.ndarray
    acc: np.ndarray
    rate_hz: float = 50.0

    def __post_init__(self):
        t = _freeze(np.asarray(self.t_ms).reshape(-1))
        acc = _freeze(np.asarray(self.acc))
        object.__setattr__(self, "t_ms", t)
        object.__setattr__(self, "acc", acc)
        if t.size == 0:
            raise ValidationError(f"IMU stream for {self.user_id!r} is empty")
        if acc.ndim != 2 or acc.shape != (t.size, 3):
            raise ValidationError(
                f"acc must be (n, 3) matching timestamps, got {acc.shape} for n={t.size}"
            )
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(acc))):
            raise ValidationError("IMU samples must be finite")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            bad = int(np.argmax(np.diff(t) <= 0)) + 1
            raise ValidationError(f"timestamps must be strictly increasing (sample {bad})")
        if self.rate_hz <= 0:
            raise ValidationError("rate_hz must be positive")
        self._check_rate_stability()

    def _check_rate_stability(self, span_ms: float = 10_000.0, tol: float = 0.10):
        t = self.t_ms
        if t[-1] - t[0] < span_ms:
            return
        starts = np.nonzero(t + span_ms <= t[-1] + 1e-9)[0]
        ends = np.searchsorted(t, t[starts] + span_ms, side="right") - 1
        span = t[ends] - t[starts]
        counts = ends - starts
        rates = 1000.0 * counts / span
        lo, hi = self.rate_hz * (1 - tol), self.rate_hz * (1 + tol)
        if np.any(rates < lo) or np.any(rates > hi):
            i = int(np.argmax((rates < lo) | (rates > hi)))
            raise ValidationError(
                f"sampling rate {rates[i]:.2f} Hz over 10 s span at t={t[starts[i]]:.0f} ms "
                f"outside {lo:.1f}-{hi:.1f} Hz"
            )

    @property
    def n_samples(self) -> int:
        return int(self.t_ms.size)

    @property
    def start_ms(self) -> float:
        return float(self.t_ms[0])

    @property
    def end_ms(self) -> float:
        """Extent end: last timestamp plus one nominal sample period."""
        return float(self.t_ms[-1] + 1000.0 / self.rate_hz)

    def shifted(self, delta_ms: float) -> "ImuStream":
        return ImuStream(self.user_id, self.t_ms + delta_ms, self.acc, self.rate_hz)


@dataclass(frozen=True)
class AudioStream:
    """Mono PCM series normalized to [-1, 1], starting at ``t0_ms``."""

    samples: np.ndarray
    rate_hz: float = 44100.0
    t0_ms: float = 0.0

    def __post_init__(self):
        s = _freeze(np.asarray(self.samples).reshape(-1))
        object.__setattr__(self, "samples", s)
        if self.rate_hz <= 0:
            raise ValidationError("audio rate must be positive")
        if s.size and not np.all(np.isfinite(s)):
            raise ValidationError("audio samples must be finite")
        if s.size and float(np.max(np.abs(s))) > 1.0 + 1e-9:
            raise ValidationError("audio samples must lie in [-1, 1]")

    @property
    def n_samples(self) -> int:
        return int(self.samples.size)

    @property
    def duration_ms(self) -> float:
        return 1000.0 * self.samples.size / self.rate_hz

    @property
    def end_ms(self) -> float:
        return self.t0_ms + self.duration_ms

    def shifted(self, delta_ms: float) -> "AudioStream":
        return AudioStream(self.samples, self.rate_hz, self.t0_ms + delta_ms)


@dataclass(frozen=True)
class TruthRecord:
    """One ground-truth activity interval for one user."""

    user: str
    interval: Interval
    label: ActivityLabel
    kind: str = "primary"

    def __post_init__(self):
        if self.kind not in TRUTH_KINDS:
            raise ValidationError(f"truth kind must be one of {TRUTH_KINDS}, got {self.kind!r}")


@dataclass(frozen=True)
class Scenario:
    """Two users' IMU streams plus the shared audio context over [0, horizon].

    ``imu_b`` may be None for a single-user scenario (used only as augmentation
    input). Streams produced by ``augment_pair`` may end before ``horizon_ms``
    when inputs had unequal lengths; the audio always covers the full horizon.
    """

    imu_a: ImuStream
    imu_b: ImuStream | None
    audio: AudioStream
    horizon_ms: float
    truth: tuple[TruthRecord, ...] | None = None

    def __post_init__(self):
        if self.truth is not None:
            object.__setattr__(self, "truth", tuple(self.truth))
        if self.horizon_ms <= 0:
            raise ValidationError("horizon must be positive")
        period_audio = 1000.0 / self.audio.rate_hz
        if self.audio.t0_ms > period_audio or self.audio.end_ms < self.horizon_ms - period_audio:
            raise ValidationError(
                f"audio covers [{self.audio.t0_ms:.1f}, {self.audio.end_ms:.1f}] ms, "
                f"not [0, {self.horizon_ms:.1f}]"
            )
        users = set()
        for imu in self.imu_streams():
            period = 1000.0 / imu.rate_hz
            if imu.start_ms > period:
                raise ValidationError(
                    f"IMU stream {imu.user_id!r} starts at {imu.start_ms:.1f} ms, after epoch"
                )
            if imu.end_ms > self.horizon_ms + period:
                raise ValidationError(
                    f"IMU stream {imu.user_id!r} extends past the horizon"
                )
            users.add(imu.user_id)
        if self.imu_b is not None and self.imu_a.user_id == self.imu_b.user_id:
            raise ValidationError("the two IMU streams must belong to distinct users")
        if self.truth:
            for rec in self.truth:
                if rec.user not in users:
                    raise ValidationError(f"truth record for unknown user {rec.user!r}")
            for user in users:
                ivs = sorted(
                    (r.interval for r in self.truth if r.user == user),
                    key=lambda iv: iv.start_ms,
                )
                for prev, nxt in zip(ivs, ivs[1:]):
                    if prev.intersects(nxt):
                        raise ValidationError(
                            f"overlapping truth intervals for {user!r} at {nxt.start_ms:.0f} ms"
                        )

    @property
    def is_dual(self) -> bool:
        return self.imu_b is not None

    def imu_streams(self) -> tuple[ImuStream, ...]:
        if self.imu_b is None:
            return (self.imu_a,)
        return (self.imu_a, self.imu_b)

    @property
    def users(self) -> tuple[str, ...]:
        return tuple(s.user_id for s in self.imu_streams())

    def imu_for(self, user: str) -> ImuStream:
        for s in self.imu_streams():
            if s.user_id == user:
                return s
        raise ValidationError(f"no IMU stream for user {user!r}")

    def truth_for(self, user: str) -> tuple[TruthRecord, ...]:
        if self.truth is None:
            return ()
        return tuple(r for r in self.truth if r.user == user)

    def primary_label_for(self, user: str) -> ActivityLabel | None:
        labels = {r.label for r in self.truth_for(user) if r.kind == "primary"}
        if len(labels) == 1:
            return labels.pop()
        return None


def slice_audio(a: AudioStream, w: Interval) -> AudioStream:
    """Extract the audio samples falling inside ``w``; t0 becomes w.start_ms."""
    period = 1000.0 / a.rate_hz
    if w.start_ms < a.t0_ms - period / 2 or w.end_ms > a.end_ms + period / 2:
        raise RangeError(
            f"slice [{w.start_ms:.1f}, {w.end_ms:.1f}] outside audio extent "
            f"[{a.t0_ms:.1f}, {a.end_ms:.1f}]"
        )
    i0 = int(round((w.start_ms - a.t0_ms) * a.rate_hz / 1000.0))
    i1 = int(round((w.end_ms - a.t0_ms) * a.rate_hz / 1000.0))
    i0 = max(0, i0)
    i1 = min(a.n_samples, i1)
    return AudioStream(a.samples[i0:i1], a.rate_hz, w.start_ms)


def slice_imu(s: ImuStream, w: Interval) -> ImuStream:
    """Extract the IMU samples with timestamps in [w.start, w.end)."""
    period = 1000.0 / s.rate_hz
    if w.start_ms < s.start_ms - period / 2 or w.end_ms > s.end_ms + period / 2:
        raise RangeError(
            f"slice [{w.start_ms:.1f}, {w.end_ms:.1f}] outside IMU extent "
            f"[{s.start_ms:.1f}, {s.end_ms:.1f}]"
        )
    mask = (s.t_ms >= w.start_ms) & (s.t_ms < w.end_ms)
    if not np.any(mask):
        raise RangeError(f"slice [{w.start_ms:.1f}, {w.end_ms:.1f}] contains no IMU samples")
    return ImuStream(s.user_id, s.t_ms[mask], s.acc[mask], s.rate_hz)
