"""Seeded synthetic dual-user scenario generator and augmentation mixer.

Each user alternates long primary-activity runs with short pauses (gap
durations are exponential with the configured mean, clipped to at least
1.2 s). During a pause the user's audio band falls silent while the IMU
switches to a low-amplitude auxiliary signature that starts slightly early,
mirroring how wearables record the transition before the sound actually
stops or resumes. The global audio is the additive mix of both users' band
signals plus a broadband noise floor and occasional spurious bursts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import ValidationError
from .model import AudioStream, ImuStream, Interval, Scenario, TruthRecord

MIN_GAP_MS = 1200.0
MAX_GAP_MS = 12_000.0
MIN_RUN_MS = 4000.0
EDGE_RAMP_MS = 30.0


@dataclass(frozen=True)
class ImuSignature:
    base_hz: float
    amplitude: float
    phases: tuple[float, float, float] = (0.0, 2.094, 4.189)
    jitter_sigma: float = 0.5

    def __post_init__(self):
        if self.base_hz <= 0 or self.amplitude <= 0:
            raise ValidationError("IMU signature frequency and amplitude must be positive")
        if self.jitter_sigma < 0:
            raise ValidationError("jitter must be non-negative")


@dataclass(frozen=True)
class ActivityProfile:
    label: str
    audio_band_hz: tuple[float, float]
    audio_amplitude: float
    imu: ImuSignature
    mean_gap_s: float
    gap_rate_per_min: float
    transition_lead_ms: float = 300.0
    texture: str = "bursts"  # "bursts": stroke-like events; "steady": sustained hiss
    aux_label: str = ""

    def __post_init__(self):
        lo, hi = self.audio_band_hz
        if not 0 < lo < hi:
            raise ValidationError(f"invalid audio band [{lo}, {hi}] for {self.label!r}")
        if self.audio_amplitude < 0 or self.mean_gap_s < 0 or self.gap_rate_per_min < 0:
            raise ValidationError("profile amplitudes and gap statistics must be non-negative")
        if self.transition_lead_ms < 0:
            raise ValidationError("transition lead must be non-negative")
        if self.texture not in ("bursts", "steady"):
            raise ValidationError(f"unknown audio texture {self.texture!r}")
        if not self.aux_label:
            object.__setattr__(self, "aux_label", f"{self.label}-aux")


@dataclass(frozen=True)
class SynthConfig:
    duration_s: float
    profiles: Mapping[str, ActivityProfile]
    rng_seed: int
    noise_floor: float = 0.01
    spurious_event_rate_per_min: float = 1.0
    imu_rate_hz: float = 50.0
    audio_rate_hz: float = 44100.0

    def __post_init__(self):
        object.__setattr__(self, "profiles", dict(self.profiles))
        if self.duration_s < 60:
            raise ValidationError("scenarios must cover at least 60 s")
        if not 1 <= len(self.profiles) <= 2:
            raise ValidationError("need one or two user profiles")
        nyquist = self.audio_rate_hz / 2
        for user, prof in self.profiles.items():
            if prof.audio_band_hz[1] >= nyquist:
                raise ValidationError(
                    f"audio band for {user!r} exceeds the Nyquist frequency"
                )
        if self.noise_floor < 0 or self.spurious_event_rate_per_min < 0:
            raise ValidationError("noise parameters must be non-negative")


def _build_timeline(prof: ActivityProfile, duration_ms: float, rng) -> tuple[list, list]:
    """Alternating (runs, gaps) covering [0, duration]; may contain zero gaps."""
    if prof.gap_rate_per_min <= 0 or prof.mean_gap_s <= 0:
        return [Interval(0.0, duration_ms)], []
    cycle_ms = 60_000.0 / prof.gap_rate_per_min
    mean_run_ms = max(cycle_ms - prof.mean_gap_s * 1000.0, MIN_RUN_MS)
    runs, gaps = [], []
    t = 0.0
    while t < duration_ms:
        # gamma-shaped run lengths keep the pause count stable across seeds
        run = max(MIN_RUN_MS, rng.gamma(4.0, mean_run_ms / 4.0))
        run_end = min(t + run, duration_ms)
        runs.append(Interval(t, run_end))
        t = run_end
        if t >= duration_ms:
            break
        gap = float(np.clip(rng.exponential(prof.mean_gap_s * 1000.0), MIN_GAP_MS, MAX_GAP_MS))
        if t + gap > duration_ms - MIN_GAP_MS:
            runs[-1] = Interval(runs[-1].start_ms, duration_ms)
            break
        gaps.append(Interval(t, t + gap))
        t += gap
    return runs, gaps


AUX_BAND_HZ = (0.3, 1.3)  # slow positioning movements during pauses


def _band_motion(band_hz, amplitude: float, phases, n: int, fs: float,
                 rng) -> np.ndarray:
    """Broadband tri-axial motion with energy inside ``band_hz``.

    Real activity signatures are not phase-locked, so the motion is modelled
    as band-limited Gaussian noise (a shared quadrature pair projected onto
    the three axes with the configured phase offsets). Windows taken seconds
    apart then share one stationary distribution, while a signature change
    shifts both the band and the power.
    """
    from scipy import signal as sps

    lo = max(0.05, band_hz[0])
    hi = min(0.95 * fs / 2, band_hz[1])
    sos = sps.butter(2, [lo, hi], btype="bandpass", fs=fs, output="sos")
    i_comp = sps.sosfilt(sos, rng.standard_normal(n))
    q_comp = sps.sosfilt(sos, rng.standard_normal(n))
    scale = np.sqrt(0.5 * (np.var(i_comp) + np.var(q_comp)))
    if scale > 0:
        i_comp /= scale
        q_comp /= scale
    rms = amplitude / np.sqrt(2.0)
    out = np.empty((n, 3))
    for axis, ph in enumerate(phases):
        out[:, axis] = rms * (np.cos(ph) * i_comp - np.sin(ph) * q_comp)
    return out


def _imu_band(base_hz: float, fs: float) -> tuple[float, float]:
    """Activity energy band derived from the characteristic stroke rate."""
    return (max(1.6, 0.5 * base_hz), min(0.45 * fs, 2.8 * base_hz + 2.0))


def _synth_imu(user: str, prof: ImuSignature, aux_windows, duration_ms: float,
               rate_hz: float, rng) -> ImuStream:
    n = int(round(duration_ms * rate_hz / 1000.0))
    t_ms = np.arange(n) * (1000.0 / rate_hz)
    aux = np.zeros(n, dtype=bool)
    for w in aux_windows:
        aux |= (t_ms >= w.start_ms) & (t_ms < w.end_ms)
    active = _band_motion(_imu_band(prof.base_hz, rate_hz), prof.amplitude,
                          prof.phases, n, rate_hz, rng)
    low = _band_motion(AUX_BAND_HZ, 0.3 * prof.amplitude,
                       tuple(p + 1.1 for p in prof.phases), n, rate_hz, rng)
    acc = np.where(aux[:, None], low, active)
    acc += rng.normal(0.0, prof.jitter_sigma, size=(n, 3))
    acc[:, 2] += 9.81
    return ImuStream(user, t_ms, acc, rate_hz)


def _band_tones(prof: ActivityProfile, n: int, rate_hz: float, rng) -> np.ndarray:
    lo, hi = prof.audio_band_hz
    width = hi - lo
    freqs = np.linspace(lo + 0.1 * width, hi - 0.1 * width, 5)
    phases = rng.uniform(0.0, 2 * np.pi, size=freqs.size)
    t = np.arange(n) / rate_hz
    sig = np.zeros(n)
    for f, ph in zip(freqs, phases):
        sig += np.sin(2 * np.pi * f * t + ph)
    return prof.audio_amplitude / freqs.size * sig


def _burst_envelope(stroke_hz: float, n: int, rate_hz: float, rng) -> np.ndarray:
    """Stroke-like intensity: jittered bursts at the activity's stroke rate.

    Keeps consecutive one-second segments acoustically similar (same carrier)
    while their common power fluctuates the way real impact sounds do.
    """
    env = np.zeros(n)
    period = 1.0 / max(stroke_hz, 0.2)
    burst_len = max(1, int(round(0.9 * period * rate_hz)))
    ramp = 0.5 * (1 - np.cos(np.linspace(0, 2 * np.pi, burst_len)))
    t = 0.0
    while t * rate_hz < n:
        start = int(round(t * rate_hz))
        gain = 0.85 + 0.3 * rng.random()
        stop = min(n, start + burst_len)
        env[start:stop] = np.maximum(env[start:stop], gain * ramp[: stop - start])
        t += period * (0.9 + 0.2 * rng.random())
    return env


def _steady_envelope(n: int, rate_hz: float, rng) -> np.ndarray:
    """Slowly wandering intensity for sustained sounds (sizzle-like)."""
    coarse_rate = 50.0
    m = max(2, int(np.ceil(n / rate_hz * coarse_rate)) + 1)
    alpha = float(np.exp(-1.0 / (0.5 * coarse_rate)))
    eps = rng.standard_normal(m)
    track = np.empty(m)
    track[0] = eps[0]
    scale = np.sqrt(1.0 - alpha * alpha)
    for i in range(1, m):
        track[i] = alpha * track[i - 1] + scale * eps[i]
    env = np.clip(1.0 + 0.5 * track, 0.15, None)
    coarse_t = np.arange(m) / coarse_rate
    return np.interp(np.arange(n) / rate_hz, coarse_t, env)


def _activity_envelope(gaps, n: int, rate_hz: float) -> np.ndarray:
    env = np.ones(n)
    ramp_n = max(1, int(round(EDGE_RAMP_MS * rate_hz / 1000.0)))
    fall = 0.5 * (1 + np.cos(np.linspace(0, np.pi, ramp_n)))
    for g in gaps:
        i0 = int(round(g.start_ms * rate_hz / 1000.0))
        i1 = int(round(g.end_ms * rate_hz / 1000.0))
        i0, i1 = max(0, i0), min(n, i1)
        if i1 <= i0:
            continue
        env[i0:i1] = 0.0
        env[i0 : min(i0 + ramp_n, i1)] = fall[: min(ramp_n, i1 - i0)]
        rise_n = min(ramp_n, i1 - i0)
        env[i1 - rise_n : i1] = fall[:rise_n][::-1]
    return env


def generate(cfg: SynthConfig) -> Scenario:
    """Build a fully ground-truthed scenario from a seeded config."""
    rng = np.random.default_rng(cfg.rng_seed)
    duration_ms = cfg.duration_s * 1000.0
    users = sorted(cfg.profiles)

    timelines = {u: _build_timeline(cfg.profiles[u], duration_ms, rng) for u in users}
    if all(len(gaps) == 0 for _, gaps in timelines.values()):
        raise ValidationError(
            "configuration yields zero gaps for every user; the mapper cannot run"
        )

    imu_streams = []
    for u in users:
        prof = cfg.profiles[u]
        _, gaps = timelines[u]
        aux_windows = [g.shift(-prof.transition_lead_ms) for g in gaps]
        imu_streams.append(
            _synth_imu(u, prof.imu, aux_windows, duration_ms, cfg.imu_rate_hz, rng)
        )

    n_audio = int(round(cfg.duration_s * cfg.audio_rate_hz))
    mix = np.zeros(n_audio)
    for u in users:
        prof = cfg.profiles[u]
        _, gaps = timelines[u]
        tones = _band_tones(prof, n_audio, cfg.audio_rate_hz, rng)
        if prof.texture == "bursts":
            tones *= 1.4 * _burst_envelope(prof.imu.base_hz, n_audio, cfg.audio_rate_hz, rng)
        else:
            tones *= _steady_envelope(n_audio, cfg.audio_rate_hz, rng)
        mix += tones * _activity_envelope(gaps, n_audio, cfg.audio_rate_hz)
    if cfg.noise_floor > 0:
        mix += cfg.noise_floor * rng.standard_normal(n_audio)
    if cfg.spurious_event_rate_per_min > 0:
        n_bursts = int(rng.poisson(cfg.spurious_event_rate_per_min * cfg.duration_s / 60.0))
        burst_n = int(round(0.2 * cfg.audio_rate_hz))
        window = np.hanning(burst_n)
        for _ in range(n_bursts):
            start = int(rng.uniform(0, max(1, n_audio - burst_n)))
            mix[start : start + burst_n] += 0.2 * window * rng.standard_normal(burst_n)
    audio = AudioStream(np.clip(mix, -1.0, 1.0), cfg.audio_rate_hz, 0.0)

    truth = []
    for u in users:
        prof = cfg.profiles[u]
        runs, gaps = timelines[u]
        events = [(iv, prof.label, "primary") for iv in runs]
        events += [(iv, prof.aux_label, "auxiliary") for iv in gaps]
        events.sort(key=lambda e: e[0].start_ms)
        truth.extend(TruthRecord(u, iv, lab, kind) for iv, lab, kind in events)

    imu_b = imu_streams[1] if len(imu_streams) == 2 else None
    return Scenario(imu_streams[0], imu_b, audio, duration_ms, tuple(truth))


def augment_pair(solo_a: Scenario, solo_b: Scenario) -> Scenario:
    """Mix two single-user scenarios into a virtual dual-occupant scenario.

    Streams are re-based to the earliest epoch among inputs, audio is added
    sample-wise (the shorter input zero-padded) with soft peak limiting, and
    IMU streams pass through untouched so per-user instance counts are
    preserved exactly.
    """
    for scn in (solo_a, solo_b):
        if scn.is_dual:
            raise ValidationError("augment_pair expects single-user scenarios")
        if scn.truth is None:
            raise ValidationError("augmentation inputs must carry ground truth")
    if solo_a.audio.rate_hz != solo_b.audio.rate_hz:
        raise ValidationError("audio rate mismatch between augmentation inputs")
    if solo_a.imu_a.rate_hz != solo_b.imu_a.rate_hz:
        raise ValidationError("IMU rate mismatch between augmentation inputs")
    if solo_a.imu_a.user_id == solo_b.imu_a.user_id:
        raise ValidationError("augmentation inputs must belong to distinct users")

    epoch = min(solo_a.imu_a.start_ms, solo_b.imu_a.start_ms,
                solo_a.audio.t0_ms, solo_b.audio.t0_ms)
    imu_a = solo_a.imu_a.shifted(-epoch)
    imu_b = solo_b.imu_a.shifted(-epoch)
    aud_a = solo_a.audio.shifted(-epoch)
    aud_b = solo_b.audio.shifted(-epoch)

    rate = aud_a.rate_hz
    off_a = int(round(aud_a.t0_ms * rate / 1000.0))
    off_b = int(round(aud_b.t0_ms * rate / 1000.0))
    n = max(off_a + aud_a.n_samples, off_b + aud_b.n_samples)
    mix = np.zeros(n)
    mix[off_a : off_a + aud_a.n_samples] += aud_a.samples
    mix[off_b : off_b + aud_b.n_samples] += aud_b.samples
    peak = float(np.max(np.abs(mix))) if n else 0.0
    if peak > 1.0:
        mix = mix / peak
    audio = AudioStream(mix, rate, 0.0)

    truth = []
    for scn in (solo_a, solo_b):
        for rec in scn.truth:
            truth.append(TruthRecord(rec.user, rec.interval.shift(-epoch), rec.label, rec.kind))
    truth.sort(key=lambda r: (r.user, r.interval.start_ms))
    horizon = max(solo_a.horizon_ms - epoch, solo_b.horizon_ms - epoch, audio.end_ms)
    return Scenario(imu_a, imu_b, audio, horizon, tuple(truth))


WORKSHOP_PROFILES = {
    "U1": ActivityProfile(
        label="hammer",
        audio_band_hz=(150.0, 400.0),
        audio_amplitude=0.30,
        imu=ImuSignature(base_hz=3.2, amplitude=7.0, phases=(0.0, 2.094, 4.189),
                         jitter_sigma=0.4),
        mean_gap_s=2.0,
        gap_rate_per_min=1.5,
    ),
    "U2": ActivityProfile(
        label="saw",
        audio_band_hz=(2400.0, 3600.0),
        audio_amplitude=0.30,
        imu=ImuSignature(base_hz=2.1, amplitude=6.0, phases=(0.5, 2.6, 4.7),
                         jitter_sigma=0.35),
        mean_gap_s=2.0,
        gap_rate_per_min=1.5,
    ),
}

KITCHEN_PROFILES = {
    "U1": ActivityProfile(
        label="cooking",
        audio_band_hz=(4000.0, 6000.0),
        audio_amplitude=0.28,
        imu=ImuSignature(base_hz=1.5, amplitude=3.5, phases=(0.2, 2.3, 4.4),
                         jitter_sigma=0.25),
        mean_gap_s=8.0,
        gap_rate_per_min=2.0,
        texture="steady",
    ),
    "U2": ActivityProfile(
        label="chopping",
        audio_band_hz=(500.0, 900.0),
        audio_amplitude=0.30,
        imu=ImuSignature(base_hz=3.8, amplitude=5.0, phases=(0.8, 2.9, 5.0),
                         jitter_sigma=0.45),
        mean_gap_s=8.0,
        gap_rate_per_min=2.0,
    ),
}

PRESETS = {"workshop": WORKSHOP_PROFILES, "kitchen": KITCHEN_PROFILES}


def preset_config(name: str, rng_seed: int, duration_s: float = 180.0,
                  **overrides) -> SynthConfig:
    if name not in PRESETS:
        raise ValidationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return SynthConfig(duration_s=duration_s, profiles=PRESETS[name],
                       rng_seed=rng_seed, **overrides)


def preset_bands(name: str) -> dict[str, tuple[float, float]]:
    """Per-label frequency bands of a preset, for the band-energy backend."""
    if name not in PRESETS:
        raise ValidationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return {p.label: p.audio_band_hz for p in PRESETS[name].values()}
