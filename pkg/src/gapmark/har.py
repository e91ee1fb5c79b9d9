"""Pluggable acoustic activity-recognition backends (Stage 2 model stand-in).

Two reference implementations are provided: a ground-truth oracle (test double
with optional spurious-label noise) and a band-energy classifier that lets the
pipeline run end-to-end on synthetic audio without ground-truth leakage.
Backends may emit labels outside the configured primary set; the mapper
discards those.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .errors import RangeError, ValidationError
from .model import ActivityLabel, AudioStream, Interval, Scenario

DEFAULT_NOISE_LABELS = ("traffic-noise", "door-slam", "dog-bark")


@dataclass(frozen=True)
class HarPrediction:
    """Ranked activity labels with confidences in [0, 1], unique, sorted descending."""

    labels: tuple[tuple[ActivityLabel, float], ...]

    def __post_init__(self):
        names = [lab for lab, _ in self.labels]
        if len(set(names)) != len(names):
            raise ValidationError("prediction labels must be unique")
        for lab, conf in self.labels:
            if not 0.0 <= conf <= 1.0:
                raise ValidationError(f"confidence for {lab!r} outside [0, 1]: {conf}")
        confs = [c for _, c in self.labels]
        if any(a < b for a, b in zip(confs, confs[1:])):
            raise ValidationError("prediction must be sorted by descending confidence")

    def top(self) -> tuple[ActivityLabel, float] | None:
        return self.labels[0] if self.labels else None

    def confidence_for(self, label: ActivityLabel) -> float:
        for lab, conf in self.labels:
            if lab == label:
                return conf
        return 0.0


def _ranked(pairs) -> HarPrediction:
    return HarPrediction(tuple(sorted(pairs, key=lambda p: (-p[1], p[0]))))


class HarBackend:
    """Interface: ``classify(segment) -> HarPrediction`` plus a label space.

    classify must be deterministic for a fixed backend state.
    """

    label_space: tuple[ActivityLabel, ...] = ()

    def classify(self, segment: AudioStream) -> HarPrediction:
        raise NotImplementedError


class OracleBackend(HarBackend):
    """Ground-truth-driven test double for the pre-trained acoustic model.

    Reports every primary activity truly sounding during the segment with
    confidence equal to its overlap fraction. With probability ``noise_rate``
    one spurious out-of-set label is injected at confidence <= 0.3 (the noise
    draw is a deterministic function of the segment placement and the seed).
    """

    def __init__(self, scenario: Scenario, noise_rate: float = 0.0, rng_seed: int = 0,
                 noise_labels=DEFAULT_NOISE_LABELS):
        if scenario.truth is None:
            raise ValidationError("oracle backend needs a scenario with ground truth")
        if not 0.0 <= noise_rate <= 1.0:
            raise ValidationError("noise_rate must lie in [0, 1]")
        self._truth = tuple(r for r in scenario.truth if r.kind == "primary")
        self._horizon = scenario.horizon_ms
        self._noise_rate = noise_rate
        self._seed = rng_seed
        self._noise_labels = tuple(noise_labels)
        primary = sorted({r.label for r in self._truth})
        self.label_space = tuple(primary) + self._noise_labels

    def classify(self, segment: AudioStream) -> HarPrediction:
        w_start, w_end = segment.t0_ms, segment.end_ms
        if w_start < -1e-6 or w_end > self._horizon + 1e-6:
            raise RangeError(
                f"segment [{w_start:.1f}, {w_end:.1f}] outside horizon [0, {self._horizon:.1f}]"
            )
        window = Interval(w_start, w_end)
        by_label: dict[str, float] = {}
        for rec in self._truth:
            ov = rec.interval.overlap_ms(window) / window.duration_ms
            if ov > 0.0:
                by_label[rec.label] = min(1.0, by_label.get(rec.label, 0.0) + ov)
        pairs = list(by_label.items())
        if self._noise_rate > 0.0:
            rng = np.random.default_rng(
                [self._seed, int(round(w_start * 64)), int(round(window.duration_ms * 64))]
            )
            if rng.random() < self._noise_rate:
                spurious = self._noise_labels[int(rng.integers(len(self._noise_labels)))]
                pairs.append((spurious, float(rng.uniform(0.05, 0.3))))
        return _ranked(pairs)


class BandEnergyBackend(HarBackend):
    """Welch-PSD band-energy classifier over disjoint per-label frequency bands.

    A label is reported when the fraction of total spectral power inside its
    band reaches ``threshold``; the confidence is that fraction, so it is
    invariant under amplitude scaling of the segment.
    """

    def __init__(self, profiles: dict[ActivityLabel, tuple[float, float]],
                 threshold: float = 0.15, fft_len: int = 4096):
        if not profiles:
            raise ValidationError("band-energy backend needs at least one band profile")
        if not 0.0 < threshold <= 1.0:
            raise ValidationError("threshold must lie in (0, 1]")
        bands = sorted(profiles.items(), key=lambda kv: kv[1][0])
        for (la, (lo_a, hi_a)), (lb, (lo_b, hi_b)) in zip(bands, bands[1:]):
            if hi_a > lo_b:
                raise ValidationError(f"bands for {la!r} and {lb!r} overlap")
        for lab, (lo, hi) in bands:
            if not 0 <= lo < hi:
                raise ValidationError(f"invalid band for {lab!r}: [{lo}, {hi}]")
        self._profiles = dict(profiles)
        self._threshold = threshold
        self._fft_len = fft_len
        self.label_space = tuple(sorted(profiles))

    def classify(self, segment: AudioStream) -> HarPrediction:
        x = segment.samples
        if x.size == 0 or not np.any(x):
            return HarPrediction(())
        nper = min(self._fft_len, x.size)
        freqs, pxx = sps.welch(
            x, fs=segment.rate_hz, window="hann", nperseg=nper,
            noverlap=nper // 2, detrend=False,
        )
        total = float(np.sum(pxx))
        if total <= 0.0:
            return HarPrediction(())
        pairs = []
        for lab, (lo, hi) in self._profiles.items():
            frac = float(np.sum(pxx[(freqs >= lo) & (freqs < hi)]) / total)
            if frac >= self._threshold:
                pairs.append((lab, min(1.0, frac)))
        return _ranked(pairs)


def oracle_backend(scenario: Scenario, noise_rate: float = 0.0, rng_seed: int = 0) -> HarBackend:
    return OracleBackend(scenario, noise_rate=noise_rate, rng_seed=rng_seed)


def bandenergy_backend(profiles, threshold: float = 0.15) -> HarBackend:
    return BandEnergyBackend(profiles, threshold=threshold)
