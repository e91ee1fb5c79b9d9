"""Acoustic change detection (Stage 1b).

The audio is cut into 1 s segments; each consecutive pair is summarized by the
integrated magnitude of its Welch cross power spectral density (high value =
similar context, low value = change). The CPSD series is clustered by 1-D
k-means with the cluster count picked by mean silhouette, and the minimum-mean
cluster marks the actual acoustic changes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import signal as sps

from .errors import SizeError, ValidationError
from .imu_cpd import ChangeTimeline
from .model import AudioStream, Interval


@dataclass(frozen=True)
class AudioCpdConfig:
    segment_len_ms: int = 1000
    fft_len: int = 4096
    welch_overlap_fraction: float = 0.5
    max_clusters: int = 6
    rng_seed: int = 0

    def __post_init__(self):
        if self.segment_len_ms < 100:
            raise ValidationError("audio segments must be at least 100 ms")
        if not (2 <= self.max_clusters <= 16):
            raise ValidationError("max_clusters must lie in [2, 16]")
        if self.fft_len < 2 or (self.fft_len & (self.fft_len - 1)) != 0:
            raise ValidationError("fft_len must be a power of two")
        if not 0.0 <= self.welch_overlap_fraction < 1.0:
            raise ValidationError("overlap fraction must lie in [0, 1)")


class CpsdPoint(NamedTuple):
    t_ms: float
    value: float
    silent: bool = False


@dataclass(frozen=True)
class CpsdSeries:
    """One CPSD value per consecutive segment pair, at the pair boundary time."""

    points: tuple[CpsdPoint, ...]

    def times(self) -> np.ndarray:
        return np.array([p.t_ms for p in self.points])

    def values(self) -> np.ndarray:
        return np.array([p.value for p in self.points])


def cpsd_value(seg_a: AudioStream, seg_b: AudioStream, cfg: AudioCpdConfig) -> float:
    """Integrated |CPSD| of two equal-length segments (Welch, Hann taper).

    Returns sum over frequency bins of |Pxy| times the bin width, i.e. the
    magnitude cross-power. All-zero input on either side gives exactly 0.
    """
    if seg_a.n_samples != seg_b.n_samples:
        raise ValidationError(
            f"segment length mismatch: {seg_a.n_samples} vs {seg_b.n_samples}"
        )
    if seg_a.rate_hz != seg_b.rate_hz:
        raise ValidationError("segment rate mismatch")
    n = seg_a.n_samples
    if n == 0:
        raise ValidationError("empty segments")
    if not np.any(seg_a.samples) or not np.any(seg_b.samples):
        return 0.0
    nper = min(cfg.fft_len, n)
    _, pxy = sps.csd(
        seg_a.samples,
        seg_b.samples,
        fs=seg_a.rate_hz,
        window="hann",
        nperseg=nper,
        noverlap=int(nper * cfg.welch_overlap_fraction),
        detrend=False,
        scaling="density",
    )
    df = seg_a.rate_hz / nper
    return float(np.sum(np.abs(pxy)) * df)


def audio_change_series(a: AudioStream, cfg: AudioCpdConfig) -> CpsdSeries:
    """CPSD of each consecutive non-overlapping segment pair of the stream."""
    seg_n = int(round(cfg.segment_len_ms * a.rate_hz / 1000.0))
    n_seg = a.n_samples // seg_n
    if n_seg < 2:
        raise SizeError(
            f"stream of {a.duration_ms:.0f} ms holds fewer than two "
            f"{cfg.segment_len_ms} ms segments"
        )
    points = []
    for i in range(n_seg - 1):
        lo = a.samples[i * seg_n : (i + 1) * seg_n]
        hi = a.samples[(i + 1) * seg_n : (i + 2) * seg_n]
        seg_a = AudioStream(lo, a.rate_hz, a.t0_ms + i * cfg.segment_len_ms)
        seg_b = AudioStream(hi, a.rate_hz, a.t0_ms + (i + 1) * cfg.segment_len_ms)
        silent = not np.any(lo) or not np.any(hi)
        points.append(
            CpsdPoint(
                a.t0_ms + (i + 1) * cfg.segment_len_ms,
                cpsd_value(seg_a, seg_b, cfg),
                silent,
            )
        )
    return CpsdSeries(tuple(points))


def kmeans_1d(values: np.ndarray, k: int, max_iter: int = 300):
    """Deterministic 1-D k-means: quantile initialization plus Lloyd iterations.

    Returns (labels, centers) or None when k distinct clusters cannot form.
    """
    values = np.asarray(values, dtype=np.float64)
    centers = np.quantile(values, (np.arange(k) + 0.5) / k)
    if np.unique(centers).size < k:
        return None
    labels = None
    for _ in range(max_iter):
        d = np.abs(values[:, None] - centers[None, :])
        new_labels = np.argmin(d, axis=1)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        counts = np.bincount(labels, minlength=k)
        if np.any(counts == 0):
            return None
        sums = np.bincount(labels, weights=values, minlength=k)
        centers = sums / counts
    return labels, centers


def silhouette_mean(values: np.ndarray, labels: np.ndarray) -> float:
    """Mean silhouette over all points; singleton clusters contribute 0."""
    values = np.asarray(values, dtype=np.float64)
    labels = np.asarray(labels)
    n = values.size
    uniq = np.unique(labels)
    d = np.abs(values[:, None] - values[None, :])
    counts = {c: int(np.sum(labels == c)) for c in uniq}
    mean_to = np.stack([d[:, labels == c].sum(axis=1) / counts[c] for c in uniq], axis=1)
    s = np.zeros(n)
    for ci, c in enumerate(uniq):
        own = labels == c
        if counts[c] == 1:
            continue
        a = mean_to[own, ci] * counts[c] / (counts[c] - 1)  # exclude self
        others = [oi for oi in range(uniq.size) if oi != ci]
        b = mean_to[own][:, others].min(axis=1)
        denom = np.maximum(a, b)
        with np.errstate(invalid="ignore"):
            vals = np.where(denom > 0, (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
        s[own] = vals
    return float(np.mean(s))


def demarcate_audio_changes(series: CpsdSeries, cfg: AudioCpdConfig) -> ChangeTimeline:
    """Cluster CPSD values (silhouette-selected c) and flag the minimum-mean cluster.

    Each flagged boundary expands to the interval covering both adjoining
    segments; adjacent flagged boundaries (gap of one segment) merge.
    """
    if len(series.points) < cfg.max_clusters + 1:
        raise SizeError(
            f"need at least {cfg.max_clusters + 1} CPSD points, got {len(series.points)}"
        )
    values = series.values()
    t = series.times()
    if np.ptp(values) == 0.0:
        return ChangeTimeline((), source="audio", degenerate=True)

    best = None  # (silhouette, c, labels, centers)
    for c in range(2, cfg.max_clusters + 1):
        result = kmeans_1d(values, c)
        if result is None:
            continue
        labels, centers = result
        score = silhouette_mean(values, labels)
        if best is None or score > best[0]:
            best = (score, c, labels, centers)
    if best is None:
        return ChangeTimeline((), source="audio", degenerate=True)

    _, _, labels, centers = best
    low_cluster = int(np.argmin(centers))
    flagged = labels == low_cluster
    step = float(cfg.segment_len_ms)

    idx = np.nonzero(flagged)[0]
    intervals = []
    run_start = run_end = None
    for i in idx:
        if run_start is None:
            run_start = run_end = t[i]
        elif t[i] - run_end <= 1.5 * step:
            run_end = t[i]
        else:
            intervals.append(Interval(run_start - step, run_end + step))
            run_start = run_end = t[i]
    if run_start is not None:
        intervals.append(Interval(run_start - step, run_end + step))
    return ChangeTimeline(tuple(intervals), source="audio")
