"""IMU annotation by nearest-neighbor propagation from a key segment (Stage 3).

The IMU change-points delimit segments; the segment aligned with the acoustic
window that predicts the mapped label at maximum confidence becomes the key
segment. Every segment is summarized by a fixed 22-dimensional statistical
feature vector, standardized per user, and the label propagates from the key
to its z nearest neighbors in Euclidean distance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import KeySegmentError, ValidationError
from .har import HarPrediction
from .imu_cpd import ChangeTimeline
from .model import ActivityLabel, ImuStream, Interval, slice_imu

FEATURE_DIM = 22


@dataclass(frozen=True)
class AnnotationRecord:
    interval: Interval
    label: ActivityLabel
    provenance: str  # "key" | "knn"

    def __post_init__(self):
        if self.provenance not in ("key", "knn"):
            raise ValidationError(f"unknown provenance {self.provenance!r}")


@dataclass(frozen=True)
class AnnotationSet:
    """Labeled IMU intervals for one user, time-sorted and non-overlapping."""

    user: str
    records: tuple[AnnotationRecord, ...]
    z_used: int

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        ivs = [r.interval for r in self.records]
        for a, b in zip(ivs, ivs[1:]):
            if b.start_ms < a.end_ms:
                raise ValidationError("annotation intervals must be sorted, non-overlapping")

    @property
    def intervals(self) -> tuple[Interval, ...]:
        return tuple(r.interval for r in self.records)


def segment_imu(s: ImuStream, tl: ChangeTimeline, min_len_ms: float = 500.0) -> list[Interval]:
    """Complementary intervals between change intervals over the stream extent.

    Segments shorter than one analysis window (min_len_ms) are dropped.
    """
    lo, hi = s.start_ms, s.end_ms
    edges = [lo]
    for iv in tl.changes:
        edges.append(max(lo, min(hi, iv.start_ms)))
        edges.append(max(lo, min(hi, iv.end_ms)))
    edges.append(hi)
    segments = []
    for a, b in zip(edges[::2], edges[1::2]):
        if b - a >= min_len_ms:
            segments.append(Interval(a, b))
    return segments


def segment_features(s: ImuStream, seg: Interval) -> np.ndarray:
    """22-dim feature vector: per-axis mean/std/min/max/RMS/ZCR/dominant-frequency
    plus signal magnitude area. Length-independent by construction."""
    sub = slice_imu(s, seg)
    acc = sub.acc
    n = acc.shape[0]
    feats = []
    for axis in range(3):
        x = acc[:, axis]
        mu = float(np.mean(x))
        centered = x - mu
        feats.append(mu)
        feats.append(float(np.std(x)))
        feats.append(float(np.min(x)))
        feats.append(float(np.max(x)))
        feats.append(float(np.sqrt(np.mean(x**2))))
        if n > 1:
            zcr = float(np.count_nonzero(np.diff(np.signbit(centered)))) / (n - 1)
        else:
            zcr = 0.0
        feats.append(zcr)
        feats.append(_dominant_freq(centered, s.rate_hz))
    feats.append(float(np.mean(np.sum(np.abs(acc), axis=1))))
    out = np.asarray(feats)
    assert out.size == FEATURE_DIM
    return out


def _dominant_freq(x: np.ndarray, rate_hz: float) -> float:
    if x.size < 4:
        return 0.0
    mag = np.abs(np.fft.rfft(x))
    if mag.size < 2:
        return 0.0
    idx = int(np.argmax(mag[1:])) + 1
    return float(np.fft.rfftfreq(x.size, d=1.0 / rate_hz)[idx])


def key_segment(user: str, label: ActivityLabel,
                predictions: Sequence[tuple[Interval, HarPrediction]],
                segments: Sequence[Interval]) -> Interval:
    """IMU segment with maximal overlap with the best acoustic hit for ``label``.

    The best hit is the acoustic window predicting the label at maximum
    confidence (earlier window on ties). Segment ties break toward the longer,
    then earlier segment; if no segment overlaps the hit, the nearest segment
    by center distance is used.
    """
    if not segments:
        raise KeySegmentError(f"user {user!r}: no IMU segments available")
    best_window = None
    best_conf = -1.0
    for window, pred in predictions:
        conf = pred.confidence_for(label)
        if conf > best_conf and conf > 0.0:
            best_conf = conf
            best_window = window
    if best_window is None:
        raise KeySegmentError(
            f"user {user!r}: no acoustic window predicts mapped label {label!r}"
        )

    def sort_key(seg: Interval):
        return (-seg.overlap_ms(best_window), -seg.duration_ms, seg.start_ms)

    candidate = min(segments, key=sort_key)
    if candidate.overlap_ms(best_window) > 0.0:
        return candidate
    w_mid = 0.5 * (best_window.start_ms + best_window.end_ms)
    return min(
        segments,
        key=lambda seg: (abs(0.5 * (seg.start_ms + seg.end_ms) - w_mid), seg.start_ms),
    )


def rank_neighbors(features: np.ndarray, key_idx: int) -> np.ndarray:
    """Indices of all non-key rows by increasing Euclidean distance to the key.

    Features are standardized per dimension first (zero-variance dimensions are
    dropped), which makes the ranking invariant to any per-dimension positive
    affine transform of the raw features.
    """
    mu = features.mean(axis=0)
    sd = features.std(axis=0)
    keep = sd > 0
    z = np.zeros_like(features)
    z[:, keep] = (features[:, keep] - mu[keep]) / sd[keep]
    d = np.linalg.norm(z - z[key_idx], axis=1)
    order = np.argsort(d, kind="stable")
    return order[order != key_idx]


def knn_annotate(key: Interval, segments: Sequence[Interval], s: ImuStream,
                 label: ActivityLabel, z: int) -> AnnotationSet:
    """Label the key segment and its z nearest neighbors with ``label``."""
    if z < 1:
        raise ValidationError(f"z must be at least 1, got {z}")
    segments = list(segments)
    if len(segments) < 2:
        raise ValidationError("need at least 2 segments for neighbor propagation")
    try:
        key_idx = segments.index(key)
    except ValueError:
        raise ValidationError("key segment must be one of the candidate segments") from None
    features = np.stack([segment_features(s, seg) for seg in segments])
    ranked = rank_neighbors(features, key_idx)
    chosen = set(ranked[: min(z, len(segments) - 1)].tolist())
    records = []
    for i, seg in enumerate(segments):
        if i == key_idx:
            records.append(AnnotationRecord(seg, label, "key"))
        elif i in chosen:
            records.append(AnnotationRecord(seg, label, "knn"))
    records.sort(key=lambda r: r.interval.start_ms)
    return AnnotationSet(s.user_id, tuple(records), z_used=z)
