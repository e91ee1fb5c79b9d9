"""End-to-end pipeline driver, evaluation metrics, and report assembly.

Stage 1 detects change timelines independently per modality, Stage 2 maps
activities to users via exclusive changes, Stage 3 propagates each mapped
label over the user's IMU segments from the key segment. Metrics follow the
per-instance overlap convention: annotations and truth are resampled to the
50 Hz IMU instance grid and every annotated instance scores 1 when its label
matches the ground truth at that instant.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import annotator, audio_cpd, imu_cpd, mapper
from .annotator import AnnotationRecord, AnnotationSet
from .audio_cpd import AudioCpdConfig, CpsdSeries
from .errors import KeySegmentError, StageError, ValidationError
from .har import BandEnergyBackend, HarBackend, HarPrediction, OracleBackend
from .imu_cpd import ChangeTimeline, CpdConfig, ScoreSeries
from .mapper import ExclusiveChangeList, MapperConfig, UserActivityMap
from .model import AudioStream, ImuStream, Interval, Scenario, TruthRecord, slice_audio

Z_GRID = (9, 11, 13, 15)


@dataclass(frozen=True)
class HarConfig:
    backend: str = "bandenergy"  # "bandenergy" | "oracle"
    bands: Mapping[str, tuple[float, float]] = field(default_factory=dict)
    threshold: float = 0.15
    noise_rate: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "bands", dict(self.bands))
        if self.backend not in ("bandenergy", "oracle"):
            raise ValidationError(f"unknown HAR backend {self.backend!r}")
        if self.backend == "bandenergy" and not self.bands:
            raise ValidationError("band-energy backend needs band profiles")


@dataclass(frozen=True)
class PipelineConfig:
    labels: tuple[str, ...]
    imu_cpd: CpdConfig = CpdConfig()
    audio_cpd: AudioCpdConfig = AudioCpdConfig()
    mapper: MapperConfig = MapperConfig()
    har: HarConfig = HarConfig(backend="oracle")
    z: int = 15

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        if not self.labels:
            raise ValidationError("the primary label space must be non-empty")
        if self.z < 1:
            raise ValidationError("z must be at least 1")

    @classmethod
    def from_json_dict(cls, obj: dict) -> "PipelineConfig":
        def sub(name, typ):
            return typ(**obj[name]) if name in obj else typ()

        if "labels" not in obj:
            raise ValidationError("pipeline config must declare the label space")
        har_obj = dict(obj.get("har", {"backend": "oracle"}))
        if "bands" in har_obj:
            har_obj["bands"] = {k: tuple(v) for k, v in har_obj["bands"].items()}
        kw = {}
        for key in ("imu_cpd", "audio_cpd", "mapper"):
            if key in obj:
                spec = dict(obj[key])
                for tup_key in ("sigma_candidates", "lambda_candidates"):
                    if tup_key in spec:
                        spec[tup_key] = tuple(spec[tup_key])
                kw[key] = {"imu_cpd": CpdConfig, "audio_cpd": AudioCpdConfig,
                           "mapper": MapperConfig}[key](**spec)
        return cls(
            labels=tuple(obj["labels"]),
            har=HarConfig(**har_obj),
            z=int(obj.get("z", 15)),
            **kw,
        )

    @classmethod
    def from_json_file(cls, path) -> "PipelineConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))


def build_backend(cfg: PipelineConfig, scenario: Scenario) -> HarBackend:
    if cfg.har.backend == "oracle":
        return OracleBackend(scenario, noise_rate=cfg.har.noise_rate,
                             rng_seed=cfg.har.rng_seed)
    return BandEnergyBackend(cfg.har.bands, threshold=cfg.har.threshold)


@dataclass
class UserReport:
    label: str | None = None
    votes: int = 0
    total: int = 0
    exclusive_changes: int = 0
    mapping_correct: bool | None = None
    annotation_accuracy_pct: float | None = None
    annotation_volume_pct: float | None = None
    annotation_note: str | None = None


@dataclass
class EvalReport:
    users: dict[str, UserReport]
    opportunistic: str | None
    conflict: bool
    timings_ms: dict[str, float] = field(default_factory=dict)

    def to_json_dict(self, include_timings: bool = False) -> dict:
        out = {
            "users": {
                u: {
                    "label": r.label,
                    "votes": r.votes,
                    "total": r.total,
                    "exclusive_changes": r.exclusive_changes,
                    "mapping_correct": r.mapping_correct,
                    "annotation_accuracy_pct": r.annotation_accuracy_pct,
                    "annotation_volume_pct": r.annotation_volume_pct,
                    "annotation_note": r.annotation_note,
                }
                for u, r in sorted(self.users.items())
            },
            "opportunistic": self.opportunistic,
            "conflict": self.conflict,
        }
        if include_timings:
            out["timings_ms"] = dict(self.timings_ms)
        return out


@dataclass
class PipelineResult:
    mapping: UserActivityMap
    annotations: dict[str, AnnotationSet]
    report: EvalReport
    score_series: dict[str, ScoreSeries]
    imu_timelines: dict[str, ChangeTimeline]
    cpsd_series: CpsdSeries
    audio_timeline: ChangeTimeline
    exclusive: dict[str, ExclusiveChangeList]
    segments: dict[str, list[Interval]]
    segment_predictions: list[tuple[Interval, HarPrediction]]


def classify_audio_segments(audio: AudioStream, backend: HarBackend,
                            segment_len_ms: float, horizon_ms: float,
                            ) -> list[tuple[Interval, HarPrediction]]:
    """Classify every whole acoustic segment on the fixed segment grid."""
    out = []
    n_seg = int(min(audio.duration_ms, horizon_ms) // segment_len_ms)
    for i in range(n_seg):
        window = Interval(audio.t0_ms + i * segment_len_ms,
                          audio.t0_ms + (i + 1) * segment_len_ms)
        out.append((window, backend.classify(slice_audio(audio, window))))
    return out


def run_pipeline(scn: Scenario, cfg: PipelineConfig,
                 backend: HarBackend | None = None) -> PipelineResult:
    """Run all three stages on a dual-user scenario. Deterministic given seeds."""
    if not scn.is_dual:
        raise ValidationError("the pipeline needs a dual-user scenario")
    if backend is None:
        backend = build_backend(cfg, scn)
    timings: dict[str, float] = {}
    users = scn.users

    score_series: dict[str, ScoreSeries] = {}
    imu_timelines: dict[str, ChangeTimeline] = {}
    for user in users:
        t0 = time.perf_counter()
        try:
            series = imu_cpd.imu_change_scores(scn.imu_for(user), cfg.imu_cpd)
            imu_timelines[user] = imu_cpd.demarcate_changes(series, source=f"imu:{user}")
        except Exception as e:
            raise StageError(f"stage1-imu:{user}", e) from e
        score_series[user] = series
        timings[f"stage1_imu_{user}"] = (time.perf_counter() - t0) * 1000.0

    t0 = time.perf_counter()
    try:
        cpsd_series = audio_cpd.audio_change_series(scn.audio, cfg.audio_cpd)
        audio_timeline = audio_cpd.demarcate_audio_changes(cpsd_series, cfg.audio_cpd)
    except Exception as e:
        raise StageError("stage1-audio", e) from e
    timings["stage1_audio"] = (time.perf_counter() - t0) * 1000.0

    t0 = time.perf_counter()
    try:
        user_m, user_n = users
        e_m, e_n = mapper.find_exclusive_changes(
            imu_timelines[user_m], imu_timelines[user_n], audio_timeline,
            cfg.mapper, user_m=user_m, user_n=user_n,
        )
        vote_for_n = mapper.vote_activity_for_other(
            e_m, backend, scn.audio, cfg.labels, cfg.mapper, scn.horizon_ms)
        vote_for_m = mapper.vote_activity_for_other(
            e_n, backend, scn.audio, cfg.labels, cfg.mapper, scn.horizon_ms)
        mapping = mapper.resolve(vote_for_n, vote_for_m, e_m, e_n, cfg.mapper,
                                 primary_set=cfg.labels)
    except Exception as e:
        raise StageError("stage2-mapping", e) from e
    exclusive = {user_m: e_m, user_n: e_n}
    timings["stage2_mapping"] = (time.perf_counter() - t0) * 1000.0

    t0 = time.perf_counter()
    window_ms = 1000.0 * cfg.imu_cpd.window_len_samples / scn.imu_a.rate_hz
    try:
        segment_predictions = classify_audio_segments(
            scn.audio, backend, float(cfg.audio_cpd.segment_len_ms), scn.horizon_ms)
    except Exception as e:
        raise StageError("stage3-classify", e) from e
    annotations: dict[str, AnnotationSet] = {}
    segments: dict[str, list[Interval]] = {}
    notes: dict[str, str] = {}
    for user in users:
        segments[user] = annotator.segment_imu(
            scn.imu_for(user), imu_timelines[user], min_len_ms=window_ms)
        label = mapping.label_for(user)
        if label is None:
            notes[user] = "no-decision mapping; annotation skipped"
            continue
        try:
            key = annotator.key_segment(user, label, segment_predictions, segments[user])
            annotations[user] = annotator.knn_annotate(
                key, segments[user], scn.imu_for(user), label, cfg.z)
        except KeySegmentError as e:
            notes[user] = str(e)
        except Exception as e:
            raise StageError(f"stage3-annotate:{user}", e) from e
    timings["stage3_annotation"] = (time.perf_counter() - t0) * 1000.0

    report = EvalReport(users={}, opportunistic=mapping.opportunistic_user,
                        conflict=mapping.conflict, timings_ms=timings)
    for user in users:
        ur = UserReport()
        ur.exclusive_changes = len(exclusive[user])
        entry = mapping.assignments.get(user)
        if entry:
            ur.label, ur.votes, ur.total = entry
        true_label = scn.primary_label_for(user)
        if entry and true_label is not None:
            ur.mapping_correct = entry[0] == true_label
        ann = annotations.get(user)
        if ann is not None:
            if scn.truth is not None:
                ur.annotation_accuracy_pct = annotation_accuracy(
                    ann, scn.truth_for(user), rate_hz=scn.imu_for(user).rate_hz)
            ur.annotation_volume_pct = annotation_volume(ann, scn.imu_for(user))
        elif user in notes:
            ur.annotation_note = notes[user]
            ur.annotation_volume_pct = 0.0
        report.users[user] = ur

    return PipelineResult(
        mapping=mapping, annotations=annotations, report=report,
        score_series=score_series, imu_timelines=imu_timelines,
        cpsd_series=cpsd_series, audio_timeline=audio_timeline,
        exclusive=exclusive, segments=segments,
        segment_predictions=segment_predictions,
    )


def _instance_times(records: Sequence[AnnotationRecord], rate_hz: float,
                    t0_ms: float) -> np.ndarray:
    """50 Hz instance-grid timestamps covered by the annotation intervals."""
    period = 1000.0 / rate_hz
    chunks = []
    for rec in records:
        k0 = int(np.ceil((rec.interval.start_ms - t0_ms) / period - 1e-9))
        k1 = int(np.ceil((rec.interval.end_ms - t0_ms) / period - 1e-9))
        if k1 > k0:
            chunks.append(t0_ms + np.arange(k0, k1) * period)
    if not chunks:
        return np.array([])
    return np.concatenate(chunks)


def annotation_accuracy(ann: AnnotationSet, truth: Sequence[TruthRecord],
                        rate_hz: float = 50.0, t0_ms: float = 0.0) -> float | None:
    """Percentage of annotated 50 Hz instances whose label matches the truth.

    Returns None (undefined) for an empty annotation set.
    """
    if not ann.records:
        return None
    truth = [r for r in truth if r.user == ann.user]
    hits = 0
    total = 0
    for rec in ann.records:
        times = _instance_times([rec], rate_hz, t0_ms)
        total += times.size
        for tr in truth:
            if tr.label != rec.label:
                continue
            hits += int(np.count_nonzero(
                (times >= tr.interval.start_ms) & (times < tr.interval.end_ms)))
    if total == 0:
        return None
    return 100.0 * hits / total


def annotation_volume(ann: AnnotationSet, s: ImuStream) -> float:
    """Percentage of the stream's instances that received a label."""
    if not ann.records:
        return 0.0
    annotated = 0
    for rec in ann.records:
        annotated += int(np.count_nonzero(
            (s.t_ms >= rec.interval.start_ms) & (s.t_ms < rec.interval.end_ms)))
    return 100.0 * annotated / s.n_samples


def annotation_volume_on_grid(ann: AnnotationSet, horizon_ms: float,
                              rate_hz: float = 50.0) -> float:
    """Volume against a uniform instance grid when no stream is available."""
    total = int(np.floor(horizon_ms * rate_hz / 1000.0))
    if total <= 0:
        return 0.0
    annotated = _instance_times(ann.records, rate_hz, 0.0)
    annotated = annotated[annotated < horizon_ms]
    return 100.0 * annotated.size / total
