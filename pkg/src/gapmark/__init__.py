"""gapmark: cross-modal auto-annotation of dual-user IMU streams.

Two users wear IMUs while a shared microphone records the environment. Pauses
in one user's activity leave acoustic gaps that reveal the other user's sound;
the pipeline detects change-points in both modalities, maps activities to
users through these exclusive changes, and propagates the mapped labels over
IMU segments by nearest-neighbor search from a key segment.
"""

from .annotator import AnnotationRecord, AnnotationSet, key_segment, knn_annotate, segment_imu
from .audio_cpd import (
    AudioCpdConfig,
    CpsdSeries,
    audio_change_series,
    cpsd_value,
    demarcate_audio_changes,
)
from .dataio import load_scenario, write_scenario
from .errors import GapmarkError, ParseError, ValidationError
from .har import BandEnergyBackend, HarBackend, HarPrediction, OracleBackend
from .imu_cpd import (
    ChangeTimeline,
    CpdConfig,
    ScoreSeries,
    demarcate_changes,
    imu_change_scores,
    imu_windows,
    pe_divergence_score,
)
from .mapper import (
    ExclusiveChange,
    ExclusiveChangeList,
    MapperConfig,
    UserActivityMap,
    VoteResult,
    find_exclusive_changes,
    resolve,
    vote_activity_for_other,
)
from .model import ActivityLabel, AudioStream, ImuStream, Interval, Scenario, TruthRecord
from .pipeline import (
    EvalReport,
    PipelineConfig,
    PipelineResult,
    annotation_accuracy,
    annotation_volume,
    run_pipeline,
)
from .synthgen import ActivityProfile, SynthConfig, augment_pair, generate, preset_config

__version__ = "0.1.0"
