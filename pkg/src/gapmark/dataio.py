"""Dataset I/O: IMU CSV, mono PCM16 WAV, ground-truth JSONL, scenario assembly.

File formats
------------
IMU CSV      header ``t_ms,ax,ay,az``, decimal point, UTF-8, LF.
Audio        RIFF WAV, mono, PCM16; normalized to [-1, 1] on load (divisor 32768).
Ground truth JSON Lines, one object per interval:
             ``{"user": "U1", "start_ms": 0, "end_ms": 4200,
                "label": "hammering", "kind": "primary"}``

Loading re-bases every stream to a common epoch (the earliest timestamp across
inputs) so all stages share one time axis. IMU gaps of up to two sample
periods are filled by linear interpolation; larger gaps are a hard error.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .errors import AlignmentError, ParseError, ValidationError
from .model import AudioStream, ImuStream, Interval, Scenario, TruthRecord

IMU_CSV_HEADER = "t_ms,ax,ay,az"
_T_FMT = "%.3f"
_ACC_FMT = "%.6f"


def read_imu_csv(path, user_id: str | None = None, rate_hz: float = 50.0) -> ImuStream:
    path = Path(path)
    if user_id is None:
        user_id = path.stem
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ParseError(f"cannot read IMU CSV: {e}", path=path) from e
    lines = text.splitlines()
    if not lines or lines[0].strip() != IMU_CSV_HEADER:
        raise ParseError(
            f"expected header {IMU_CSV_HEADER!r}, got {lines[0].strip()!r}" if lines else "empty file",
            path=path,
            line=1,
        )
    t, acc = [], []
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        parts = raw.split(",")
        if len(parts) != 4:
            raise ParseError(f"expected 4 fields, got {len(parts)}", path=path, line=lineno)
        try:
            row = [float(p) for p in parts]
        except ValueError as e:
            raise ParseError(f"non-numeric field: {e}", path=path, line=lineno) from e
        if t and row[0] <= t[-1]:
            raise ValidationError(
                f"timestamp regression at line {lineno} of {path}: "
                f"{row[0]:.3f} after {t[-1]:.3f}"
            )
        t.append(row[0])
        acc.append(row[1:])
    if not t:
        raise ParseError("no data rows", path=path)
    t_arr = np.asarray(t)
    acc_arr = np.asarray(acc)
    t_arr, acc_arr = _fill_small_gaps(t_arr, acc_arr, rate_hz, path)
    return ImuStream(user_id, t_arr, acc_arr, rate_hz)


def _fill_small_gaps(t, acc, rate_hz, path):
    """Insert one interpolated sample into 2-period gaps; larger gaps error out."""
    period = 1000.0 / rate_hz
    dt = np.diff(t)
    if not dt.size or np.all(dt <= 1.5 * period):
        return t, acc
    if np.any(dt > 2.5 * period):
        i = int(np.argmax(dt > 2.5 * period))
        raise AlignmentError(
            f"IMU gap of {dt[i]:.1f} ms at t={t[i]:.1f} ms in {path} exceeds two sample periods"
        )
    gap_idx = np.nonzero(dt > 1.5 * period)[0]
    new_t = np.insert(t, gap_idx + 1, (t[gap_idx] + t[gap_idx + 1]) / 2.0)
    mid_acc = (acc[gap_idx] + acc[gap_idx + 1]) / 2.0
    new_acc = np.insert(acc, gap_idx + 1, mid_acc, axis=0)
    return new_t, new_acc


def write_imu_csv(path, s: ImuStream) -> Path:
    path = Path(path)
    rows = [IMU_CSV_HEADER]
    for t, (ax, ay, az) in zip(s.t_ms, s.acc):
        rows.append(f"{t:.3f},{ax:.6f},{ay:.6f},{az:.6f}")
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return path


def read_wav(path) -> AudioStream:
    path = Path(path)
    try:
        rate, data = wavfile.read(path)
    except (OSError, ValueError) as e:
        raise ParseError(f"cannot read WAV: {e}", path=path) from e
    if data.ndim != 1:
        raise ParseError(f"expected mono audio, got {data.ndim} channels", path=path)
    if data.dtype != np.int16:
        raise ParseError(f"expected PCM16 samples, got {data.dtype}", path=path)
    return AudioStream(data.astype(np.float64) / 32768.0, float(rate), 0.0)


def write_wav(path, a: AudioStream) -> Path:
    path = Path(path)
    pcm = np.clip(np.round(a.samples * 32768.0), -32768, 32767).astype(np.int16)
    wavfile.write(path, int(round(a.rate_hz)), pcm)
    return path


def read_truth_jsonl(path) -> tuple[TruthRecord, ...]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ParseError(f"cannot read truth JSONL: {e}", path=path) from e
    records = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as e:
            raise ParseError(f"invalid JSON: {e}", path=path, line=lineno) from e
        try:
            records.append(
                TruthRecord(
                    user=str(obj["user"]),
                    interval=Interval(float(obj["start_ms"]), float(obj["end_ms"])),
                    label=str(obj["label"]),
                    kind=str(obj.get("kind", "primary")),
                )
            )
        except (KeyError, TypeError) as e:
            raise ParseError(f"missing/invalid field: {e}", path=path, line=lineno) from e
    return tuple(records)


def write_truth_jsonl(path, records) -> Path:
    path = Path(path)
    lines = []
    for r in records:
        lines.append(
            json.dumps(
                {
                    "user": r.user,
                    "start_ms": round(r.interval.start_ms, 3),
                    "end_ms": round(r.interval.end_ms, 3),
                    "label": r.label,
                    "kind": r.kind,
                },
                sort_keys=False,
            )
        )
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    return path


def load_scenario(imu_paths, audio_path, truth_path=None, rate_hz: float = 50.0) -> Scenario:
    """Assemble a Scenario from two IMU CSVs, one WAV and optional truth JSONL.

    Streams are re-based so the earliest timestamp across all inputs becomes 0;
    the horizon is the earliest stream end after re-basing.
    """
    imu_paths = list(imu_paths)
    if len(imu_paths) != 2:
        raise ValidationError(f"expected exactly 2 IMU paths, got {len(imu_paths)}")
    imu_a = read_imu_csv(imu_paths[0], rate_hz=rate_hz)
    imu_b = read_imu_csv(imu_paths[1], rate_hz=rate_hz)
    if imu_a.user_id == imu_b.user_id:
        raise ValidationError(f"IMU files resolve to the same user id {imu_a.user_id!r}")
    audio = read_wav(audio_path)
    truth = read_truth_jsonl(truth_path) if truth_path is not None else None

    epoch = min(imu_a.start_ms, imu_b.start_ms, audio.t0_ms)
    imu_a = imu_a.shifted(-epoch)
    imu_b = imu_b.shifted(-epoch)
    audio = audio.shifted(-epoch)
    if truth is not None and epoch != 0.0:
        truth = tuple(
            TruthRecord(r.user, r.interval.shift(-epoch), r.label, r.kind) for r in truth
        )

    for imu in (imu_a, imu_b):
        if imu.start_ms > 1000.0 / imu.rate_hz:
            raise AlignmentError(
                f"IMU stream {imu.user_id!r} starts {imu.start_ms:.1f} ms after the epoch"
            )
    if audio.t0_ms > 1000.0 / audio.rate_hz:
        raise AlignmentError(f"audio starts {audio.t0_ms:.1f} ms after the epoch")

    horizon = min(imu_a.end_ms, imu_b.end_ms, audio.end_ms)
    return Scenario(imu_a, imu_b, audio, horizon, truth)


def write_scenario(scn: Scenario, out_dir) -> dict[str, Path]:
    """Write a scenario's streams and truth next to each other in ``out_dir``.

    IMU files are named ``<user_id>.csv`` so a later load restores user ids.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}
    for imu in scn.imu_streams():
        paths[f"imu_{imu.user_id}"] = write_imu_csv(out_dir / f"{imu.user_id}.csv", imu)
    paths["audio"] = write_wav(out_dir / "global.wav", scn.audio)
    if scn.truth is not None:
        paths["truth"] = write_truth_jsonl(out_dir / "truth.jsonl", scn.truth)
    return paths
