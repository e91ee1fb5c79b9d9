"""Command-line interface: scenario synthesis, pipeline runs, annotation scoring.

Exit codes: 0 success, 2 no-decision mapping, 3 validation error, 4 I/O error.
Timings are printed to stderr only, so output files stay byte-reproducible
for fixed seeds.
"""

from __future__ import annotations

import dataclasses
import json
import sys
from pathlib import Path

import click

from . import dataio, pipeline, synthgen
from .annotator import AnnotationRecord, AnnotationSet
from .errors import GapmarkError, ParseError, StageError
from .mapper import mapping_report_dict

EXIT_OK = 0
EXIT_NO_DECISION = 2
EXIT_VALIDATION = 3
EXIT_IO = 4


def _fail(exc: BaseException) -> int:
    cause = exc.cause if isinstance(exc, StageError) else exc
    click.echo(f"error: {exc}", err=True)
    if isinstance(cause, (ParseError, OSError)):
        return EXIT_IO
    return EXIT_VALIDATION


@click.group()
def main():
    """Cross-modal auto-annotation of dual-user IMU streams."""


@main.command()
@click.option("--preset", type=click.Choice(sorted(synthgen.PRESETS)), required=True)
@click.option("--seed", type=int, required=True)
@click.option("--duration", type=float, default=180.0, show_default=True,
              help="Scenario length in seconds (minimum 60).")
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
def synth(preset, seed, duration, out_dir):
    """Generate a seeded synthetic dual-user scenario with ground truth."""
    try:
        cfg = synthgen.preset_config(preset, rng_seed=seed, duration_s=duration)
        scn = synthgen.generate(cfg)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = dataio.write_scenario(scn, out_dir)
        echo = {
            "preset": preset,
            "rng_seed": seed,
            "duration_s": duration,
            "labels": sorted(p.label for p in cfg.profiles.values()),
            "bands": {p.label: list(p.audio_band_hz) for p in cfg.profiles.values()},
            "profiles": {u: dataclasses.asdict(p) for u, p in sorted(cfg.profiles.items())},
            "noise_floor": cfg.noise_floor,
            "spurious_event_rate_per_min": cfg.spurious_event_rate_per_min,
        }
        (out_dir / "scenario.json").write_text(
            json.dumps(echo, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except GapmarkError as e:
        sys.exit(_fail(e))
    except OSError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(EXIT_IO)
    click.echo(
        f"wrote scenario to {out_dir} "
        f"({', '.join(sorted(p.name for p in paths.values()))}, scenario.json)"
    )


@main.command()
@click.option("--imu", "imu_paths", type=click.Path(exists=True, path_type=Path),
              multiple=True, required=True,
              help="IMU CSV; pass twice, one per user.")
@click.option("--audio", "audio_path", type=click.Path(exists=True, path_type=Path),
              required=True)
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path),
              required=True, help="Pipeline config JSON (label space, stage knobs).")
@click.option("--truth", "truth_path", type=click.Path(exists=True, path_type=Path),
              default=None)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.option("--dump-scores", is_flag=True, default=False,
              help="Also write IMU score and audio CPSD series as CSV.")
def run(imu_paths, audio_path, config_path, truth_path, out_dir, dump_scores):
    """Run the full three-stage pipeline on one scenario."""
    try:
        cfg = pipeline.PipelineConfig.from_json_file(config_path)
        scn = dataio.load_scenario(list(imu_paths), audio_path, truth_path)
        result = pipeline.run_pipeline(scn, cfg)
        out_dir.mkdir(parents=True, exist_ok=True)

        (out_dir / "mapping.json").write_text(
            json.dumps(mapping_report_dict(result.mapping, result.exclusive),
                       indent=2, sort_keys=True) + "\n", encoding="utf-8")
        (out_dir / "report.json").write_text(
            json.dumps(result.report.to_json_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8")
        for user, ann in sorted(result.annotations.items()):
            write_annotations_jsonl(out_dir / f"annotations_{user}.jsonl", ann)
        if dump_scores:
            for user, series in sorted(result.score_series.items()):
                _dump_series_csv(out_dir / f"imu_scores_{user}.csv", "t_ms,score",
                                 series.times(), series.values())
            _dump_series_csv(out_dir / "audio_cpsd.csv", "t_ms,cpsd",
                             result.cpsd_series.times(), result.cpsd_series.values())
    except json.JSONDecodeError as e:
        click.echo(f"error: invalid config JSON: {e}", err=True)
        sys.exit(EXIT_IO)
    except GapmarkError as e:
        sys.exit(_fail(e))
    except OSError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(EXIT_IO)

    for stage, ms in sorted(result.report.timings_ms.items()):
        click.echo(f"timing {stage}: {ms:.0f} ms", err=True)
    summary = {u: (r.label or "--") for u, r in sorted(result.report.users.items())}
    click.echo(json.dumps({"mapping": summary, "out": str(out_dir)}))
    if not result.mapping.assignments:
        sys.exit(EXIT_NO_DECISION)
    sys.exit(EXIT_OK)


@main.command(name="eval")
@click.option("--pred", "pred_path", type=click.Path(exists=True, path_type=Path),
              required=True, help="Annotation JSONL produced by `run`.")
@click.option("--truth", "truth_path", type=click.Path(exists=True, path_type=Path),
              required=True)
@click.option("--rate", type=float, default=50.0, show_default=True)
def eval_cmd(pred_path, truth_path, rate):
    """Score an annotation file against ground truth on the instance grid."""
    try:
        truth = dataio.read_truth_jsonl(truth_path)
        ann = read_annotations_jsonl(pred_path)
    except GapmarkError as e:
        sys.exit(_fail(e))
    horizon = max((r.interval.end_ms for r in truth), default=0.0)
    out = {}
    for user, ann_set in sorted(ann.items()):
        out[user] = {
            "annotation_accuracy_pct": pipeline.annotation_accuracy(
                ann_set, truth, rate_hz=rate),
            "annotation_volume_pct": pipeline.annotation_volume_on_grid(
                ann_set, horizon, rate),
        }
    click.echo(json.dumps(out, indent=2, sort_keys=True))


def write_annotations_jsonl(path: Path, ann: AnnotationSet) -> Path:
    lines = [
        json.dumps({
            "user": ann.user,
            "start_ms": round(r.interval.start_ms, 3),
            "end_ms": round(r.interval.end_ms, 3),
            "label": r.label,
            "provenance": r.provenance,
        })
        for r in ann.records
    ]
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    return path


def read_annotations_jsonl(path) -> dict[str, AnnotationSet]:
    """Read annotation JSONL back into per-user AnnotationSets."""
    from .model import Interval

    path = Path(path)
    by_user: dict[str, list[AnnotationRecord]] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
            rec = AnnotationRecord(
                Interval(float(obj["start_ms"]), float(obj["end_ms"])),
                str(obj["label"]),
                str(obj.get("provenance", "knn")),
            )
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise ParseError(f"invalid annotation record: {e}", path=path, line=lineno) from e
        by_user.setdefault(str(obj["user"]), []).append(rec)
    return {
        user: AnnotationSet(user, tuple(sorted(recs, key=lambda r: r.interval.start_ms)),
                            z_used=0)
        for user, recs in by_user.items()
    }


def _dump_series_csv(path: Path, header: str, times, values):
    rows = [header] + [f"{t:.3f},{v:.9g}" for t, v in zip(times, values)]
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")


if __name__ == "__main__":
    main()
