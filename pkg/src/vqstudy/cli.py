"""Command-line entry point.

Exit codes: 0 success, 1 domain error (machine-readable JSON on stderr),
2 usage error. Subcommands are deterministic given identical inputs,
flags, and seeds, and never mutate their input files.
"""

from __future__ import annotations

import json
import os
import sys
from functools import wraps

import click

from . import __version__
from .domain import (
    MosTable,
    dump_manifest,
    load_manifest,
    read_rating_log,
    validate_manifest,
)
from .errors import DomainError
from .harness import (
    PredictionSet,
    SimulationParams,
    SplitSpec,
    evaluate,
    group_analysis,
    simulate_study,
    split_dataset,
    write_histograms_csv,
    write_latent_csv,
)
from .scoring import ScoringConfig, run_pipeline


def _domain_errors(fn):
    """Convert DomainError into exit code 1 with JSON on stderr."""

    @wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except DomainError as exc:
            click.echo(exc.to_json(), err=True)
            sys.exit(1)

    return wrapper


@click.group()
@click.version_option(__version__, prog_name="vqstudy")
def main():
    """Subjective video-quality study toolkit."""


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--ratings", "ratings_path", type=click.Path(exists=True))
@click.option("--check-media", is_flag=True, help="Flag unreadable media files.")
@click.option("--out", "out_path", type=click.Path(), help="Write a validation report.")
@_domain_errors
def ingest(manifest_path, ratings_path, check_media, out_path):
    """Validate a manifest (and optionally a rating log)."""
    manifest = load_manifest(manifest_path, check_media=check_media)
    warnings = [
        v.to_dict() for v in validate_manifest(manifest, check_media) if not v.fatal
    ]
    report = {"videos": len(manifest), "warnings": warnings}
    if ratings_path:
        events = read_rating_log(ratings_path)
        known = {rec.video_id for rec in manifest}
        unknown = sorted({ev.video_id for ev in events} - known)
        report["ratings"] = len(events)
        report["unknown_videos"] = unknown
        if unknown:
            raise DomainError(
                "ratings reference unknown videos", video_ids=unknown
            )
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2)
    click.echo(json.dumps(report))


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--ratings", "ratings_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--out-dir", default=".", type=click.Path(), show_default=True)
@_domain_errors
def score(manifest_path, ratings_path, config_path, out_dir):
    """Run the MOS pipeline; writes mos_table.json, outliers.json,
    rejected_subjects.json, and pipeline_report.json."""
    manifest = load_manifest(manifest_path)
    events = read_rating_log(ratings_path)
    known = {rec.video_id for rec in manifest}
    unknown = sorted({ev.video_id for ev in events} - known)
    if unknown:
        raise DomainError("ratings reference unknown videos", video_ids=unknown)
    cfg = ScoringConfig.from_json_file(config_path) if config_path else ScoringConfig()
    study = run_pipeline(events, manifest, cfg)

    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "mos_table.json"), "w", encoding="utf-8") as fh:
        fh.write(study.mos_table.to_json())
    outliers = [
        {
            "video_id": study.matrix.videos[i],
            "subject_id": study.matrix.subjects[j],
            "raw_score": float(study.matrix.tenths[i, j]) / 10.0,
        }
        for i, j in zip(*study.matrix.mask.nonzero())
    ]
    with open(os.path.join(out_dir, "outliers.json"), "w", encoding="utf-8") as fh:
        json.dump(outliers, fh, indent=2)
    with open(
        os.path.join(out_dir, "rejected_subjects.json"), "w", encoding="utf-8"
    ) as fh:
        json.dump(sorted(study.rejected_subjects), fh, indent=2)
    with open(
        os.path.join(out_dir, "pipeline_report.json"), "w", encoding="utf-8"
    ) as fh:
        json.dump(study.report.to_dict(), fh, indent=2)
    click.echo(
        json.dumps(
            {
                "videos_scored": len(study.mos_table),
                "outlier_fraction": study.outlier_fraction,
                "rejected_subjects": sorted(study.rejected_subjects),
            }
        )
    )


@main.command(name="features")
@click.option("--frames-dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--video-id", default=None, help="Defaults to the directory name.")
@click.option("--stride", default=1, show_default=True, type=int)
@click.option("--pixel-scale", default=1.0, show_default=True, type=float)
@click.option("--out", "out_path", default="features.json", show_default=True)
@_domain_errors
def features_cmd(frames_dir, video_id, stride, pixel_scale, out_path):
    """Compute brightness/contrast/colorfulness/sharpness for one video's
    frame directory (PNG or PPM files)."""
    from .features import video_features_from_dir

    try:
        feats, n_sampled = video_features_from_dir(frames_dir, stride, pixel_scale)
    except (FileNotFoundError, ValueError) as exc:
        raise DomainError(str(exc), frames_dir=frames_dir)
    payload = {
        "video_id": video_id or os.path.basename(os.path.normpath(frames_dir)),
        **feats.to_dict(),
        "n_frames_sampled": n_sampled,
    }
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
    click.echo(json.dumps(payload))


@main.command()
@click.option("--mos", "mos_path", required=True, type=click.Path(exists=True))
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--group-by", default="platform", show_default=True,
              help="Comma-separated grouping keys.")
@click.option("--out-csv", default="histograms.csv", show_default=True)
@click.option("--out-json", default="summary.json", show_default=True)
@_domain_errors
def analyze(mos_path, manifest_path, group_by, out_csv, out_json):
    """Per-group MOS histograms and summary statistics."""
    with open(mos_path, "r", encoding="utf-8") as fh:
        mos = MosTable.from_json(fh.read())
    manifest = load_manifest(manifest_path)
    keys = [k.strip() for k in group_by.split(",") if k.strip()]
    summaries = group_analysis(mos, manifest, keys)
    write_histograms_csv(summaries, out_csv)
    with open(out_json, "w", encoding="utf-8") as fh:
        json.dump([s.to_dict() for s in summaries], fh, indent=2)
    click.echo(json.dumps({"groups": len(summaries)}))


@main.command(name="evaluate")
@click.option("--predictions", "pred_path", required=True, type=click.Path(exists=True),
              help="CSV of video_id,score rows.")
@click.option("--mos", "mos_path", required=True, type=click.Path(exists=True))
@click.option("--manifest", "manifest_path", type=click.Path(exists=True))
@click.option("--split", "split_name", type=click.Choice(["train", "val", "test", "all"]),
              default="all", show_default=True)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--groups", default="", help="Comma-separated grouping keys.")
@click.option("--dataset-id", default="dataset", show_default=True)
@click.option("--out-json", default="report.json", show_default=True)
@click.option("--out-csv", default="report.csv", show_default=True)
@_domain_errors
def evaluate_cmd(pred_path, mos_path, manifest_path, split_name, seed, groups,
                 dataset_id, out_json, out_csv):
    """Score a predictor against a MOS table (SRCC/PLCC/KRCC/accuracy)."""
    predictions = PredictionSet.from_csv(pred_path)
    with open(mos_path, "r", encoding="utf-8") as fh:
        mos = MosTable.from_json(fh.read())
    manifest = load_manifest(manifest_path) if manifest_path else None
    group_keys = [k.strip() for k in groups.split(",") if k.strip()]
    subset = None
    if split_name != "all":
        if manifest is None:
            raise DomainError("--split requires --manifest")
        subset = split_dataset(manifest, SplitSpec(seed=seed)).part(split_name)
    if group_keys and manifest is None:
        raise DomainError("--groups requires --manifest")
    report = evaluate(
        predictions,
        mos,
        subset_ids=subset,
        manifest=manifest,
        group_keys=group_keys,
        dataset_id=dataset_id,
    )
    with open(out_json, "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
    _write_report_csv(report, out_csv)
    click.echo(json.dumps({"overall": report.overall.to_dict()}))


def _write_report_csv(report, path):
    import csv

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["scope", "group", "srcc", "plcc", "krcc", "level_accuracy", "n"]
        )
        blk = report.overall
        writer.writerow(
            ["overall", "", blk.srcc, blk.plcc, blk.krcc, blk.level_accuracy, blk.n]
        )
        for key, groups in sorted(report.groups.items()):
            for value, blk in sorted(groups.items()):
                writer.writerow(
                    [key, value, blk.srcc, blk.plcc, blk.krcc,
                     blk.level_accuracy, blk.n]
                )


@main.command()
@click.option("--params", "params_path", type=click.Path(exists=True),
              help="JSON of simulation parameters; defaults used if omitted.")
@click.option("--out", "out_path", default="ratings.jsonl", show_default=True)
@click.option("--truth", "truth_path", default="latent.csv", show_default=True)
@click.option("--manifest-out", "manifest_path", default=None,
              help="Also write the synthetic manifest.")
@_domain_errors
def simulate(params_path, out_path, truth_path, manifest_path):
    """Generate a synthetic rating log with known latent qualities."""
    if params_path:
        with open(params_path, "r", encoding="utf-8") as fh:
            params = SimulationParams.from_dict(json.load(fh))
    else:
        params = SimulationParams()
    result = simulate_study(params)
    with open(out_path, "w", encoding="utf-8") as fh:
        for ev in result.events:
            fh.write(json.dumps(ev.to_dict(), sort_keys=True) + "\n")
    write_latent_csv(result.latent, truth_path)
    if manifest_path:
        dump_manifest(list(result.manifest), manifest_path)
    click.echo(
        json.dumps(
            {
                "ratings": len(result.events),
                "videos": params.n_videos,
                "subjects": params.n_subjects,
                "adversarial": list(result.adversarial_subjects),
            }
        )
    )


@main.command()
@click.option("--port", default=8000, show_default=True, type=int)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--data-dir", envvar="VQSTUDY_DATA_DIR", default="./vqstudy-data",
              show_default=True, help="Also settable via VQSTUDY_DATA_DIR.")
@click.option("--frontend-dir", envvar="VQSTUDY_FRONTEND_DIR", default=None,
              help="Static rater UI to mount at /app.")
def serve(port, host, data_dir, frontend_dir):
    """Run the study service."""
    import uvicorn

    from .service import StudyService, create_app

    os.makedirs(data_dir, exist_ok=True)
    app = create_app(StudyService(data_dir), frontend_dir=frontend_dir)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
