"""Subjective-data processing: outlier detection, subject rejection,
z-score normalization, rescaling, and MOS aggregation.

The pipeline runs in one pass over a score matrix:

  1. Per video, classify the raw-score distribution as Gaussian or not by
     its kurtosis (beta2 = m4/m2^2, Gaussian when inside [2, 4]); mask a
     score as an outlier when it lies more than 2 standard deviations from
     the video mean (Gaussian case) or sqrt(20) standard deviations
     (non-Gaussian case). The mask is computed from pre-mask statistics —
     exactly one pass, never iterated.
  2. Reject subjects whose masked-score fraction strictly exceeds 5%; all
     of their scores are removed retroactively.
  3. Standardize each surviving subject's scores by that subject's own
     mean and standard deviation, rescale z to z' = 100(z + 3)/6 (no
     clipping), and average z' per video into the MOS.

Per-subject and per-video standard deviations use the sample (n-1)
denominator; kurtosis uses population central moments.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .domain import (
    DistributionStats,
    MosEntry,
    MosTable,
    QualityLevel,
    RatingEvent,
    ScoreMatrix,
    SessionKind,
    SubjectStats,
    VideoRecord,
)
from .errors import (
    DegenerateDistributionError,
    DegenerateSubjectError,
    PipelineError,
)

SQRT20 = math.sqrt(20.0)


@dataclass(frozen=True)
class ScoringConfig:
    """Thresholds of the outlier-rejection and normalization pipeline."""

    gaussian_sigma_mult: float = 2.0
    nongaussian_sigma_mult: float = SQRT20
    subject_outlier_limit: float = 0.05
    kurtosis_gaussian_range: tuple[float, float] = (2.0, 4.0)
    min_ratings_for_outlier_test: int = 4
    sigma_floor: float = 1e-9

    def __post_init__(self):
        if self.gaussian_sigma_mult <= 0 or self.nongaussian_sigma_mult <= 0:
            raise ValueError("sigma multipliers must be > 0")
        if not 0.0 < self.subject_outlier_limit < 1.0:
            raise ValueError("subject_outlier_limit must be in (0, 1)")
        lo, hi = self.kurtosis_gaussian_range
        if not lo < hi:
            raise ValueError("kurtosis_gaussian_range must satisfy lower < upper")

    def to_dict(self) -> dict:
        return {
            "gaussian_sigma_mult": self.gaussian_sigma_mult,
            "nongaussian_sigma_mult": self.nongaussian_sigma_mult,
            "subject_outlier_limit": self.subject_outlier_limit,
            "kurtosis_gaussian_range": list(self.kurtosis_gaussian_range),
            "min_ratings_for_outlier_test": self.min_ratings_for_outlier_test,
            "sigma_floor": self.sigma_floor,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ScoringConfig":
        kwargs = dict(d)
        if "kurtosis_gaussian_range" in kwargs:
            kwargs["kurtosis_gaussian_range"] = tuple(
                kwargs["kurtosis_gaussian_range"]
            )
        return cls(**kwargs)

    @classmethod
    def from_json_file(cls, path: str) -> "ScoringConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def kurtosis(samples, cfg: ScoringConfig | None = None) -> tuple[float, bool]:
    """Non-excess kurtosis beta2 = m4/m2^2 and the Gaussianity verdict.

    Raises DegenerateDistributionError for n < 2 or (near-)zero variance;
    callers treat such videos as having no outliers.
    """
    cfg = cfg or ScoringConfig()
    x = np.asarray(samples, dtype=np.float64)
    if x.size < 2:
        raise DegenerateDistributionError(f"n < 2 (got {x.size})", n=int(x.size))
    d = x - x.mean()
    m2 = float((d * d).mean())
    if math.sqrt(m2) <= cfg.sigma_floor:
        raise DegenerateDistributionError("zero variance", n=int(x.size))
    m4 = float((d ** 4).mean())
    beta2 = m4 / (m2 * m2)
    lo, hi = cfg.kurtosis_gaussian_range
    return beta2, lo <= beta2 <= hi


def _outlier_pass(
    matrix: ScoreMatrix, cfg: ScoringConfig
) -> tuple[np.ndarray, list[DistributionStats]]:
    if matrix.n_scores == 0:
        raise PipelineError("empty score matrix", stage="detect_outliers")
    scores = matrix.scores_float()
    present = matrix.present
    mask = np.zeros(scores.shape, dtype=bool)
    stats: list[DistributionStats] = []
    for i, video_id in enumerate(matrix.videos):
        vals = scores[i][present[i]]
        if vals.size < cfg.min_ratings_for_outlier_test:
            continue
        mean = float(vals.mean())
        sd = float(vals.std(ddof=1))
        try:
            beta2, is_gaussian = kurtosis(vals, cfg)
        except DegenerateDistributionError:
            continue
        if sd <= cfg.sigma_floor:
            continue
        k = cfg.gaussian_sigma_mult if is_gaussian else cfg.nongaussian_sigma_mult
        row_dev = np.abs(np.where(present[i], scores[i], mean) - mean)
        mask[i] = present[i] & (row_dev > k * sd)
        stats.append(
            DistributionStats(video_id, mean, sd, beta2, int(vals.size), is_gaussian)
        )
    return mask, stats


def detect_outliers(matrix: ScoreMatrix, cfg: ScoringConfig | None = None) -> np.ndarray:
    """Single-pass outlier mask computed from the original, unmasked stats."""
    mask, _ = _outlier_pass(matrix, cfg or ScoringConfig())
    return mask


def reject_subjects(
    matrix: ScoreMatrix, mask: np.ndarray, cfg: ScoringConfig | None = None
) -> set[str]:
    """Subjects whose outlier fraction strictly exceeds the limit."""
    cfg = cfg or ScoringConfig()
    present = matrix.present
    totals = present.sum(axis=0)
    masked = (mask & present).sum(axis=0)
    rejected = set()
    for j, subject_id in enumerate(matrix.subjects):
        if totals[j] > 0 and masked[j] / totals[j] > cfg.subject_outlier_limit:
            rejected.add(subject_id)
    return rejected


def subject_stat(
    subject_id: str, values, cfg: ScoringConfig | None = None
) -> SubjectStats:
    """Mean and sample standard deviation of one subject's surviving scores."""
    cfg = cfg or ScoringConfig()
    x = np.asarray(values, dtype=np.float64)
    if x.size < 2:
        raise DegenerateSubjectError(
            f"n < 2 for subject {subject_id!r}", subject_id=subject_id, reason="n < 2"
        )
    sigma = float(x.std(ddof=1))
    if sigma <= cfg.sigma_floor:
        raise DegenerateSubjectError(
            f"constant scores for subject {subject_id!r}",
            subject_id=subject_id,
            reason="zero variance",
        )
    return SubjectStats(subject_id, float(x.mean()), sigma, int(x.size))


def subject_stats(
    matrix: ScoreMatrix,
    mask: np.ndarray | None = None,
    exclude_subjects: Iterable[str] = (),
    cfg: ScoringConfig | None = None,
) -> tuple[list[SubjectStats], list[tuple[str, str]]]:
    """Per-subject stats over unmasked scores.

    Returns (stats, excluded) where excluded lists (subject_id, reason)
    for degenerate subjects — they carry no ranking information and are
    dropped from the MOS with a report entry rather than assigned z = 0.
    """
    cfg = cfg or ScoringConfig()
    if mask is None:
        mask = np.zeros(matrix.tenths.shape, dtype=bool)
    excluded_set = set(exclude_subjects)
    scores = matrix.scores_float()
    surviving = matrix.present & ~mask
    stats: list[SubjectStats] = []
    excluded: list[tuple[str, str]] = []
    for j, subject_id in enumerate(matrix.subjects):
        if subject_id in excluded_set:
            continue
        vals = scores[:, j][surviving[:, j]]
        if vals.size == 0:
            continue
        try:
            stats.append(subject_stat(subject_id, vals, cfg))
        except DegenerateSubjectError as exc:
            excluded.append((subject_id, exc.details.get("reason", "degenerate")))
    return stats, excluded


def z_scores(
    matrix: ScoreMatrix,
    stats: Sequence[SubjectStats],
    mask: np.ndarray | None = None,
    exclude_subjects: Iterable[str] = (),
) -> np.ndarray:
    """z_ij = (r_ij - mu_i) / sigma_i over surviving cells, NaN elsewhere."""
    if mask is None:
        mask = np.zeros(matrix.tenths.shape, dtype=bool)
    excluded_set = set(exclude_subjects)
    by_id = {st.subject_id: st for st in stats}
    scores = matrix.scores_float()
    surviving = matrix.present & ~mask
    z = np.full(scores.shape, np.nan)
    for j, subject_id in enumerate(matrix.subjects):
        if subject_id in excluded_set:
            continue
        col = surviving[:, j]
        if not col.any():
            continue
        st = by_id.get(subject_id)
        if st is None:
            raise PipelineError(
                f"missing stats for surviving subject {subject_id!r}",
                stage="z_scores",
                subject_id=subject_id,
            )
        z[col, j] = (scores[col, j] - st.mu) / st.sigma
    return z


def rescale(z):
    """Linear map z' = 100(z + 3)/6; out-of-range values are preserved."""
    return 100.0 * (np.asarray(z, dtype=np.float64) + 3.0) / 6.0


def mos_to_level(mos: float) -> QualityLevel:
    """Left-closed MOS bins: bad <20, poor <40, fair <60, good <80, else excellent."""
    if not math.isfinite(mos):
        raise ValueError(f"MOS must be finite, got {mos!r}")
    if mos < 20.0:
        return QualityLevel.BAD
    if mos < 40.0:
        return QualityLevel.POOR
    if mos < 60.0:
        return QualityLevel.FAIR
    if mos < 80.0:
        return QualityLevel.GOOD
    return QualityLevel.EXCELLENT


def compute_mos(
    rescaled: np.ndarray, matrix: ScoreMatrix
) -> tuple[MosTable, list[str]]:
    """Average z' over each video's surviving raters.

    Videos with zero surviving scores are returned in the unscorable list,
    never silently dropped.
    """
    entries: list[MosEntry] = []
    unscorable: list[str] = []
    for i, video_id in enumerate(matrix.videos):
        vals = rescaled[i][np.isfinite(rescaled[i])]
        if vals.size == 0:
            unscorable.append(video_id)
            continue
        mos = float(vals.mean())
        sd = float(vals.std(ddof=1)) if vals.size >= 2 else 0.0
        entries.append(MosEntry(video_id, mos, sd, int(vals.size), mos_to_level(mos)))
    return MosTable(entries), unscorable


@dataclass(frozen=True)
class PipelineReport:
    """Aggregate accounting emitted alongside the MOS table.

    Conservation: total_scores = surviving_scores + masked_kept_scores +
    rejected_subject_scores, exactly. outlier_fraction counts every masked
    cell (including rejected subjects' cells) over all cells.
    """

    total_scores: int
    masked_scores: int
    outlier_fraction: float
    rejected_subjects: tuple[str, ...]
    rejected_subject_scores: int
    masked_kept_scores: int
    surviving_scores: int
    degenerate_subjects: tuple[tuple[str, str], ...]
    unscorable_videos: tuple[str, ...]
    out_of_range_rescaled: int
    n_videos: int
    n_subjects: int

    def to_dict(self) -> dict:
        return {
            "total_scores": self.total_scores,
            "masked_scores": self.masked_scores,
            "outlier_fraction": self.outlier_fraction,
            "rejected_subjects": sorted(self.rejected_subjects),
            "rejected_subject_scores": self.rejected_subject_scores,
            "masked_kept_scores": self.masked_kept_scores,
            "surviving_scores": self.surviving_scores,
            "degenerate_subjects": [
                {"subject_id": s, "reason": r} for s, r in self.degenerate_subjects
            ],
            "unscorable_videos": list(self.unscorable_videos),
            "out_of_range_rescaled": self.out_of_range_rescaled,
            "n_videos": self.n_videos,
            "n_subjects": self.n_subjects,
        }


@dataclass(frozen=True)
class ScoredStudy:
    """Everything the pipeline produced for one study's formal ratings."""

    matrix: ScoreMatrix  # carries the outlier mask
    rejected_subjects: frozenset[str]
    subject_stats: tuple[SubjectStats, ...]
    distribution_stats: tuple[DistributionStats, ...]
    mos_table: MosTable
    report: PipelineReport

    @property
    def outlier_fraction(self) -> float:
        return self.report.outlier_fraction


def score_matrix_pipeline(matrix: ScoreMatrix, cfg: ScoringConfig | None = None) -> ScoredStudy:
    """Run outlier masking, rejection, normalization, and MOS on a matrix."""
    cfg = cfg or ScoringConfig()
    try:
        mask, dist_stats = _outlier_pass(matrix, cfg)
    except PipelineError:
        raise
    except Exception as exc:  # pragma: no cover - defensive tagging
        raise PipelineError(str(exc), stage="detect_outliers")
    rejected = reject_subjects(matrix, mask, cfg)
    stats, degenerate = subject_stats(matrix, mask, rejected, cfg)
    excluded = rejected | {sid for sid, _ in degenerate}
    z = z_scores(matrix, stats, mask, excluded)
    zp = rescale(z)
    mos_table, unscorable = compute_mos(zp, matrix)

    present = matrix.present
    total = int(present.sum())
    masked_total = int(mask.sum())
    rejected_idx = [matrix.subject_index(s) for s in rejected]
    rejected_cols = np.zeros(len(matrix.subjects), dtype=bool)
    rejected_cols[rejected_idx] = True
    rejected_cells = int(present[:, rejected_cols].sum())
    masked_kept = int((mask & ~rejected_cols[None, :]).sum())
    surviving = total - rejected_cells - masked_kept
    finite = np.isfinite(zp)
    out_of_range = int(((zp < 0.0) | (zp > 100.0))[finite].sum())

    report = PipelineReport(
        total_scores=total,
        masked_scores=masked_total,
        outlier_fraction=masked_total / total,
        rejected_subjects=tuple(sorted(rejected)),
        rejected_subject_scores=rejected_cells,
        masked_kept_scores=masked_kept,
        surviving_scores=surviving,
        degenerate_subjects=tuple(degenerate),
        unscorable_videos=tuple(unscorable),
        out_of_range_rescaled=out_of_range,
        n_videos=len(matrix.videos),
        n_subjects=len(matrix.subjects),
    )
    return ScoredStudy(
        matrix=matrix.with_mask(mask),
        rejected_subjects=frozenset(rejected),
        subject_stats=tuple(stats),
        distribution_stats=tuple(dist_stats),
        mos_table=mos_table,
        report=report,
    )


def run_pipeline(
    events: Iterable[RatingEvent],
    manifest: Sequence[VideoRecord] | None = None,
    cfg: ScoringConfig | None = None,
) -> ScoredStudy:
    """End-to-end: formal rating events in, ScoredStudy out.

    Deterministic for fixed inputs and config; event order never matters.
    """
    formal = [ev for ev in events if ev.session_kind is SessionKind.FORMAL]
    if not formal:
        raise PipelineError("no formal ratings", stage="ingest")
    video_order = None
    if manifest is not None:
        video_order = [rec.video_id for rec in manifest]
    matrix = ScoreMatrix.from_events(formal, video_order=video_order)
    return score_matrix_pipeline(matrix, cfg)
