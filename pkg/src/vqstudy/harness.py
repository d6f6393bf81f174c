"""Benchmark and analysis toolkit: dataset splits, predictor evaluation,
subgroup MOS analyses, a linear feature baseline, and the synthetic-study
simulator used as the scoring pipeline's acceptance oracle.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .domain import (
    ATTRIBUTE_KEYS,
    EvalReport,
    FrameFeatures,
    MetricBlock,
    MosTable,
    Platform,
    RatingEvent,
    SessionKind,
    VideoRecord,
    quantize_score,
)
from .errors import DomainError, UndefinedCorrelationError
from .metrics import krcc, level_accuracy, plcc, srcc
from .scoring import mos_to_level

GROUP_KEYS = ("platform", "category") + ATTRIBUTE_KEYS

HISTOGRAM_BIN_WIDTH = 5.0
HISTOGRAM_RANGE = (0.0, 100.0)


@dataclass(frozen=True)
class SplitSpec:
    """Train/val/test fractions plus the shuffle seed."""

    train_frac: float = 0.80
    val_frac: float = 0.05
    test_frac: float = 0.15
    seed: int = 0

    def __post_init__(self):
        total = self.train_frac + self.val_frac + self.test_frac
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"fractions sum to {total}, expected 1")


@dataclass(frozen=True)
class Split:
    train: tuple[str, ...]
    val: tuple[str, ...]
    test: tuple[str, ...]

    def part(self, name: str) -> tuple[str, ...]:
        if name not in ("train", "val", "test"):
            raise ValueError(f"unknown split part {name!r}")
        return getattr(self, name)

    def to_dict(self) -> dict:
        return {"train": list(self.train), "val": list(self.val), "test": list(self.test)}


def split_dataset(manifest: Sequence, spec: SplitSpec | None = None) -> Split:
    """Seeded shuffle, then contiguous cut at floor boundaries.

    Val and test sizes are floor(frac * n); the remainder goes to train.
    The result is an exact partition: disjoint and covering.
    """
    spec = spec or SplitSpec()
    ids = [r.video_id if isinstance(r, VideoRecord) else str(r) for r in manifest]
    if not ids:
        raise DomainError("empty manifest")
    rng = np.random.default_rng(spec.seed)
    order = rng.permutation(len(ids))
    shuffled = [ids[i] for i in order]
    n = len(ids)
    n_val = math.floor(n * spec.val_frac)
    n_test = math.floor(n * spec.test_frac)
    n_train = n - n_val - n_test
    return Split(
        train=tuple(shuffled[:n_train]),
        val=tuple(shuffled[n_train : n_train + n_val]),
        test=tuple(shuffled[n_train + n_val :]),
    )


@dataclass(frozen=True)
class PredictionSet:
    """A named predictor's score per video."""

    predictor_name: str
    scores: Mapping[str, float]

    @classmethod
    def from_csv(cls, path: str, predictor_name: str | None = None) -> "PredictionSet":
        scores: dict[str, float] = {}
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            for row in reader:
                if not row or row[0] in ("video_id", ""):
                    continue
                scores[row[0]] = float(row[1])
        return cls(predictor_name or path, scores)


def _metric_block(
    preds: np.ndarray, targets: np.ndarray, notes: list[str], label: str
) -> MetricBlock:
    def guarded(fn):
        try:
            return fn(preds, targets)
        except UndefinedCorrelationError as exc:
            notes.append(f"{label}: {exc.message}")
            return None

    acc = level_accuracy(
        [mos_to_level(float(p)) for p in preds],
        [mos_to_level(float(t)) for t in targets],
    )
    return MetricBlock(
        srcc=guarded(srcc),
        plcc=guarded(plcc),
        krcc=guarded(krcc),
        level_accuracy=acc,
        n=int(preds.size),
    )


def evaluate(
    predictions: PredictionSet,
    mos: MosTable,
    subset_ids: Iterable[str] | None = None,
    manifest: Sequence[VideoRecord] | None = None,
    group_keys: Sequence[str] = (),
    dataset_id: str = "dataset",
) -> EvalReport:
    """Correlations and level accuracy over the prediction/MOS overlap.

    Missing predictions are reported, never imputed. PLCC is raw Pearson
    with no nonlinear mapping; whether published baselines used a logistic
    fit is unknown, so reports note that divergence risk.
    """
    wanted = set(mos.video_ids)
    if subset_ids is not None:
        wanted &= set(subset_ids)
    covered = sorted(wanted & set(predictions.scores))
    missing = tuple(sorted(wanted - set(predictions.scores)))
    if len(covered) < 2:
        raise DomainError(
            f"need >= 2 overlapping videos to evaluate, got {len(covered)}"
        )
    preds = np.array([predictions.scores[v] for v in covered], dtype=np.float64)
    targets = np.array([mos[v].mos for v in covered], dtype=np.float64)

    notes: list[str] = ["plcc is raw Pearson; no logistic mapping applied"]
    overall = _metric_block(preds, targets, notes, "overall")

    groups: dict[str, dict[str, MetricBlock]] = {}
    if group_keys:
        if manifest is None:
            raise DomainError("group evaluation requires a manifest")
        labels = {rec.video_id: _group_labels(rec) for rec in manifest}
        for key in group_keys:
            if key not in GROUP_KEYS:
                raise DomainError(f"unknown grouping key {key!r}")
            by_value: dict[str, list[int]] = {}
            for idx, vid in enumerate(covered):
                value = labels.get(vid, {}).get(key, "unknown")
                by_value.setdefault(value, []).append(idx)
            blocks = {}
            for value, idxs in sorted(by_value.items()):
                if len(idxs) < 2:
                    notes.append(f"group {key}={value}: n < 2, skipped")
                    continue
                blocks[value] = _metric_block(
                    preds[idxs], targets[idxs], notes, f"{key}={value}"
                )
            groups[key] = blocks
    return EvalReport(
        dataset_id=dataset_id,
        predictor_name=predictions.predictor_name,
        overall=overall,
        groups=groups,
        missing_predictions=missing,
        notes=tuple(notes),
    )


def _group_labels(rec: VideoRecord) -> dict[str, str]:
    labels = {"platform": rec.platform.value, "category": rec.category or "unknown"}
    for key in ATTRIBUTE_KEYS:
        labels[key] = rec.attributes.get(key, "unknown")
    return labels


@dataclass(frozen=True)
class GroupSummary:
    group_key: str
    group_value: str
    n: int
    mean: float
    median: float
    stddev: float
    hist: tuple[int, ...]  # counts per bin over [0, 100], width 5

    def to_dict(self) -> dict:
        return {
            "group_key": self.group_key,
            "group_value": self.group_value,
            "n": self.n,
            "mean": self.mean,
            "median": self.median,
            "stddev": self.stddev,
            "hist": list(self.hist),
        }


def histogram_bins() -> list[tuple[float, float]]:
    lo, hi = HISTOGRAM_RANGE
    n = int(round((hi - lo) / HISTOGRAM_BIN_WIDTH))
    return [(lo + i * HISTOGRAM_BIN_WIDTH, lo + (i + 1) * HISTOGRAM_BIN_WIDTH) for i in range(n)]


def group_analysis(
    mos: MosTable,
    manifest: Sequence[VideoRecord],
    group_keys: Sequence[str] = GROUP_KEYS,
) -> list[GroupSummary]:
    """Per-group MOS histograms (left-closed width-5 bins) and summaries.

    Bin counts conserve n per group: the handful of MOS values that fall
    outside [0, 100] (rescaling does not clip) land in the edge bins.
    """
    labels = {rec.video_id: _group_labels(rec) for rec in manifest}
    known = [e for e in mos if e.video_id in labels]
    n_bins = len(histogram_bins())
    out: list[GroupSummary] = []
    for key in group_keys:
        if key not in GROUP_KEYS:
            raise DomainError(f"unknown grouping key {key!r}")
        by_value: dict[str, list[float]] = {}
        for entry in known:
            by_value.setdefault(labels[entry.video_id][key], []).append(entry.mos)
        for value, values in sorted(by_value.items()):
            arr = np.asarray(values, dtype=np.float64)
            idx = np.clip(
                np.floor(arr / HISTOGRAM_BIN_WIDTH).astype(int), 0, n_bins - 1
            )
            hist = np.bincount(idx, minlength=n_bins)
            out.append(
                GroupSummary(
                    group_key=key,
                    group_value=value,
                    n=int(arr.size),
                    mean=float(arr.mean()),
                    median=float(np.median(arr)),
                    stddev=float(arr.std(ddof=1)) if arr.size >= 2 else 0.0,
                    hist=tuple(int(c) for c in hist),
                )
            )
    return out


def write_histograms_csv(summaries: Sequence[GroupSummary], path: str) -> None:
    bins = histogram_bins()
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["group", "bin_lo", "bin_hi", "count"])
        for s in summaries:
            for (lo, hi), count in zip(bins, s.hist):
                writer.writerow([f"{s.group_key}={s.group_value}", lo, hi, count])


@dataclass(frozen=True)
class BaselineModel:
    """Affine model: mos ~ intercept + weights . [brightness, contrast,
    colorfulness, sharpness]."""

    intercept: float
    weights: tuple[float, float, float, float]
    train_srcc: float | None
    used_ridge: bool

    def to_dict(self) -> dict:
        return {
            "intercept": self.intercept,
            "weights": list(self.weights),
            "train_srcc": self.train_srcc,
            "used_ridge": self.used_ridge,
        }


RIDGE_LAMBDA = 1e-6
MIN_BASELINE_SAMPLES = 6


def fit_baseline(
    features_by_video: Mapping[str, FrameFeatures], mos: MosTable
) -> BaselineModel:
    """Least squares of MOS on the four features, ridge on rank deficiency."""
    ids = sorted(set(features_by_video) & set(mos.video_ids))
    if len(ids) < MIN_BASELINE_SAMPLES:
        raise DomainError(
            f"need >= {MIN_BASELINE_SAMPLES} training videos, got {len(ids)}"
        )
    X = np.column_stack(
        [np.ones(len(ids))]
        + [
            np.array([features_by_video[v].as_vector()[k] for v in ids])
            for k in range(4)
        ]
    )
    y = np.array([mos[v].mos for v in ids], dtype=np.float64)
    beta, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    used_ridge = rank < X.shape[1]
    if used_ridge:
        # penalize the feature weights only, never the intercept
        penalty = RIDGE_LAMBDA * np.eye(X.shape[1])
        penalty[0, 0] = 0.0
        beta = np.linalg.solve(X.T @ X + penalty, X.T @ y)
    fitted = X @ beta
    try:
        train_srcc = srcc(fitted, y)
    except UndefinedCorrelationError:
        train_srcc = None
    return BaselineModel(
        intercept=float(beta[0]),
        weights=tuple(float(b) for b in beta[1:]),
        train_srcc=train_srcc,
        used_ridge=used_ridge,
    )


def predict_baseline(
    model: BaselineModel, features_by_video: Mapping[str, FrameFeatures]
) -> PredictionSet:
    w = np.asarray(model.weights)
    scores = {
        vid: float(model.intercept + w @ feats.as_vector())
        for vid, feats in features_by_video.items()
    }
    return PredictionSet("feature_baseline", scores)


@dataclass(frozen=True)
class SimulationParams:
    """Synthetic study: latent qualities plus biased, noisy raters.

    Honest subject i rates video j as gain_i * q_j + bias_i + noise,
    clamped to [0, 5] and snapped to the 0.1 grid; adversarial subjects
    rate uniformly at random. Deterministic under seed.
    """

    n_videos: int = 200
    n_subjects: int = 50
    latent_range: tuple[float, float] = (0.3, 4.7)
    gain_range: tuple[float, float] = (0.85, 1.15)
    bias_range: tuple[float, float] = (-0.4, 0.4)
    noise_sigma: float = 0.2
    adversarial_count: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.n_videos < 2 or self.n_subjects < 2:
            raise ValueError("need at least 2 videos and 2 subjects")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if not 0 <= self.adversarial_count <= self.n_subjects:
            raise ValueError("adversarial_count outside [0, n_subjects]")

    @classmethod
    def from_dict(cls, d: Mapping) -> "SimulationParams":
        kwargs = dict(d)
        for key in ("latent_range", "gain_range", "bias_range"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


@dataclass(frozen=True)
class SimulationResult:
    latent: Mapping[str, float]
    events: tuple[RatingEvent, ...]
    manifest: tuple[VideoRecord, ...]
    adversarial_subjects: tuple[str, ...]


def simulate_study(params: SimulationParams) -> SimulationResult:
    rng = np.random.default_rng(params.seed)
    video_ids = [f"sim{j:05d}" for j in range(params.n_videos)]
    subject_ids = [f"rater{i:03d}" for i in range(params.n_subjects)]
    adversarial = set(subject_ids[: params.adversarial_count])

    lo, hi = params.latent_range
    latent = rng.uniform(lo, hi, params.n_videos)
    gains = rng.uniform(*params.gain_range, params.n_subjects)
    biases = rng.uniform(*params.bias_range, params.n_subjects)

    # constant stamp keeps simulated logs byte-identical under a fixed seed
    stamp = "2000-01-01T00:00:00Z"
    events: list[RatingEvent] = []
    for i, sid in enumerate(subject_ids):
        if sid in adversarial:
            raw = rng.uniform(0.0, 5.0, params.n_videos)
        else:
            noise = rng.normal(0.0, params.noise_sigma, params.n_videos)
            raw = gains[i] * latent + biases[i] + noise
        for j, vid in enumerate(video_ids):
            clamped = min(5.0, max(0.0, float(raw[j])))
            events.append(
                RatingEvent(
                    subject_id=sid,
                    video_id=vid,
                    batch_id=0,
                    score_tenths=int(round(quantize_score(clamped) * 10)),
                    submitted_at=stamp,
                    session_kind=SessionKind.FORMAL,
                )
            )
    manifest = tuple(
        VideoRecord(
            video_id=vid,
            media_uri=f"{vid}.mp4",
            platform=Platform.OTHER,
            category="synthetic",
            fps=30.0,
            width=512,
            height=512,
            duration_s=5.0,
        )
        for vid in video_ids
    )
    return SimulationResult(
        latent={vid: float(q) for vid, q in zip(video_ids, latent)},
        events=tuple(events),
        manifest=manifest,
        adversarial_subjects=tuple(sorted(adversarial)),
    )


def write_latent_csv(latent: Mapping[str, float], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["video_id", "latent_quality"])
        for vid in sorted(latent):
            writer.writerow([vid, repr(latent[vid])])
