"""Shared domain types, validation, and JSON serialization.

Raw scores live on a 0.1 grid over [0, 5]. To keep that grid exact they are
stored internally as integer tenths (0..50) and exposed as decimals at the
boundary. All types are immutable values after construction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import ManifestError, OffGridScoreError, RatingLogError

SCORE_MAX_TENTHS = 50  # 5.0 on the raw scale


class Platform(str, Enum):
    TIKTOK = "tiktok"
    YOUTUBE = "youtube"
    OTHER = "other"


class SessionKind(str, Enum):
    TRAINING = "training"
    TESTING = "testing"
    FORMAL = "formal"


class SubjectStatus(str, Enum):
    REGISTERED = "registered"
    TRAINED = "trained"
    QUALIFIED = "qualified"
    ACTIVE = "active"
    REJECTED = "rejected"


# Forward-only lifecycle; rejected is terminal.
ALLOWED_STATUS_TRANSITIONS = {
    SubjectStatus.REGISTERED: {SubjectStatus.TRAINED},
    SubjectStatus.TRAINED: {SubjectStatus.QUALIFIED},
    SubjectStatus.QUALIFIED: {SubjectStatus.ACTIVE, SubjectStatus.REJECTED},
    SubjectStatus.ACTIVE: {SubjectStatus.ACTIVE, SubjectStatus.REJECTED},
    SubjectStatus.REJECTED: set(),
}


class QualityLevel(str, Enum):
    BAD = "bad"
    POOR = "poor"
    FAIR = "fair"
    GOOD = "good"
    EXCELLENT = "excellent"


ATTRIBUTE_KEYS = ("gender", "race", "age_group", "emotion")


def utc_now_rfc3339() -> str:
    """Current UTC time as an RFC-3339 string with a Z suffix."""
    return datetime.now(timezone.utc).isoformat().replace("+00:00", "Z")


def parse_rfc3339(ts: str) -> datetime:
    return datetime.fromisoformat(ts.replace("Z", "+00:00"))


def quantize_score(raw: float) -> float:
    """Snap a raw slider value in [0, 5] to the nearest 0.1 grid point.

    Decimal ties (e.g. 2.25) round half away from zero. Out-of-range input
    is rejected rather than clamped.
    """
    if not math.isfinite(raw) or raw < 0.0 or raw > 5.0:
        raise OffGridScoreError(f"score {raw!r} outside [0, 5]", score=raw)
    # round() kills float-representation noise so near-ties behave like
    # their decimal values; floor(+0.5) then rounds half up (= away from
    # zero on a nonnegative scale).
    tenths = math.floor(round(raw * 10.0, 9) + 0.5)
    return min(tenths, SCORE_MAX_TENTHS) / 10.0


def score_to_tenths(raw: float) -> int:
    """Convert an on-grid score to integer tenths; reject off-grid values."""
    if not math.isfinite(raw) or raw < 0.0 or raw > 5.0:
        raise OffGridScoreError(f"score {raw!r} outside [0, 5]", score=raw)
    tenths = int(round(raw * 10.0))
    if abs(raw * 10.0 - tenths) > 1e-6:
        raise OffGridScoreError(
            f"score {raw!r} is not on the 0.1 grid", score=raw
        )
    return tenths


@dataclass(frozen=True)
class VideoRecord:
    """One face video: identity, media location, and metadata labels."""

    video_id: str
    media_uri: str
    platform: Platform
    category: str
    fps: float
    width: int
    height: int
    duration_s: float
    frames_dir: str | None = None
    attributes: Mapping[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "video_id": self.video_id,
            "media_uri": self.media_uri,
            "platform": self.platform.value,
            "category": self.category,
            "fps": self.fps,
            "width": self.width,
            "height": self.height,
            "duration_s": self.duration_s,
        }
        if self.frames_dir is not None:
            d["frames_dir"] = self.frames_dir
        if self.attributes:
            d["attributes"] = dict(self.attributes)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "VideoRecord":
        try:
            return cls(
                video_id=str(d["video_id"]),
                media_uri=str(d["media_uri"]),
                platform=Platform(d.get("platform", "other")),
                category=str(d.get("category", "")),
                fps=float(d["fps"]),
                width=int(d["width"]),
                height=int(d["height"]),
                duration_s=float(d["duration_s"]),
                frames_dir=d.get("frames_dir"),
                attributes=dict(d.get("attributes") or {}),
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise ManifestError(f"malformed video record: {exc}", record=dict(d))


@dataclass(frozen=True)
class RatingEvent:
    """One subject's raw score for one video in one batch."""

    subject_id: str
    video_id: str
    batch_id: int
    score_tenths: int
    submitted_at: str
    replays: int = 0
    session_kind: SessionKind = SessionKind.FORMAL

    def __post_init__(self):
        if not 0 <= self.score_tenths <= SCORE_MAX_TENTHS:
            raise RatingLogError(
                f"score_tenths {self.score_tenths} outside 0..{SCORE_MAX_TENTHS}"
            )
        if self.batch_id < 0:
            raise RatingLogError(f"batch_id {self.batch_id} must be >= 0")
        if self.replays < 0:
            raise RatingLogError(f"replays {self.replays} must be >= 0")

    @property
    def raw_score(self) -> float:
        return self.score_tenths / 10.0

    def to_dict(self) -> dict:
        return {
            "subject_id": self.subject_id,
            "video_id": self.video_id,
            "batch_id": self.batch_id,
            "raw_score": self.raw_score,
            "submitted_at": self.submitted_at,
            "replays": self.replays,
            "session_kind": self.session_kind.value,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "RatingEvent":
        try:
            return cls(
                subject_id=str(d["subject_id"]),
                video_id=str(d["video_id"]),
                batch_id=int(d["batch_id"]),
                score_tenths=score_to_tenths(float(d["raw_score"])),
                submitted_at=str(d["submitted_at"]),
                replays=int(d.get("replays", 0)),
                session_kind=SessionKind(d.get("session_kind", "formal")),
            )
        except OffGridScoreError:
            raise
        except (KeyError, ValueError, TypeError) as exc:
            raise RatingLogError(f"malformed rating event: {exc}", record=dict(d))


@dataclass(frozen=True)
class SubjectProfile:
    subject_id: str
    status: SubjectStatus = SubjectStatus.REGISTERED
    completed_batches: tuple[tuple[int, str], ...] = ()
    outlier_ratio: float | None = None

    def to_dict(self) -> dict:
        return {
            "subject_id": self.subject_id,
            "status": self.status.value,
            "completed_batches": [list(b) for b in self.completed_batches],
            "outlier_ratio": self.outlier_ratio,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SubjectProfile":
        return cls(
            subject_id=str(d["subject_id"]),
            status=SubjectStatus(d["status"]),
            completed_batches=tuple(
                (int(b), str(t)) for b, t in d.get("completed_batches", [])
            ),
            outlier_ratio=d.get("outlier_ratio"),
        )


@dataclass(frozen=True)
class SubjectStats:
    """Per-subject mean and spread of surviving raw scores (mu_i, sigma_i)."""

    subject_id: str
    mu: float
    sigma: float
    n: int


@dataclass(frozen=True)
class DistributionStats:
    """Per-video score distribution summary used by the outlier test."""

    video_id: str
    mean: float
    stddev: float
    kurtosis_beta2: float
    n: int
    is_gaussian: bool


@dataclass(frozen=True)
class MosEntry:
    video_id: str
    mos: float
    stddev_rescaled: float
    n_raters: int
    level: QualityLevel

    def to_dict(self) -> dict:
        return {
            "video_id": self.video_id,
            "mos": self.mos,
            "stddev": self.stddev_rescaled,
            "n_raters": self.n_raters,
            "level": self.level.value,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "MosEntry":
        return cls(
            video_id=str(d["video_id"]),
            mos=float(d["mos"]),
            stddev_rescaled=float(d["stddev"]),
            n_raters=int(d["n_raters"]),
            level=QualityLevel(d["level"]),
        )


class MosTable:
    """Ordered per-video MOS entries with dict-style lookup by video_id."""

    def __init__(self, entries: Iterable[MosEntry]):
        self._entries = tuple(entries)
        self._by_id = {e.video_id: e for e in self._entries}
        if len(self._by_id) != len(self._entries):
            raise RatingLogError("duplicate video_id in MOS table")

    def __iter__(self) -> Iterator[MosEntry]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, video_id: str) -> bool:
        return video_id in self._by_id

    def __getitem__(self, video_id: str) -> MosEntry:
        return self._by_id[video_id]

    def __eq__(self, other) -> bool:
        return isinstance(other, MosTable) and self._entries == other._entries

    @property
    def video_ids(self) -> tuple[str, ...]:
        return tuple(e.video_id for e in self._entries)

    def mos_dict(self) -> dict[str, float]:
        return {e.video_id: e.mos for e in self._entries}

    def to_json(self) -> str:
        return json.dumps([e.to_dict() for e in self._entries], indent=2)

    @classmethod
    def from_json(cls, text: str) -> "MosTable":
        return cls(MosEntry.from_dict(d) for d in json.loads(text))


@dataclass(frozen=True)
class FrameFeatures:
    brightness: float
    contrast: float
    colorfulness: float
    sharpness: float

    def as_vector(self) -> np.ndarray:
        return np.array(
            [self.brightness, self.contrast, self.colorfulness, self.sharpness]
        )

    def to_dict(self) -> dict:
        return {
            "brightness": self.brightness,
            "contrast": self.contrast,
            "colorfulness": self.colorfulness,
            "sharpness": self.sharpness,
        }


@dataclass(frozen=True)
class MetricBlock:
    """Correlations and level accuracy for one prediction/target subset.

    Correlations are None when undefined (constant series), never NaN.
    """

    srcc: float | None
    plcc: float | None
    krcc: float | None
    level_accuracy: float
    n: int

    def to_dict(self) -> dict:
        return {
            "srcc": self.srcc,
            "plcc": self.plcc,
            "krcc": self.krcc,
            "level_accuracy": self.level_accuracy,
            "n": self.n,
        }


@dataclass(frozen=True)
class EvalReport:
    """Predictor-vs-MOS evaluation, overall and per subgroup."""

    dataset_id: str
    predictor_name: str
    overall: MetricBlock
    groups: Mapping[str, Mapping[str, MetricBlock]] = field(default_factory=dict)
    missing_predictions: tuple[str, ...] = ()
    notes: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "predictor_name": self.predictor_name,
            "overall": self.overall.to_dict(),
            "groups": {
                key: {g: blk.to_dict() for g, blk in sorted(vals.items())}
                for key, vals in sorted(self.groups.items())
            },
            "missing_predictions": sorted(self.missing_predictions),
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


@dataclass(frozen=True)
class ManifestViolation:
    video_id: str
    message: str
    fatal: bool = True

    def to_dict(self) -> dict:
        return {"video_id": self.video_id, "message": self.message, "fatal": self.fatal}


def validate_manifest(
    manifest: Sequence[VideoRecord], check_media: bool = False
) -> list[ManifestViolation]:
    """Check manifest invariants; returns violations (empty list = valid).

    Unreadable media files are flagged as non-fatal so a manifest can be
    validated on a machine that does not hold the media.
    """
    violations: list[ManifestViolation] = []
    if not manifest:
        violations.append(ManifestViolation("", "manifest is empty"))
        return violations
    seen: set[str] = set()
    for rec in manifest:
        if rec.video_id in seen:
            violations.append(
                ManifestViolation(rec.video_id, f"duplicate id {rec.video_id}")
            )
        seen.add(rec.video_id)
        if not rec.video_id:
            violations.append(ManifestViolation(rec.video_id, "empty video_id"))
        if rec.fps <= 0:
            violations.append(ManifestViolation(rec.video_id, "fps must be > 0"))
        if rec.width <= 0 or rec.height <= 0:
            violations.append(
                ManifestViolation(rec.video_id, "width and height must be > 0")
            )
        if rec.duration_s <= 0:
            violations.append(
                ManifestViolation(rec.video_id, "duration_s must be > 0")
            )
        if check_media:
            import os

            if not os.path.exists(rec.media_uri):
                violations.append(
                    ManifestViolation(
                        rec.video_id,
                        f"media not readable: {rec.media_uri}",
                        fatal=False,
                    )
                )
    return violations


def load_manifest(path: str, check_media: bool = False) -> list[VideoRecord]:
    """Parse and validate a manifest file (JSON array of video records)."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, list):
        raise ManifestError("manifest must be a JSON array")
    records = [VideoRecord.from_dict(d) for d in raw]
    violations = [v for v in validate_manifest(records, check_media) if v.fatal]
    if violations:
        raise ManifestError(
            "manifest validation failed",
            violations=[v.to_dict() for v in violations],
        )
    return records


def dump_manifest(records: Sequence[VideoRecord], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([r.to_dict() for r in records], fh, indent=2)


def read_rating_log(path: str) -> list[RatingEvent]:
    """Read a newline-delimited JSON rating log."""
    events = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                events.append(RatingEvent.from_dict(json.loads(line)))
            except json.JSONDecodeError as exc:
                raise RatingLogError(
                    f"bad JSON on line {lineno}: {exc}", line=lineno
                )
    return events


def append_rating_log(events: Iterable[RatingEvent], path: str) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        for ev in events:
            fh.write(json.dumps(ev.to_dict(), sort_keys=True) + "\n")


class ScoreMatrix:
    """Videos x subjects raw-score table plus outlier mask.

    Scores are stored as integer tenths with -1 marking missing cells; the
    mask marks outlier-excluded cells and may only cover present cells.
    Arrays are frozen after construction.
    """

    def __init__(
        self,
        videos: Sequence[str],
        subjects: Sequence[str],
        tenths: np.ndarray,
        mask: np.ndarray | None = None,
    ):
        self.videos = tuple(videos)
        self.subjects = tuple(subjects)
        tenths = np.asarray(tenths, dtype=np.int16)
        if tenths.shape != (len(self.videos), len(self.subjects)):
            raise RatingLogError(
                f"score array shape {tenths.shape} does not match "
                f"{len(self.videos)} videos x {len(self.subjects)} subjects"
            )
        if mask is None:
            mask = np.zeros(tenths.shape, dtype=bool)
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != tenths.shape:
            raise RatingLogError("mask shape does not match score shape")
        if np.any(mask & (tenths < 0)):
            raise RatingLogError("mask covers a missing score cell")
        self.tenths = tenths
        self.mask = mask
        self.tenths.setflags(write=False)
        self.mask.setflags(write=False)
        self._video_index = {v: i for i, v in enumerate(self.videos)}
        self._subject_index = {s: i for i, s in enumerate(self.subjects)}

    @property
    def present(self) -> np.ndarray:
        return self.tenths >= 0

    @property
    def n_scores(self) -> int:
        return int(self.present.sum())

    def scores_float(self) -> np.ndarray:
        """Raw scores as float64 with NaN at missing cells."""
        out = self.tenths.astype(np.float64) / 10.0
        out[~self.present] = np.nan
        return out

    def video_index(self, video_id: str) -> int:
        return self._video_index[video_id]

    def subject_index(self, subject_id: str) -> int:
        return self._subject_index[subject_id]

    def with_mask(self, mask: np.ndarray) -> "ScoreMatrix":
        return ScoreMatrix(self.videos, self.subjects, self.tenths, mask)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ScoreMatrix)
            and self.videos == other.videos
            and self.subjects == other.subjects
            and np.array_equal(self.tenths, other.tenths)
            and np.array_equal(self.mask, other.mask)
        )

    @classmethod
    def from_events(
        cls,
        events: Iterable[RatingEvent],
        video_order: Sequence[str] | None = None,
    ) -> "ScoreMatrix":
        """Assemble a matrix from formal rating events.

        Row/column order comes from `video_order` (e.g. the manifest) and
        sorted subject ids, so the result is independent of event order.
        Duplicate (subject, video) formal pairs are rejected.
        """
        cells: dict[tuple[str, str], int] = {}
        for ev in events:
            if ev.session_kind is not SessionKind.FORMAL:
                continue
            key = (ev.subject_id, ev.video_id)
            if key in cells:
                raise RatingLogError(
                    f"duplicate formal rating for subject {ev.subject_id!r} "
                    f"video {ev.video_id!r}",
                    subject_id=ev.subject_id,
                    video_id=ev.video_id,
                )
            cells[key] = ev.score_tenths
        if video_order is None:
            videos = sorted({v for _, v in cells})
        else:
            videos = [v for v in video_order]
            known = set(videos)
            for _, v in cells:
                if v not in known:
                    raise RatingLogError(
                        f"rating references unknown video {v!r}", video_id=v
                    )
        subjects = sorted({s for s, _ in cells})
        tenths = np.full((len(videos), len(subjects)), -1, dtype=np.int16)
        vidx = {v: i for i, v in enumerate(videos)}
        sidx = {s: i for i, s in enumerate(subjects)}
        for (s, v), t in cells.items():
            tenths[vidx[v], sidx[s]] = t
        return cls(videos, subjects, tenths)

    def to_dict(self) -> dict:
        vi, si = np.nonzero(self.present)
        return {
            "videos": list(self.videos),
            "subjects": list(self.subjects),
            "cells": [
                [int(i), int(j), self.tenths[i, j] / 10.0] for i, j in zip(vi, si)
            ],
            "masked": [[int(i), int(j)] for i, j in zip(*np.nonzero(self.mask))],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ScoreMatrix":
        videos = list(d["videos"])
        subjects = list(d["subjects"])
        tenths = np.full((len(videos), len(subjects)), -1, dtype=np.int16)
        for i, j, score in d["cells"]:
            tenths[int(i), int(j)] = score_to_tenths(float(score))
        mask = np.zeros(tenths.shape, dtype=bool)
        for i, j in d.get("masked", []):
            mask[int(i), int(j)] = True
        return cls(videos, subjects, tenths, mask)
