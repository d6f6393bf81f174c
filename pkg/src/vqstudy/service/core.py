"""Study lifecycle engine: subjects, training/testing gate, batch
scheduling with fatigue limits, rating ingestion, and per-batch screening.

All mutations are serialized through a per-study lock and persisted as
append-only events before being applied in memory; replaying the log
reconstructs state exactly. Reads are lock-free snapshots of immutable-ish
state plus per-subject progress dicts.
"""

from __future__ import annotations

import json
import math
import threading
import uuid
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from ..domain import (
    QualityLevel,
    RatingEvent,
    ScoreMatrix,
    SessionKind,
    SubjectProfile,
    SubjectStatus,
    VideoRecord,
    parse_rfc3339,
    score_to_tenths,
    utc_now_rfc3339,
    validate_manifest,
)
from ..errors import ManifestError, StudyError
from ..scoring import ScoringConfig, detect_outliers, reject_subjects
from .store import EventLog, list_study_ids, study_log_path

HALF_DAY_SECONDS = 12 * 3600

# Rating criteria shown during subject training, one text per level.
# Studies may override them in the creation payload.
DEFAULT_CRITERIA: dict[QualityLevel, str] = {
    QualityLevel.EXCELLENT: (
        "The video quality is excellent, presenting a clear and well-defined "
        "portrait. The lighting is natural and balanced. The camera and human "
        "motions are stable."
    ),
    QualityLevel.GOOD: (
        "The video quality is good, which is slightly worse or has a few minor "
        "problems compared to the \"excellent\" one. For example, the video "
        "exhibits slightly reduced clarity and minor shakiness, however, the "
        "overall quality remains very high."
    ),
    QualityLevel.FAIR: (
        "The video quality is moderate, with minor issues such as mild "
        "blurriness, shakiness, and unnatural colors. Nonetheless, the overall "
        "quality remains acceptable."
    ),
    QualityLevel.POOR: (
        "The video quality is relatively poor, with noticeable issues including "
        "significant color distortion, blurriness, low lighting conditions, and "
        "camera instability."
    ),
    QualityLevel.BAD: (
        "The video quality is extremely poor, exhibiting severe distortion that "
        "significantly impacts the overall visual presentation."
    ),
}


def half_day_window(ts: str) -> int:
    """Index of the fixed 12-hour UTC window containing an RFC-3339 time."""
    return int(parse_rfc3339(ts).timestamp()) // HALF_DAY_SECONDS


@dataclass(frozen=True)
class StudyConfig:
    batch_size: int = 500
    max_batches_per_half_day: int = 2
    test_set_size: int = 15
    test_pass_threshold: int = 12
    test_tolerance: float = 1.0
    test_max_attempts: int = 2
    shuffle_seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise StudyError("batch_size must be >= 1")
        if self.test_set_size < 1:
            raise StudyError("test_set_size must be >= 1")
        if not 0 < self.test_pass_threshold <= self.test_set_size:
            raise StudyError("test_pass_threshold outside 1..test_set_size")

    def to_dict(self) -> dict:
        return {
            "batch_size": self.batch_size,
            "max_batches_per_half_day": self.max_batches_per_half_day,
            "test_set_size": self.test_set_size,
            "test_pass_threshold": self.test_pass_threshold,
            "test_tolerance": self.test_tolerance,
            "test_max_attempts": self.test_max_attempts,
            "shuffle_seed": self.shuffle_seed,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "StudyConfig":
        return cls(**dict(d))


@dataclass
class _SubjectState:
    subject_id: str
    status: SubjectStatus = SubjectStatus.REGISTERED
    completed_batches: list[tuple[int, str]] = field(default_factory=list)
    outlier_ratio: float | None = None
    test_attempts: int = 0
    rated: dict[str, int] = field(default_factory=dict)  # video_id -> tenths
    rated_in_batch: dict[int, int] = field(default_factory=dict)

    def profile(self) -> SubjectProfile:
        return SubjectProfile(
            subject_id=self.subject_id,
            status=self.status,
            completed_batches=tuple(self.completed_batches),
            outlier_ratio=self.outlier_ratio,
        )


class _StudyState:
    """In-memory state for one study, derived purely from its event log."""

    def __init__(self):
        self.study_id: str = ""
        self.config: StudyConfig = StudyConfig()
        self.scoring: ScoringConfig = ScoringConfig()
        self.videos: dict[str, VideoRecord] = {}
        self.batches: list[list[str]] = []
        self.training: list[dict] = []
        self.test_videos: list[dict] = []  # {"video_id", "anchor"}
        self.subjects: dict[str, _SubjectState] = {}
        self.ratings: list[dict] = []  # formal rating events, append order
        self.screened: dict[int, dict] = {}

    # -- event application (the only way state changes) -----------------

    def apply(self, ev: dict) -> None:
        handler = getattr(self, f"_apply_{ev['type']}")
        handler(ev)

    def _apply_study_created(self, ev: dict) -> None:
        self.study_id = ev["study_id"]
        self.config = StudyConfig.from_dict(ev["config"])
        self.scoring = ScoringConfig.from_dict(ev["scoring"])
        self.videos = {
            d["video_id"]: VideoRecord.from_dict(d) for d in ev["manifest"]
        }
        self.batches = [list(batch) for batch in ev["batches"]]
        self.training = list(ev["training"])
        self.test_videos = list(ev["test_videos"])

    def _apply_subject_registered(self, ev: dict) -> None:
        self.subjects[ev["subject_id"]] = _SubjectState(ev["subject_id"])

    def _apply_subject_trained(self, ev: dict) -> None:
        self.subjects[ev["subject_id"]].status = SubjectStatus.TRAINED

    def _apply_test_submitted(self, ev: dict) -> None:
        subject = self.subjects[ev["subject_id"]]
        subject.test_attempts += 1
        if ev["passed"]:
            subject.status = SubjectStatus.QUALIFIED

    def _apply_rating_submitted(self, ev: dict) -> None:
        subject = self.subjects[ev["subject_id"]]
        if subject.status is SubjectStatus.QUALIFIED:
            subject.status = SubjectStatus.ACTIVE
        batch_id = ev["batch_id"]
        subject.rated[ev["video_id"]] = score_to_tenths(ev["raw_score"])
        subject.rated_in_batch[batch_id] = subject.rated_in_batch.get(batch_id, 0) + 1
        if subject.rated_in_batch[batch_id] == len(self.batches[batch_id]):
            subject.completed_batches.append((batch_id, ev["ts"]))
        self.ratings.append(ev)

    def _apply_batch_screened(self, ev: dict) -> None:
        self.screened[ev["batch_id"]] = ev
        for sid, ratio in ev["outlier_ratios"].items():
            if sid in self.subjects:
                self.subjects[sid].outlier_ratio = ratio
        for sid in ev["rejected"]:
            if sid in self.subjects:
                self.subjects[sid].status = SubjectStatus.REJECTED

    # -- derived views ---------------------------------------------------

    @property
    def closed(self) -> bool:
        return len(self.batches) > 0 and len(self.screened) == len(self.batches)

    def current_batch(self, subject: _SubjectState) -> int | None:
        """First batch the subject has not finished, or None when done."""
        for b, batch in enumerate(self.batches):
            if subject.rated_in_batch.get(b, 0) < len(batch):
                return b
        return None

    def completed_in_window(self, subject: _SubjectState, now_ts: str) -> int:
        window = half_day_window(now_ts)
        return sum(
            1 for _, ts in subject.completed_batches if half_day_window(ts) == window
        )

    def assigned_subjects(self) -> list[str]:
        return sorted(
            sid
            for sid, s in self.subjects.items()
            if s.status in (SubjectStatus.QUALIFIED, SubjectStatus.ACTIVE)
        )


class StudyService:
    """All studies under one data directory, replayed from disk at startup."""

    def __init__(self, data_dir: str, now_fn: Callable[[], str] | None = None):
        self.data_dir = data_dir
        self.now = now_fn or utc_now_rfc3339
        self._studies: dict[str, _StudyState] = {}
        self._logs: dict[str, EventLog] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()
        for study_id in list_study_ids(data_dir):
            self._load(study_id)

    def _load(self, study_id: str) -> None:
        log = EventLog(study_log_path(self.data_dir, study_id))
        state = _StudyState()
        for ev in log.replay():
            state.apply(ev)
        self._studies[study_id] = state
        self._logs[study_id] = log
        self._locks[study_id] = threading.Lock()

    def _state(self, study_id: str) -> _StudyState:
        state = self._studies.get(study_id)
        if state is None:
            raise StudyError(f"unknown study {study_id!r}", status=404)
        return state

    def _commit(self, study_id: str, event: dict) -> None:
        self._logs[study_id].append(event)
        self._studies[study_id].apply(event)

    # -- study creation ---------------------------------------------------

    def create_study(
        self,
        manifest: Sequence[VideoRecord],
        config: StudyConfig | None = None,
        training: Sequence[Mapping] = (),
        test_videos: Sequence[Mapping] = (),
        scoring: ScoringConfig | None = None,
        study_id: str | None = None,
    ) -> str:
        config = config or StudyConfig()
        scoring = scoring or ScoringConfig()
        violations = [v for v in validate_manifest(manifest) if v.fatal]
        if violations:
            raise ManifestError(
                "manifest validation failed",
                violations=[v.to_dict() for v in violations],
            )
        known = {rec.video_id for rec in manifest}

        training_items = []
        for item in training:
            vid = item["video_id"]
            if vid not in known:
                raise StudyError(f"training video {vid!r} not in manifest")
            level = QualityLevel(item["level"])
            criteria = item.get("criteria") or DEFAULT_CRITERIA[level]
            training_items.append(
                {"video_id": vid, "level": level.value, "criteria": criteria}
            )

        test_items = []
        for item in test_videos:
            vid = item["video_id"]
            if vid not in known:
                raise StudyError(f"test video {vid!r} not in manifest")
            test_items.append(
                {"video_id": vid, "anchor": score_to_tenths(float(item["anchor"])) / 10.0}
            )
        if test_items and len(test_items) != config.test_set_size:
            raise StudyError(
                f"{len(test_items)} test videos configured but "
                f"test_set_size is {config.test_set_size}"
            )

        held_out = {t["video_id"] for t in training_items} | {
            t["video_id"] for t in test_items
        }
        formal_ids = [rec.video_id for rec in manifest if rec.video_id not in held_out]
        if not formal_ids:
            raise StudyError("no formal videos left after training/test hold-out")
        rng = np.random.default_rng(config.shuffle_seed)
        shuffled = [formal_ids[i] for i in rng.permutation(len(formal_ids))]
        n_batches = math.ceil(len(shuffled) / config.batch_size)
        batches = [
            shuffled[b * config.batch_size : (b + 1) * config.batch_size]
            for b in range(n_batches)
        ]

        study_id = study_id or uuid.uuid4().hex[:12]
        with self._registry_lock:
            if study_id in self._studies:
                raise StudyError(f"duplicate study id {study_id!r}", status=409)
            log = EventLog(study_log_path(self.data_dir, study_id))
            state = _StudyState()
            self._studies[study_id] = state
            self._logs[study_id] = log
            self._locks[study_id] = threading.Lock()
        self._commit(
            study_id,
            {
                "type": "study_created",
                "ts": self.now(),
                "study_id": study_id,
                "config": config.to_dict(),
                "scoring": scoring.to_dict(),
                "manifest": [rec.to_dict() for rec in manifest],
                "batches": batches,
                "training": training_items,
                "test_videos": test_items,
            },
        )
        return study_id

    # -- subject lifecycle --------------------------------------------------

    def register_subject(self, study_id: str, subject_id: str) -> SubjectProfile:
        with self._locks[self._require(study_id)]:
            state = self._state(study_id)
            if state.closed:
                raise StudyError("study is closed", status=409)
            if subject_id in state.subjects:
                raise StudyError(
                    f"duplicate subject {subject_id!r}", status=409
                )
            self._commit(
                study_id,
                {
                    "type": "subject_registered",
                    "ts": self.now(),
                    "subject_id": subject_id,
                },
            )
            return state.subjects[subject_id].profile()

    def _require(self, study_id: str) -> str:
        self._state(study_id)
        return study_id

    def _subject(self, state: _StudyState, subject_id: str) -> _SubjectState:
        subject = state.subjects.get(subject_id)
        if subject is None:
            raise StudyError(f"unknown subject {subject_id!r}", status=404)
        return subject

    def get_profile(self, study_id: str, subject_id: str) -> SubjectProfile:
        return self._subject(self._state(study_id), subject_id).profile()

    def training_materials(self, study_id: str) -> list[dict]:
        state = self._state(study_id)
        if not state.training:
            raise StudyError("study has no training set", status=404)
        return [
            {
                "video_id": item["video_id"],
                "media_url": f"/media/{item['video_id']}",
                "level": item["level"],
                "criteria": item["criteria"],
            }
            for item in state.training
        ]

    def acknowledge_training(self, study_id: str, subject_id: str) -> SubjectProfile:
        with self._locks[self._require(study_id)]:
            state = self._state(study_id)
            subject = self._subject(state, subject_id)
            if subject.status is not SubjectStatus.REGISTERED:
                raise StudyError(
                    f"subject is {subject.status.value}, expected registered",
                    status=409,
                )
            self._commit(
                study_id,
                {
                    "type": "subject_trained",
                    "ts": self.now(),
                    "subject_id": subject_id,
                },
            )
            return subject.profile()

    def submit_test_ratings(
        self, study_id: str, subject_id: str, ratings: Sequence[Mapping]
    ) -> dict:
        """Grade the qualification gate; one retry allowed."""
        with self._locks[self._require(study_id)]:
            state = self._state(study_id)
            subject = self._subject(state, subject_id)
            if subject.status is not SubjectStatus.TRAINED:
                raise StudyError(
                    f"subject is {subject.status.value}, expected trained",
                    status=409,
                )
            if not state.test_videos:
                raise StudyError("study has no testing set", status=404)
            if subject.test_attempts >= state.config.test_max_attempts:
                raise StudyError("test attempts exhausted", status=409)
            expected = {t["video_id"]: t["anchor"] for t in state.test_videos}
            if len(ratings) != state.config.test_set_size:
                raise StudyError(
                    f"expected {state.config.test_set_size} test ratings, "
                    f"got {len(ratings)}"
                )
            got_ids = [r["video_id"] for r in ratings]
            if sorted(got_ids) != sorted(expected):
                raise StudyError("ratings do not cover the designated test videos")
            tol_tenths = int(round(state.config.test_tolerance * 10))
            n_within = 0
            graded = []
            for r in ratings:
                tenths = score_to_tenths(float(r["raw_score"]))
                anchor_tenths = int(round(expected[r["video_id"]] * 10))
                within = abs(tenths - anchor_tenths) <= tol_tenths
                n_within += within
                graded.append(
                    {"video_id": r["video_id"], "raw_score": tenths / 10.0}
                )
            passed = n_within >= state.config.test_pass_threshold
            self._commit(
                study_id,
                {
                    "type": "test_submitted",
                    "ts": self.now(),
                    "subject_id": subject_id,
                    "ratings": graded,
                    "passed": passed,
                    "n_within": n_within,
                    "attempt": subject.test_attempts + 1,
                },
            )
            attempts_left = state.config.test_max_attempts - subject.test_attempts
            return {
                "result": "qualified" if passed else "failed",
                "detail": {
                    "n_within": n_within,
                    "threshold": state.config.test_pass_threshold,
                    "attempts_used": subject.test_attempts,
                    "attempts_left": attempts_left,
                    "exhausted": (not passed) and attempts_left == 0,
                },
            }

    # -- formal rating loop ---------------------------------------------------

    def _next_for(self, state: _StudyState, subject: _SubjectState, now_ts: str) -> dict:
        if subject.status is SubjectStatus.REJECTED:
            return {"status": "blocked", "reason": "rejected"}
        if subject.status not in (SubjectStatus.QUALIFIED, SubjectStatus.ACTIVE):
            raise StudyError(
                f"subject is {subject.status.value}, expected qualified or active",
                status=409,
            )
        batch = state.current_batch(subject)
        if batch is None:
            return {
                "status": "batch_complete",
                "study_complete": True,
                "completed_batches": len(subject.completed_batches),
            }
        rated = subject.rated_in_batch.get(batch, 0)
        if (
            rated == 0
            and state.completed_in_window(subject, now_ts)
            >= state.config.max_batches_per_half_day
        ):
            return {"status": "blocked", "reason": "fatigue_limit"}
        video_id = state.batches[batch][rated]
        return {
            "status": "item",
            "video_id": video_id,
            "media_url": f"/media/{video_id}",
            "batch_id": batch,
            "progress": {"rated": rated, "batch_size": len(state.batches[batch])},
        }

    def next_item(self, study_id: str, subject_id: str) -> dict:
        state = self._state(study_id)
        return self._next_for(state, self._subject(state, subject_id), self.now())

    def submit_rating(
        self,
        study_id: str,
        subject_id: str,
        video_id: str,
        raw_score: float,
        replays: int = 0,
        playback_completed: bool = False,
    ) -> dict:
        """Append one formal rating exactly once; resubmits are idempotent."""
        tenths = score_to_tenths(float(raw_score))
        with self._locks[self._require(study_id)]:
            state = self._state(study_id)
            subject = self._subject(state, subject_id)
            if not playback_completed:
                raise StudyError(
                    "rating rejected: playback has not completed", status=409
                )
            if video_id in subject.rated:
                if subject.rated[video_id] == tenths:
                    return {
                        "accepted": True,
                        "duplicate": True,
                        "video_id": video_id,
                    }
                raise StudyError(
                    f"conflicting duplicate rating for {video_id!r}", status=409
                )
            nxt = self._next_for(state, subject, self.now())
            if nxt["status"] == "blocked":
                raise StudyError(f"subject is blocked: {nxt['reason']}", status=409)
            if nxt["status"] != "item" or nxt["video_id"] != video_id:
                raise StudyError(
                    f"out-of-order rating: expected "
                    f"{nxt.get('video_id', '<none>')!r}, got {video_id!r}",
                    status=409,
                )
            self._commit(
                study_id,
                {
                    "type": "rating_submitted",
                    "ts": self.now(),
                    "subject_id": subject_id,
                    "video_id": video_id,
                    "batch_id": nxt["batch_id"],
                    "raw_score": tenths / 10.0,
                    "replays": int(replays),
                },
            )
            rated = subject.rated_in_batch.get(nxt["batch_id"], 0)
            batch_size = len(state.batches[nxt["batch_id"]])
            return {
                "accepted": True,
                "duplicate": False,
                "video_id": video_id,
                "batch_id": nxt["batch_id"],
                "progress": {"rated": rated, "batch_size": batch_size},
                "batch_complete": rated == batch_size,
            }

    # -- screening and export -------------------------------------------------

    def batch_matrix(self, study_id: str, batch_id: int) -> ScoreMatrix:
        state = self._state(study_id)
        if not 0 <= batch_id < len(state.batches):
            raise StudyError(f"unknown batch {batch_id}", status=404)
        videos = state.batches[batch_id]
        subjects = state.assigned_subjects()
        tenths = np.full((len(videos), len(subjects)), -1, dtype=np.int16)
        for j, sid in enumerate(subjects):
            rated = state.subjects[sid].rated
            for i, vid in enumerate(videos):
                if vid in rated:
                    tenths[i, j] = rated[vid]
        return ScoreMatrix(videos, subjects, tenths)

    def batch_screening(self, study_id: str, batch_id: int) -> dict:
        """Outlier detection + subject rejection restricted to one batch."""
        with self._locks[self._require(study_id)]:
            state = self._state(study_id)
            if not 0 <= batch_id < len(state.batches):
                raise StudyError(f"unknown batch {batch_id}", status=404)
            if batch_id in state.screened:
                raise StudyError(f"batch {batch_id} already screened", status=409)
            assigned = state.assigned_subjects()
            if not assigned:
                raise StudyError("no assigned subjects to screen", status=409)
            batch_size = len(state.batches[batch_id])
            incomplete = [
                sid
                for sid in assigned
                if state.subjects[sid].rated_in_batch.get(batch_id, 0) < batch_size
            ]
            if incomplete:
                raise StudyError(
                    "batch incomplete",
                    status=409,
                    waiting_on=incomplete,
                )
            matrix = self.batch_matrix(study_id, batch_id)
            mask = detect_outliers(matrix, state.scoring)
            rejected = sorted(reject_subjects(matrix, mask, state.scoring))
            present = matrix.present
            totals = present.sum(axis=0)
            masked = (mask & present).sum(axis=0)
            ratios = {
                sid: (float(masked[j] / totals[j]) if totals[j] else 0.0)
                for j, sid in enumerate(matrix.subjects)
            }
            self._commit(
                study_id,
                {
                    "type": "batch_screened",
                    "ts": self.now(),
                    "batch_id": batch_id,
                    "rejected": rejected,
                    "outlier_ratios": ratios,
                    "outlier_cells": int(mask.sum()),
                },
            )
            return {
                "batch_id": batch_id,
                "rejected": rejected,
                "outlier_ratios": ratios,
            }

    def export_ratings(self, study_id: str) -> str:
        """All formal ratings as NDJSON, byte-stable for identical state."""
        state = self._state(study_id)
        lines = []
        for ev in state.ratings:
            record = RatingEvent(
                subject_id=ev["subject_id"],
                video_id=ev["video_id"],
                batch_id=ev["batch_id"],
                score_tenths=score_to_tenths(ev["raw_score"]),
                submitted_at=ev["ts"],
                replays=ev.get("replays", 0),
                session_kind=SessionKind.FORMAL,
            )
            lines.append(json.dumps(record.to_dict(), sort_keys=True))
        return "\n".join(lines) + ("\n" if lines else "")

    def media_path(self, video_id: str) -> str | None:
        for state in self._studies.values():
            rec = state.videos.get(video_id)
            if rec is not None:
                return rec.media_uri
        return None

    def study_summary(self, study_id: str) -> dict:
        state = self._state(study_id)
        return {
            "study_id": state.study_id,
            "config": state.config.to_dict(),
            "n_videos": len(state.videos),
            "n_batches": len(state.batches),
            "batch_sizes": [len(b) for b in state.batches],
            "n_subjects": len(state.subjects),
            "screened_batches": sorted(state.screened),
            "closed": state.closed,
        }

    def session_view(self, study_id: str, subject_id: str) -> dict:
        """Profile plus the resume cursor the UI needs after a reload."""
        state = self._state(study_id)
        subject = self._subject(state, subject_id)
        batch = state.current_batch(subject)
        if subject.status is SubjectStatus.REGISTERED:
            phase = "training"
        elif subject.status is SubjectStatus.TRAINED:
            phase = "testing"
        elif subject.status is SubjectStatus.REJECTED:
            phase = "done"
        else:
            phase = "formal" if batch is not None else "done"
        view = {
            "profile": subject.profile().to_dict(),
            "phase": phase,
            "batch_id": batch,
            "cursor": subject.rated_in_batch.get(batch, 0) if batch is not None else None,
            "test_attempts": subject.test_attempts,
        }
        if phase == "testing":
            # the gate's video list (anchor scores stay server-side)
            view["test_videos"] = [
                {"video_id": t["video_id"], "media_url": f"/media/{t['video_id']}"}
                for t in state.test_videos
            ]
        return view
