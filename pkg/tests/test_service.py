import json
import threading

import numpy as np
import pytest
from fastapi.testclient import TestClient

from vqstudy.domain import RatingEvent, SubjectStatus
from vqstudy.errors import StudyError
from vqstudy.service import StudyConfig, StudyService, create_app
from vqstudy.service.core import half_day_window

from service_utils import (
    FakeClock,
    make_videos,
    qualify,
    rate_until_blocked,
    study_payload,
)


@pytest.fixture
def clock():
    return FakeClock()


@pytest.fixture
def service(tmp_path, clock):
    return StudyService(str(tmp_path / "data"), now_fn=clock)


@pytest.fixture
def client(service):
    return TestClient(create_app(service))


def create_study(client, tmp_path, n_formal=20, batch_size=20, **kwargs):
    records = make_videos(tmp_path, n_formal + 20, media_bytes=kwargs.pop("media_bytes", 0))
    payload, anchors = study_payload(records, batch_size=batch_size, **kwargs)
    r = client.post("/studies", json=payload)
    assert r.status_code == 201, r.text
    return r.json()["study_id"], anchors, records


class TestStudyCreation:
    def test_batch_partition_with_remainder(self, client, tmp_path):
        records = make_videos(tmp_path, 5 + 20)
        payload, _ = study_payload(records, batch_size=2)
        r = client.post("/studies", json=payload)
        assert r.status_code == 201
        assert r.json()["summary"]["batch_sizes"] == [2, 2, 1]

    def test_forty_batches_of_five_hundred(self, client, tmp_path):
        records = make_videos(tmp_path, 20_000 + 20)
        payload, _ = study_payload(records, batch_size=500)
        r = client.post("/studies", json=payload)
        assert r.status_code == 201
        sizes = r.json()["summary"]["batch_sizes"]
        assert len(sizes) == 40 and set(sizes) == {500}

    def test_same_seed_same_batches(self, tmp_path, clock):
        records = make_videos(tmp_path, 50 + 20)
        payload, _ = study_payload(records, seed=123)
        batches = []
        for name in ("a", "b"):
            svc = StudyService(str(tmp_path / name), now_fn=clock)
            study_id = svc.create_study(
                manifest=records,
                config=StudyConfig.from_dict(payload["config"]),
                training=payload["training"],
                test_videos=payload["test_videos"],
                study_id="s1",
            )
            batches.append(svc._studies[study_id].batches)
        assert batches[0] == batches[1]

    def test_duplicate_study_id_rejected(self, client, tmp_path):
        records = make_videos(tmp_path, 25)
        payload, _ = study_payload(records)
        payload["study_id"] = "dup"
        assert client.post("/studies", json=payload).status_code == 201
        assert client.post("/studies", json=payload).status_code == 409

    def test_invalid_manifest_rejected(self, client, tmp_path):
        records = make_videos(tmp_path, 25)
        payload, _ = study_payload(records)
        payload["manifest"][0]["fps"] = 0
        assert client.post("/studies", json=payload).status_code == 400


class TestSubjectLifecycle:
    def test_register(self, client, tmp_path):
        study_id, _, _ = create_study(client, tmp_path)
        r = client.post(f"/studies/{study_id}/subjects", json={"subject_id": "alice"})
        assert r.status_code == 201
        assert r.json()["status"] == "registered"

    def test_duplicate_subject_rejected(self, client, tmp_path):
        study_id, _, _ = create_study(client, tmp_path)
        client.post(f"/studies/{study_id}/subjects", json={"subject_id": "alice"})
        r = client.post(f"/studies/{study_id}/subjects", json={"subject_id": "alice"})
        assert r.status_code == 409

    def test_training_materials(self, client, tmp_path):
        study_id, _, _ = create_study(client, tmp_path)
        items = client.get(f"/studies/{study_id}/training").json()["items"]
        assert len(items) == 5
        excellent = next(i for i in items if i["level"] == "excellent")
        assert excellent["criteria"].startswith("The video quality is excellent")
        assert {i["level"] for i in items} == {
            "excellent", "good", "fair", "poor", "bad",
        }

    def test_training_unconfigured(self, client, tmp_path):
        records = make_videos(tmp_path, 40)
        payload, _ = study_payload(records, n_training=0)
        study_id = client.post("/studies", json=payload).json()["study_id"]
        assert client.get(f"/studies/{study_id}/training").status_code == 404

    def test_gate_pass(self, client, tmp_path):
        study_id, anchors, _ = create_study(client, tmp_path)
        result = qualify(client, study_id, "alice", anchors)
        assert result["detail"]["n_within"] == 15

    def test_gate_eleven_of_fifteen_fails(self, client, tmp_path):
        study_id, anchors, _ = create_study(client, tmp_path)
        client.post(f"/studies/{study_id}/subjects", json={"subject_id": "bob"})
        client.post(f"/studies/{study_id}/subjects/bob/training")
        items = list(anchors.items())
        ratings = [
            {"video_id": vid, "raw_score": anchor} for vid, anchor in items[:11]
        ] + [
            {"video_id": vid, "raw_score": min(5.0, round(anchor + 1.1, 1)) if anchor < 3.9 else max(0.0, round(anchor - 1.1, 1))}
            for vid, anchor in items[11:]
        ]
        r = client.post(f"/studies/{study_id}/subjects/bob/test", json={"ratings": ratings})
        assert r.json()["result"] == "failed"
        assert r.json()["detail"]["attempts_left"] == 1

    def test_gate_retry_then_exhausted(self, client, tmp_path):
        study_id, anchors, _ = create_study(client, tmp_path)
        client.post(f"/studies/{study_id}/subjects", json={"subject_id": "carol"})
        client.post(f"/studies/{study_id}/subjects/carol/training")
        bad = [
            {"video_id": vid, "raw_score": 5.0 if anchor <= 2.5 else 0.0}
            for vid, anchor in anchors.items()
        ]
        first = client.post(f"/studies/{study_id}/subjects/carol/test", json={"ratings": bad})
        assert first.json() == {
            "result": "failed",
            "detail": {
                "n_within": first.json()["detail"]["n_within"],
                "threshold": 12,
                "attempts_used": 1,
                "attempts_left": 1,
                "exhausted": False,
            },
        }
        second = client.post(f"/studies/{study_id}/subjects/carol/test", json={"ratings": bad})
        assert second.json()["result"] == "failed"
        assert second.json()["detail"]["exhausted"] is True
        third = client.post(f"/studies/{study_id}/subjects/carol/test", json={"ratings": bad})
        assert third.status_code == 409
        view = client.get(f"/studies/{study_id}/subjects/carol").json()
        assert view["profile"]["status"] == "trained"

    def test_gate_wrong_video_set(self, client, tmp_path):
        study_id, anchors, records = create_study(client, tmp_path)
        client.post(f"/studies/{study_id}/subjects", json={"subject_id": "dave"})
        client.post(f"/studies/{study_id}/subjects/dave/training")
        wrong = [
            {"video_id": records[i].video_id, "raw_score": 2.5} for i in range(15)
        ]
        r = client.post(f"/studies/{study_id}/subjects/dave/test", json={"ratings": wrong})
        assert r.status_code == 400

    def test_gate_wrong_count(self, client, tmp_path):
        study_id, anchors, _ = create_study(client, tmp_path)
        client.post(f"/studies/{study_id}/subjects", json={"subject_id": "erin"})
        client.post(f"/studies/{study_id}/subjects/erin/training")
        few = [
            {"video_id": vid, "raw_score": anchor}
            for vid, anchor in list(anchors.items())[:10]
        ]
        r = client.post(f"/studies/{study_id}/subjects/erin/test", json={"ratings": few})
        assert r.status_code == 400

    def test_session_view_lists_test_videos_during_testing(self, client, tmp_path):
        study_id, anchors, _ = create_study(client, tmp_path)
        client.post(f"/studies/{study_id}/subjects", json={"subject_id": "gina"})
        view = client.get(f"/studies/{study_id}/subjects/gina").json()
        assert view["phase"] == "training" and "test_videos" not in view
        client.post(f"/studies/{study_id}/subjects/gina/training")
        view = client.get(f"/studies/{study_id}/subjects/gina").json()
        assert view["phase"] == "testing"
        assert {t["video_id"] for t in view["test_videos"]} == set(anchors)
        assert all("anchor" not in t for t in view["test_videos"])

    def test_gate_requires_trained_status(self, client, tmp_path):
        study_id, anchors, _ = create_study(client, tmp_path)
        client.post(f"/studies/{study_id}/subjects", json={"subject_id": "fred"})
        ratings = [{"video_id": v, "raw_score": a} for v, a in anchors.items()]
        r = client.post(f"/studies/{study_id}/subjects/fred/test", json={"ratings": ratings})
        assert r.status_code == 409


class TestRatingLoop:
    def test_first_item_and_cursor(self, client, service, tmp_path):
        study_id, anchors, _ = create_study(client, tmp_path, batch_size=20)
        qualify(client, study_id, "alice", anchors)
        nxt = client.get(f"/studies/{study_id}/subjects/alice/next").json()
        assert nxt["status"] == "item"
        assert nxt["progress"] == {"rated": 0, "batch_size": 20}
        expected_first = service._studies[study_id].batches[0][0]
        assert nxt["video_id"] == expected_first

    def test_submit_advances_cursor(self, client, tmp_path):
        study_id, anchors, _ = create_study(client, tmp_path)
        qualify(client, study_id, "alice", anchors)
        nxt = client.get(f"/studies/{study_id}/subjects/alice/next").json()
        r = client.post(
            f"/studies/{study_id}/ratings",
            json={
                "subject_id": "alice",
                "video_id": nxt["video_id"],
                "raw_score": 3.7,
                "playback_completed": True,
            },
        )
        assert r.status_code == 200
        assert r.json()["progress"]["rated"] == 1
        after = client.get(f"/studies/{study_id}/subjects/alice/next").json()
        assert after["video_id"] != nxt["video_id"]
        assert after["progress"]["rated"] == 1

    def test_off_grid_score_rejected(self, client, tmp_path):
        study_id, anchors, _ = create_study(client, tmp_path)
        qualify(client, study_id, "alice", anchors)
        nxt = client.get(f"/studies/{study_id}/subjects/alice/next").json()
        r = client.post(
            f"/studies/{study_id}/ratings",
            json={
                "subject_id": "alice",
                "video_id": nxt["video_id"],
                "raw_score": 3.75,
                "playback_completed": True,
            },
        )
        assert r.status_code == 400
        assert r.json()["error"] == "off_grid_score"

    def test_out_of_order_rejected(self, client, service, tmp_path):
        study_id, anchors, _ = create_study(client, tmp_path)
        qualify(client, study_id, "alice", anchors)
        wrong = service._studies[study_id].batches[0][5]
        r = client.post(
            f"/studies/{study_id}/ratings",
            json={
                "subject_id": "alice",
                "video_id": wrong,
                "raw_score": 3.0,
                "playback_completed": True,
            },
        )
        assert r.status_code == 409

    def test_playback_not_completed_rejected(self, client, tmp_path):
        study_id, anchors, _ = create_study(client, tmp_path)
        qualify(client, study_id, "alice", anchors)
        nxt = client.get(f"/studies/{study_id}/subjects/alice/next").json()
        r = client.post(
            f"/studies/{study_id}/ratings",
            json={
                "subject_id": "alice",
                "video_id": nxt["video_id"],
                "raw_score": 3.0,
                "playback_completed": False,
            },
        )
        assert r.status_code == 409

    def test_identical_resubmit_is_idempotent(self, client, tmp_path):
        study_id, anchors, _ = create_study(client, tmp_path)
        qualify(client, study_id, "alice", anchors)
        nxt = client.get(f"/studies/{study_id}/subjects/alice/next").json()
        body = {
            "subject_id": "alice",
            "video_id": nxt["video_id"],
            "raw_score": 2.5,
            "playback_completed": True,
        }
        first = client.post(f"/studies/{study_id}/ratings", json=body).json()
        again = client.post(f"/studies/{study_id}/ratings", json=body).json()
        assert first["duplicate"] is False and again["duplicate"] is True
        after = client.get(f"/studies/{study_id}/subjects/alice/next").json()
        assert after["progress"]["rated"] == 1  # cursor unchanged by resubmit

    def test_conflicting_resubmit_rejected(self, client, tmp_path):
        study_id, anchors, _ = create_study(client, tmp_path)
        qualify(client, study_id, "alice", anchors)
        nxt = client.get(f"/studies/{study_id}/subjects/alice/next").json()
        body = {
            "subject_id": "alice",
            "video_id": nxt["video_id"],
            "raw_score": 2.5,
            "playback_completed": True,
        }
        client.post(f"/studies/{study_id}/ratings", json=body)
        body["raw_score"] = 4.0
        assert client.post(f"/studies/{study_id}/ratings", json=body).status_code == 409

    def test_exactly_once_under_concurrent_duplicates(self, service, tmp_path):
        app = create_app(service)
        setup = TestClient(app)
        study_id, anchors, _ = create_study(setup, tmp_path)
        qualify(setup, study_id, "alice", anchors)
        nxt = setup.get(f"/studies/{study_id}/subjects/alice/next").json()
        body = {
            "subject_id": "alice",
            "video_id": nxt["video_id"],
            "raw_score": 1.5,
            "playback_completed": True,
        }
        results = []

        def submit():
            with TestClient(app) as c:
                results.append(c.post(f"/studies/{study_id}/ratings", json=body).json())

        threads = [threading.Thread(target=submit) for _ in range(50)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert all(r["accepted"] for r in results)
        fresh = sum(1 for r in results if not r["duplicate"])
        assert fresh == 1
        export = setup.get(f"/studies/{study_id}/export").text
        lines = [l for l in export.splitlines() if l]
        assert len(lines) == 1

    def test_study_complete(self, client, tmp_path):
        study_id, anchors, _ = create_study(client, tmp_path, n_formal=4, batch_size=4)
        qualify(client, study_id, "alice", anchors)
        final, submitted = rate_until_blocked(
            client, study_id, "alice", lambda vid: 2.5
        )
        assert len(submitted) == 4
        assert final["status"] == "batch_complete"
        assert final["study_complete"] is True


class TestFatigue:
    def test_two_batches_per_half_day(self, client, clock, tmp_path):
        study_id, anchors, _ = create_study(
            client, tmp_path, n_formal=9, batch_size=3
        )
        qualify(client, study_id, "alice", anchors)
        blocked, submitted = rate_until_blocked(client, study_id, "alice", lambda v: 2.5)
        assert len(submitted) == 6  # two full batches of three
        assert blocked == {"status": "blocked", "reason": "fatigue_limit"}
        clock.advance(hours=12)  # next half-day window
        nxt = client.get(f"/studies/{study_id}/subjects/alice/next").json()
        assert nxt["status"] == "item"
        assert nxt["batch_id"] == 2

    def test_window_boundary_is_utc_fixed(self):
        assert half_day_window("2026-01-05T11:59:59Z") != half_day_window(
            "2026-01-05T12:00:00Z"
        )
        assert half_day_window("2026-01-05T00:00:00Z") == half_day_window(
            "2026-01-05T11:59:59Z"
        )


class TestScreening:
    def test_agreeing_subjects_not_rejected(self, client, tmp_path):
        study_id, anchors, _ = create_study(client, tmp_path, n_formal=8, batch_size=8)
        for name in ("s1", "s2", "s3", "s4"):
            qualify(client, study_id, name, anchors)
            rate_until_blocked(
                client, study_id, name,
                lambda vid: round(1.0 + (hash(vid) % 30) / 10.0, 1),
            )
        r = client.post(f"/studies/{study_id}/batches/0/screen")
        assert r.status_code == 200
        assert r.json()["rejected"] == []

    def test_incomplete_batch_rejected(self, client, tmp_path):
        study_id, anchors, _ = create_study(client, tmp_path, n_formal=8, batch_size=8)
        qualify(client, study_id, "s1", anchors)
        r = client.post(f"/studies/{study_id}/batches/0/screen")
        assert r.status_code == 409
        assert "waiting_on" in r.json()["details"]

    def test_guesser_rejected_and_blocked(self, service, tmp_path):
        # 9 consistent raters plus one random guesser on a 60-video batch;
        # seed chosen so the guesser exceeds the 5% outlier limit
        records = make_videos(tmp_path, 60 + 20)
        payload, anchors = study_payload(records, batch_size=60)
        from vqstudy.domain import VideoRecord

        study_id = service.create_study(
            manifest=[VideoRecord.from_dict(d) for d in payload["manifest"]],
            config=StudyConfig.from_dict(payload["config"]),
            training=payload["training"],
            test_videos=payload["test_videos"],
        )
        state = service._studies[study_id]
        rng = np.random.default_rng(0)
        quality = {
            vid: 1.0 + 3.0 * (i % 5) / 4.0
            for i, vid in enumerate(state.batches[0])
        }

        def enroll(name):
            service.register_subject(study_id, name)
            service.acknowledge_training(study_id, name)
            service.submit_test_ratings(
                study_id,
                name,
                [{"video_id": v, "raw_score": a} for v, a in anchors.items()],
            )

        def rate_all(name, score_fn):
            while True:
                nxt = service.next_item(study_id, name)
                if nxt["status"] != "item":
                    return
                service.submit_rating(
                    study_id, name, nxt["video_id"],
                    score_fn(nxt["video_id"]), playback_completed=True,
                )

        for j in range(9):
            name = f"s{j:02d}"
            enroll(name)
            rate_all(
                name,
                lambda vid: round(
                    min(5.0, max(0.0, quality[vid] + rng.normal(0, 0.15))), 1
                ),
            )
        enroll("guess")
        rate_all("guess", lambda vid: float(rng.integers(0, 51)) / 10.0)

        result = service.batch_screening(study_id, 0)
        assert result["rejected"] == ["guess"]
        assert service.get_profile(study_id, "guess").status is SubjectStatus.REJECTED
        assert service.get_profile(study_id, "guess").outlier_ratio > 0.05
        blocked = service.next_item(study_id, "guess")
        assert blocked == {"status": "blocked", "reason": "rejected"}
        with pytest.raises(StudyError):
            service.submit_rating(
                study_id, "guess", "whatever", 2.0, playback_completed=True
            )

    def test_double_screening_rejected(self, client, tmp_path):
        study_id, anchors, _ = create_study(client, tmp_path, n_formal=8, batch_size=8)
        for name in ("s1", "s2", "s3", "s4"):
            qualify(client, study_id, name, anchors)
            rate_until_blocked(client, study_id, name, lambda vid: 2.5)
        assert client.post(f"/studies/{study_id}/batches/0/screen").status_code == 200
        assert client.post(f"/studies/{study_id}/batches/0/screen").status_code == 409

    def test_register_after_study_closed(self, client, tmp_path):
        study_id, anchors, _ = create_study(client, tmp_path, n_formal=4, batch_size=4)
        for name in ("s1", "s2", "s3", "s4"):
            qualify(client, study_id, name, anchors)
            rate_until_blocked(client, study_id, name, lambda vid: round((hash(vid) % 40) / 10.0, 1))
        assert client.post(f"/studies/{study_id}/batches/0/screen").status_code == 200
        assert client.get(f"/studies/{study_id}").json()["closed"] is True
        r = client.post(f"/studies/{study_id}/subjects", json={"subject_id": "late"})
        assert r.status_code == 409


class TestExportAndReplay:
    def test_empty_export(self, client, tmp_path):
        study_id, _, _ = create_study(client, tmp_path)
        assert client.get(f"/studies/{study_id}/export").text == ""

    def test_export_round_trip_and_byte_stability(self, client, tmp_path):
        study_id, anchors, _ = create_study(client, tmp_path, n_formal=3, batch_size=3)
        qualify(client, study_id, "alice", anchors)
        rate_until_blocked(client, study_id, "alice", lambda v: 4.5)
        a = client.get(f"/studies/{study_id}/export").text
        b = client.get(f"/studies/{study_id}/export").text
        assert a == b
        events = [RatingEvent.from_dict(json.loads(l)) for l in a.splitlines() if l]
        assert len(events) == 3
        assert all(ev.raw_score == 4.5 for ev in events)

    def test_replay_reconstructs_state(self, tmp_path, clock):
        data_dir = str(tmp_path / "data")
        service = StudyService(data_dir, now_fn=clock)
        client = TestClient(create_app(service))
        study_id, anchors, _ = create_study(client, tmp_path, n_formal=6, batch_size=3)
        qualify(client, study_id, "alice", anchors)
        qualify(client, study_id, "bob", anchors)
        rate_until_blocked(client, study_id, "alice", lambda v: 3.5)
        # bob rates only half of the first batch
        for _ in range(2):
            nxt = client.get(f"/studies/{study_id}/subjects/bob/next").json()
            client.post(
                f"/studies/{study_id}/ratings",
                json={
                    "subject_id": "bob",
                    "video_id": nxt["video_id"],
                    "raw_score": 1.5,
                    "playback_completed": True,
                },
            )

        restored = StudyService(data_dir, now_fn=clock)
        for sid in ("alice", "bob"):
            assert restored.session_view(study_id, sid) == service.session_view(
                study_id, sid
            )
        assert restored.export_ratings(study_id) == service.export_ratings(study_id)
        assert restored.study_summary(study_id) == service.study_summary(study_id)
        assert restored._studies[study_id].batches == service._studies[study_id].batches
        # the restored instance keeps serving from the same cursor
        client2 = TestClient(create_app(restored))
        nxt = client2.get(f"/studies/{study_id}/subjects/bob/next").json()
        assert nxt["progress"]["rated"] == 2


class TestMediaServing:
    def test_full_and_partial_content(self, client, tmp_path):
        study_id, _, records = create_study(client, tmp_path, media_bytes=100_000)
        vid = records[0].video_id
        full = client.get(f"/media/{vid}")
        assert full.status_code == 200
        assert full.headers["accept-ranges"] == "bytes"
        assert len(full.content) == 100_000

        part = client.get(f"/media/{vid}", headers={"Range": "bytes=100-199"})
        assert part.status_code == 206
        assert part.headers["content-range"] == "bytes 100-199/100000"
        assert part.content == full.content[100:200]

        tail = client.get(f"/media/{vid}", headers={"Range": "bytes=-500"})
        assert tail.status_code == 206
        assert tail.content == full.content[-500:]

        open_ended = client.get(f"/media/{vid}", headers={"Range": "bytes=99900-"})
        assert open_ended.status_code == 206
        assert open_ended.content == full.content[99_900:]

    def test_unsatisfiable_range(self, client, tmp_path):
        study_id, _, records = create_study(client, tmp_path, media_bytes=1000)
        vid = records[0].video_id
        r = client.get(f"/media/{vid}", headers={"Range": "bytes=5000-6000"})
        assert r.status_code == 416
        assert r.headers["content-range"] == "bytes */1000"

    def test_unknown_video(self, client, tmp_path):
        create_study(client, tmp_path, media_bytes=10)
        assert client.get("/media/nope").status_code == 404

    def test_multi_range_falls_back_to_full(self, client, tmp_path):
        study_id, _, records = create_study(client, tmp_path, media_bytes=1000)
        vid = records[0].video_id
        r = client.get(f"/media/{vid}", headers={"Range": "bytes=0-1,5-6"})
        assert r.status_code == 200
        assert len(r.content) == 1000


class TestErrors:
    def test_unknown_study(self, client):
        assert client.get("/studies/nope/subjects/x/next").status_code == 404

    def test_unknown_subject(self, client, tmp_path):
        study_id, _, _ = create_study(client, tmp_path)
        assert client.get(f"/studies/{study_id}/subjects/ghost/next").status_code == 404

    def test_next_requires_qualification(self, client, tmp_path):
        study_id, _, _ = create_study(client, tmp_path)
        client.post(f"/studies/{study_id}/subjects", json={"subject_id": "new"})
        assert client.get(f"/studies/{study_id}/subjects/new/next").status_code == 409
