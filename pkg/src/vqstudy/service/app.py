"""HTTP JSON API over the study engine.

Routes (bodies mirror the domain JSON schemas):

    POST /studies                                create a study
    POST /studies/{id}/subjects                  register a subject
    GET  /studies/{id}/training                  training materials
    POST /studies/{id}/subjects/{sid}/training   acknowledge training
    POST /studies/{id}/subjects/{sid}/test       submit the 15-video gate
    GET  /studies/{id}/subjects/{sid}            session view (resume)
    GET  /studies/{id}/subjects/{sid}/next       next video / blocked
    POST /studies/{id}/ratings                   submit one formal rating
    POST /studies/{id}/batches/{b}/screen        per-batch subject rejection
    GET  /studies/{id}/export                    formal ratings as NDJSON
    GET  /media/{video_id}                       video bytes, Range supported
"""

from __future__ import annotations

import mimetypes
import os
from typing import Iterator

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse, PlainTextResponse, StreamingResponse
from fastapi.staticfiles import StaticFiles

from ..domain import VideoRecord
from ..errors import DomainError, StudyError
from ..scoring import ScoringConfig
from .core import StudyConfig, StudyService

MEDIA_CHUNK = 64 * 1024


def _error_response(exc: DomainError) -> JSONResponse:
    status = exc.details.get("status", 400)
    body = exc.to_dict()
    body["details"].pop("status", None)
    return JSONResponse(status_code=status, content=body)


def create_app(service: StudyService, frontend_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="vqstudy", docs_url=None, redoc_url=None)

    @app.exception_handler(DomainError)
    async def on_domain_error(_request: Request, exc: DomainError):
        return _error_response(exc)

    @app.post("/studies", status_code=201)
    async def create_study(request: Request):
        body = await request.json()
        manifest = [VideoRecord.from_dict(d) for d in body.get("manifest", [])]
        config = StudyConfig.from_dict(body.get("config", {}))
        scoring = ScoringConfig.from_dict(body.get("scoring", {}))
        study_id = service.create_study(
            manifest=manifest,
            config=config,
            training=body.get("training", []),
            test_videos=body.get("test_videos", []),
            scoring=scoring,
            study_id=body.get("study_id"),
        )
        return {"study_id": study_id, "summary": service.study_summary(study_id)}

    @app.get("/studies/{study_id}")
    def study_summary(study_id: str):
        return service.study_summary(study_id)

    @app.post("/studies/{study_id}/subjects", status_code=201)
    async def register_subject(study_id: str, request: Request):
        body = await request.json()
        profile = service.register_subject(study_id, str(body["subject_id"]))
        return profile.to_dict()

    @app.get("/studies/{study_id}/training")
    def training_materials(study_id: str):
        return {"items": service.training_materials(study_id)}

    @app.post("/studies/{study_id}/subjects/{subject_id}/training")
    def acknowledge_training(study_id: str, subject_id: str):
        return service.acknowledge_training(study_id, subject_id).to_dict()

    @app.post("/studies/{study_id}/subjects/{subject_id}/test")
    async def submit_test(study_id: str, subject_id: str, request: Request):
        body = await request.json()
        return service.submit_test_ratings(
            study_id, subject_id, body.get("ratings", [])
        )

    @app.get("/studies/{study_id}/subjects/{subject_id}")
    def session_view(study_id: str, subject_id: str):
        return service.session_view(study_id, subject_id)

    @app.get("/studies/{study_id}/subjects/{subject_id}/next")
    def next_item(study_id: str, subject_id: str):
        return service.next_item(study_id, subject_id)

    @app.post("/studies/{study_id}/ratings")
    async def submit_rating(study_id: str, request: Request):
        body = await request.json()
        return service.submit_rating(
            study_id,
            subject_id=str(body["subject_id"]),
            video_id=str(body["video_id"]),
            raw_score=float(body["raw_score"]),
            replays=int(body.get("replays", 0)),
            playback_completed=bool(body.get("playback_completed", False)),
        )

    @app.post("/studies/{study_id}/batches/{batch_id}/screen")
    def screen_batch(study_id: str, batch_id: int):
        return service.batch_screening(study_id, batch_id)

    @app.get("/studies/{study_id}/export")
    def export_ratings(study_id: str):
        return PlainTextResponse(
            service.export_ratings(study_id), media_type="application/x-ndjson"
        )

    @app.get("/media/{video_id}")
    def media(video_id: str, request: Request):
        path = service.media_path(video_id)
        if path is None or not os.path.isfile(path):
            raise StudyError(f"no media for video {video_id!r}", status=404)
        return _serve_file_with_ranges(path, request.headers.get("range"))

    if frontend_dir and os.path.isdir(frontend_dir):
        app.mount("/app", StaticFiles(directory=frontend_dir, html=True), name="app")

    return app


def _parse_range(header: str, size: int) -> tuple[int, int] | None:
    """First byte range of a `bytes=` header, or None when unusable.

    Returns (start, end) inclusive. Multi-range requests fall back to the
    full body (a server may ignore Range); syntactically broken headers do
    the same; an unsatisfiable range raises 416 at the caller.
    """
    if not header or not header.strip().lower().startswith("bytes="):
        return None
    spec = header.strip()[len("bytes=") :]
    if "," in spec:
        return None
    spec = spec.strip()
    if "-" not in spec:
        return None
    start_s, _, end_s = spec.partition("-")
    try:
        if start_s == "":
            # suffix form: last N bytes
            n = int(end_s)
            if n <= 0:
                raise ValueError
            start = max(0, size - n)
            return start, size - 1
        start = int(start_s)
        end = int(end_s) if end_s else size - 1
    except ValueError:
        return None
    if start >= size or end < start:
        raise StudyError(
            "range not satisfiable",
            status=416,
            content_range=f"bytes */{size}",
        )
    return start, min(end, size - 1)


def _file_chunks(path: str, start: int, end: int) -> Iterator[bytes]:
    remaining = end - start + 1
    with open(path, "rb") as fh:
        fh.seek(start)
        while remaining > 0:
            chunk = fh.read(min(MEDIA_CHUNK, remaining))
            if not chunk:
                break
            remaining -= len(chunk)
            yield chunk


def _serve_file_with_ranges(path: str, range_header: str | None) -> Response:
    size = os.path.getsize(path)
    content_type = mimetypes.guess_type(path)[0] or "application/octet-stream"
    try:
        rng = _parse_range(range_header, size) if range_header else None
    except StudyError as exc:
        return Response(
            status_code=416,
            headers={
                "Content-Range": exc.details["content_range"],
                "Accept-Ranges": "bytes",
            },
        )
    if rng is None:
        return StreamingResponse(
            _file_chunks(path, 0, size - 1),
            media_type=content_type,
            headers={"Accept-Ranges": "bytes", "Content-Length": str(size)},
        )
    start, end = rng
    return StreamingResponse(
        _file_chunks(path, start, end),
        status_code=206,
        media_type=content_type,
        headers={
            "Accept-Ranges": "bytes",
            "Content-Range": f"bytes {start}-{end}/{size}",
            "Content-Length": str(end - start + 1),
        },
    )
