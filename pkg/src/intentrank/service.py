"""HTTP session service: the interactive loop behind a small /v1 JSON API.

Sessions live in memory and run on the same LiveSession engine as the
offline drivers, so replaying a recorded feedback sequence offline
reproduces the service's rankings exactly. Per-session operations are
serialized with an exclusive lock; an optional optimistic ``turn`` field in
feedback requests lets concurrent clients detect stale turns.
"""

from __future__ import annotations

import json
import threading
import uuid
from pathlib import Path
from typing import Any

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .data import Bundle, bundle_from_document
from .errors import (
    ConfigError,
    DimensionError,
    EmptyQueryError,
    FormatError,
    InvalidStateError,
    NormalizationError,
    UnknownRegionError,
)
from .intent import Feedback
from .ranking import RankerConfig, SinkhornConfig
from .session import LiveSession, SessionConfig
from .vecmath import l2_normalize


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


class SessionConfigBody(BaseModel):
    alpha: float | None = None
    negative_weight: float | None = None
    aggregation: str | None = None
    max_turns: int | None = None
    present_k: int | None = None
    exclude_rejected_from_presentation: bool | None = None
    init_mode: str | None = None
    state_mode: str | None = None
    scorer: str | None = None
    sinkhorn_epsilon: float | None = None


class QueryBody(BaseModel):
    text_embedding: list[float] | None = None
    ref_image_embedding: list[float] | None = None
    text: str | None = None


class CreateSessionBody(BaseModel):
    bundle_id: str
    query: QueryBody
    config: SessionConfigBody | None = None


class FeedbackBody(BaseModel):
    kind: str
    region_id: int | None = None
    new_prompt_embedding: list[float] | None = None
    turn: int | None = None  # optimistic concurrency guard


class ServiceState:
    def __init__(self, log_dir: str | Path | None = None) -> None:
        self.bundles: dict[str, Bundle] = {}
        self.sessions: dict[str, LiveSession] = {}
        self.locks: dict[str, threading.Lock] = {}
        self.registry_lock = threading.Lock()
        self.log_dir = Path(log_dir) if log_dir is not None else None
        if self.log_dir is not None:
            self.log_dir.mkdir(parents=True, exist_ok=True)

    def log_event(self, session_id: str, event: dict) -> None:
        """Append-only per-session durability log; a log, not a database."""
        if self.log_dir is None:
            return
        with open(self.log_dir / f"{session_id}.jsonl", "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event) + "\n")


def _session_config(body: SessionConfigBody | None) -> SessionConfig:
    if body is None:
        return SessionConfig()
    defaults = SessionConfig()
    try:
        return SessionConfig(
            max_turns=body.max_turns if body.max_turns is not None else defaults.max_turns,
            alpha=body.alpha if body.alpha is not None else defaults.alpha,
            ranker=RankerConfig(
                negative_weight=(
                    body.negative_weight
                    if body.negative_weight is not None
                    else defaults.ranker.negative_weight
                ),
                aggregation=body.aggregation or defaults.ranker.aggregation,
            ),
            present_k=body.present_k if body.present_k is not None else defaults.present_k,
            exclude_rejected_from_presentation=(
                body.exclude_rejected_from_presentation
                if body.exclude_rejected_from_presentation is not None
                else defaults.exclude_rejected_from_presentation
            ),
            init_mode=body.init_mode or defaults.init_mode,
            state_mode=body.state_mode or defaults.state_mode,
            scorer=body.scorer or defaults.scorer,
            sinkhorn=SinkhornConfig(
                epsilon=(
                    body.sinkhorn_epsilon
                    if body.sinkhorn_epsilon is not None
                    else defaults.sinkhorn.epsilon
                )
            ),
        )
    except (ConfigError, ValueError) as exc:
        raise ApiError(400, "bad-config", str(exc)) from exc


def _handle(session_id: str, live: LiveSession) -> dict:
    return {
        "session_id": session_id,
        "image_id": live.bundle.image_id,
        "status": live.status,
        "turn": live.turn,
        "z_pos_size": len(live.state.z_pos),
        "z_neg_size": len(live.state.z_neg),
        "rejected_region_ids": sorted(live.state.rejected_region_ids),
    }


def _presentation(live: LiveSession) -> list[dict]:
    boxes = {r.id: r.bbox for r in live.bundle.regions}
    by_id = {sr.region_id: sr for sr in live.current_ranking}
    return [
        {
            "region_id": rid,
            "bbox": boxes[rid].as_list(),
            "score": by_id[rid].score,
        }
        for rid in live.presented
    ]


def _ranking_doc(live: LiveSession) -> list[dict]:
    return [
        {"region_id": sr.region_id, "score": sr.score, "s_pos": sr.s_pos, "s_neg": sr.s_neg}
        for sr in live.current_ranking
    ]


def build_app(state: ServiceState | None = None) -> FastAPI:
    app = FastAPI(title="intentrank", version="1.0")
    # Desk tool: the browser UI is served from disk or another port.
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    svc = state or ServiceState()
    app.state.service = svc

    @app.exception_handler(ApiError)
    async def _api_error(_: Request, exc: ApiError) -> JSONResponse:
        return JSONResponse(
            status_code=exc.status, content={"code": exc.code, "message": exc.message}
        )

    def get_session(session_id: str) -> tuple[LiveSession, threading.Lock]:
        with svc.registry_lock:
            live = svc.sessions.get(session_id)
            if live is None:
                raise ApiError(404, "unknown-session", f"no session {session_id!r}")
            return live, svc.locks[session_id]

    @app.post("/v1/bundles", status_code=201)
    def register_bundle(manifest: dict) -> dict:
        try:
            bundle = bundle_from_document(manifest)
        except (FormatError, NormalizationError) as exc:
            raise ApiError(400, "bad-manifest", str(exc)) from exc
        with svc.registry_lock:
            svc.bundles[bundle.image_id] = bundle
        return {"bundle_id": bundle.image_id, "regions": len(bundle.regions)}

    @app.get("/v1/bundles/{bundle_id}")
    def get_bundle(bundle_id: str) -> dict:
        with svc.registry_lock:
            bundle = svc.bundles.get(bundle_id)
        if bundle is None:
            raise ApiError(404, "unknown-bundle", f"no bundle {bundle_id!r}")
        return {
            "bundle_id": bundle.image_id,
            "image_uri": bundle.image_uri,
            "dim": bundle.dim,
            "regions": [{"id": r.id, "bbox": r.bbox.as_list()} for r in bundle.regions],
        }

    @app.post("/v1/sessions", status_code=201)
    def create_session(body: CreateSessionBody) -> dict:
        with svc.registry_lock:
            bundle = svc.bundles.get(body.bundle_id)
        if bundle is None:
            raise ApiError(404, "unknown-bundle", f"no bundle {body.bundle_id!r}")
        cfg = _session_config(body.config)
        try:
            live = LiveSession(
                bundle,
                cfg,
                query_id=f"live-{uuid.uuid4().hex[:12]}",
                text_embedding=(
                    None
                    if body.query.text_embedding is None
                    else l2_normalize(body.query.text_embedding)
                ),
                ref_image_embedding=(
                    None
                    if body.query.ref_image_embedding is None
                    else l2_normalize(body.query.ref_image_embedding)
                ),
            )
        except (ValueError, EmptyQueryError, NormalizationError, DimensionError) as exc:
            raise ApiError(400, "bad-query", str(exc)) from exc
        session_id = uuid.uuid4().hex
        with svc.registry_lock:
            svc.sessions[session_id] = live
            svc.locks[session_id] = threading.Lock()
        svc.log_event(
            session_id,
            {"event": "created", "bundle_id": bundle.image_id,
             "config": cfg.to_document()},
        )
        return {
            "session": _handle(session_id, live),
            "presented": _presentation(live),
            "ranking": _ranking_doc(live),
        }

    @app.post("/v1/sessions/{session_id}/feedback")
    def post_feedback(session_id: str, body: FeedbackBody) -> dict:
        live, lock = get_session(session_id)
        with lock:
            if body.turn is not None and body.turn != live.turn:
                raise ApiError(
                    409, "stale-turn",
                    f"feedback targets turn {body.turn} but session is at {live.turn}",
                )
            try:
                feedback = Feedback(
                    kind=body.kind,
                    region_id=body.region_id,
                    new_prompt_embedding=(
                        None
                        if body.new_prompt_embedding is None
                        else l2_normalize(body.new_prompt_embedding)
                    ),
                )
            except (ValueError, NormalizationError) as exc:
                raise ApiError(400, "bad-feedback", str(exc)) from exc
            try:
                live.feedback(feedback)
            except InvalidStateError as exc:
                raise ApiError(409, "session-finished", str(exc)) from exc
            except UnknownRegionError as exc:
                raise ApiError(400, "unknown-region", str(exc)) from exc
            svc.log_event(
                session_id,
                {"event": "feedback", "kind": body.kind, "region_id": body.region_id,
                 "turn": live.turn, "status": live.status},
            )
            response: dict[str, Any] = {"session": _handle(session_id, live)}
            if live.status == "confirmed":
                region = live.bundle.region_by_id(live.confirmed_region_id)
                response["b_star"] = {
                    "region_id": region.id, "bbox": region.bbox.as_list(),
                }
            else:
                response["presented"] = _presentation(live)
                response["ranking"] = _ranking_doc(live)
            return response

    @app.get("/v1/sessions/{session_id}")
    def get_transcript(session_id: str) -> dict:
        live, lock = get_session(session_id)
        with lock:
            doc = live.transcript().to_document()
            doc["status"] = live.status
            return {"session": _handle(session_id, live), "transcript": doc}

    return app
