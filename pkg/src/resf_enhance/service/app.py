"""HTTP service: streaming enhancement sessions and evaluation helpers.

Each session owns one :class:`StreamState`; a per-session lock serialises
buffer pushes, so clients may stream several sessions concurrently.
"""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException

from ..config import PipelineConfig
from ..enhance import MaskEnhancer, enhance_signal
from ..evaluation import EvalError, Transcript, aggregate, wer
from ..losses import LossError, quality_proxy, segmental_snr_db
from ..stream import IdentityEnhancer, StreamError, StreamState
from ..twomask import ModelFormatError, ToyGenerator, load_model
from .schemas import (
    AggregateRequest,
    AggregateResponse,
    BlockOut,
    BufferIn,
    EnhanceRequest,
    EnhanceResponse,
    QualityRequest,
    QualityResponse,
    SessionCreate,
    SessionInfo,
    WerRequest,
    WerResponse,
)


@dataclass
class _Session:
    state: StreamState
    enhancer: object
    generator: str
    lock: threading.Lock = field(default_factory=threading.Lock)


def _build_enhancer(cfg: PipelineConfig, generator: str, model_path: str | None):
    if generator == "identity":
        return IdentityEnhancer()
    path = model_path or cfg.model.path
    if not path:
        raise HTTPException(422, "toy generator needs model_path")
    try:
        model = load_model(path)
    except FileNotFoundError:
        raise HTTPException(404, f"model not found: {path}") from None
    except ModelFormatError as exc:
        raise HTTPException(422, str(exc)) from None
    return MaskEnhancer(ToyGenerator(model), cfg.stft, cfg.ffr, cfg.sample_rate)


def create_app(cfg: PipelineConfig | None = None) -> FastAPI:
    cfg = cfg or PipelineConfig()
    app = FastAPI(title="resf-enhance", version="0.1.0")
    sessions: dict[str, _Session] = {}
    registry_lock = threading.Lock()

    def get_session(session_id: str) -> _Session:
        with registry_lock:
            session = sessions.get(session_id)
        if session is None:
            raise HTTPException(404, f"unknown session {session_id}")
        return session

    @app.get("/health")
    def health():
        return {"status": "ok", "sessions": len(sessions)}

    @app.post("/sessions", response_model=SessionInfo, status_code=201)
    def create_session(req: SessionCreate):
        geometry = cfg.geometry.model_copy(update={"crossfade_ms": req.crossfade_ms})
        try:
            state = StreamState(geometry)
            geometry.crossfade_len  # noqa: B018 - validates the fade length
        except StreamError as exc:
            raise HTTPException(422, str(exc)) from None
        enhancer = _build_enhancer(cfg, req.generator, req.model_path)
        session_id = uuid.uuid4().hex
        with registry_lock:
            sessions[session_id] = _Session(state, enhancer, req.generator)
        return SessionInfo(
            session_id=session_id,
            sample_rate=geometry.sample_rate,
            buffer_len=geometry.buffer_len,
            block_len=geometry.block_len,
            window_len=geometry.window_len,
            generator=req.generator,
        )

    def _block(session: _Session, out) -> BlockOut:
        st = session.state
        return BlockOut(
            emitted=out is not None,
            samples=None if out is None else out.tolist(),
            blocks_done=st.blocks_done,
            buffers_in=st.buffers_in,
            pending=st.pending,
        )

    @app.post("/sessions/{session_id}/buffers", response_model=BlockOut)
    def push_buffer(session_id: str, buf: BufferIn):
        session = get_session(session_id)
        with session.lock:
            try:
                out = session.state.push_buffer(np.asarray(buf.samples), session.enhancer)
            except StreamError as exc:
                raise HTTPException(422, str(exc)) from None
            return _block(session, out)

    @app.post("/sessions/{session_id}/flush", response_model=BlockOut)
    def flush(session_id: str):
        session = get_session(session_id)
        with session.lock:
            return _block(session, session.state.flush(session.enhancer))

    @app.delete("/sessions/{session_id}", status_code=204)
    def close_session(session_id: str):
        with registry_lock:
            if sessions.pop(session_id, None) is None:
                raise HTTPException(404, f"unknown session {session_id}")

    @app.post("/enhance", response_model=EnhanceResponse)
    def enhance(req: EnhanceRequest):
        enhancer = _build_enhancer(cfg, req.generator, req.model_path)
        try:
            y = enhance_signal(np.asarray(req.samples), enhancer, cfg.geometry, req.streaming)
        except ValueError as exc:
            raise HTTPException(422, str(exc)) from None
        return EnhanceResponse(samples=y.tolist(), streaming=req.streaming)

    @app.post("/wer", response_model=WerResponse)
    def compute_wer(req: WerRequest):
        ref = Transcript.from_text("ref", req.reference)
        hyp = Transcript.from_text("hyp", req.hypothesis)
        try:
            value = wer(ref, hyp)
        except EvalError as exc:
            raise HTTPException(422, str(exc)) from None
        return WerResponse(wer=value, reference_tokens=list(ref.tokens), hypothesis_tokens=list(hyp.tokens))

    @app.post("/aggregate", response_model=AggregateResponse)
    def compute_aggregate(req: AggregateRequest):
        try:
            report = aggregate(req.wers, req.ids)
        except EvalError as exc:
            raise HTTPException(422, str(exc)) from None
        s = report.summary()
        return AggregateResponse(mean=s["mean"], std=s["std"], pct_le_20=s["pct_le_20"], per_file=report.per_file)

    @app.post("/quality", response_model=QualityResponse)
    def quality(req: QualityRequest):
        est, ref = np.asarray(req.estimate), np.asarray(req.reference)
        if len(est) != len(ref):
            raise HTTPException(422, "estimate and reference differ in length")
        if len(ref) < cfg.stft.n_fft:
            raise HTTPException(422, f"signals must hold at least {cfg.stft.n_fft} samples")
        w = cfg.losses
        try:
            snr = segmental_snr_db(est, ref, cfg.sample_rate, cfg.stft, floor_db=w.quality_floor_db, ceiling_db=w.quality_ceiling_db)
            q = quality_proxy(est, ref, cfg.sample_rate, w, cfg.stft)
        except LossError as exc:
            raise HTTPException(422, str(exc)) from None
        return QualityResponse(quality=q, segmental_snr_db=snr)

    return app


app = create_app()
