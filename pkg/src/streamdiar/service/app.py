"""FastAPI application exposing batch runs, live sessions, scoring, tuning and benchmarks."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..containers import FEATURES_MAGIC, read_matrix_header
from ..errors import DiarizationError
from ..fixtures import build_fixture, describe, write_fixture
from ..metrics import DerBreakdown, der, local_der_curve
from ..pipeline import OnlineDiarizer, build_providers, seeded_centroids
from ..pooling import random_signatures, stream_features
from ..rttm import load_rttm, parse_rttm, rttm_string
from ..stream import open_stream, wav_info
from ..timebase import Annotation, time_to_frame
from ..tuning import bench_step, load_dev_dir, tune
from .schemas import (BenchRequest, BenchResponse, CloseResponse, ConfigModel, CurvePoint,
                      DerModel, FileScore, FixtureRequest, FixtureResponse, FramesRequest,
                      FramesResponse, RunRequest, RunResponse, ScoreRequest, ScoreResponse,
                      SegmentModel, SessionCreate, SessionInfo, StepReportModel, TunePoint,
                      TuneRequest, TuneResponse)
from .sessions import SessionRegistry, StreamSession


def _reference(text: str | None) -> Annotation | None:
    return parse_rttm(text) if text else None


def _oracle_features(reference: Annotation, duration: float, config) -> np.ndarray:
    rng = np.random.default_rng(config.seed)
    labels = reference.labels()
    sig = random_signatures(len(labels), 32, rng)
    n = time_to_frame(config.grid, duration)
    return stream_features(reference, n, dict(zip(labels, sig)), 0.0, config.grid, rng)


def create_app() -> FastAPI:
    app = FastAPI(title="streamdiar", version=__version__)
    sessions = SessionRegistry()
    app.state.sessions = sessions

    @app.exception_handler(DiarizationError)
    async def _diarization_error(request: Request, exc: DiarizationError):
        return JSONResponse(status_code=422, content={"detail": str(exc), "type": type(exc).__name__})

    @app.exception_handler(ValueError)
    async def _value_error(request: Request, exc: ValueError):
        return JSONResponse(status_code=422, content={"detail": str(exc), "type": "ValueError"})

    @app.exception_handler(FileNotFoundError)
    async def _missing(request: Request, exc: FileNotFoundError):
        return JSONResponse(status_code=404, content={"detail": str(exc), "type": "FileNotFoundError"})

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/runs", response_model=RunResponse)
    def run_file(req: RunRequest):
        config = req.config.to_config()
        reference = _reference(req.providers.reference_rttm)
        if req.features_path:
            source = req.features_path
            uri = req.uri or Path(req.features_path).stem
        elif req.audio_path:
            if reference is None:
                raise ValueError("audio input needs a reference for oracle features")
            uri, duration = wav_info(req.audio_path)
            uri = req.uri or uri
            source = _oracle_features(reference, duration, config)
        else:
            raise ValueError("features_path or audio_path is required")
        if reference is not None and req.uri is None and reference.uri:
            uri = reference.uri
        segmenter, embedder = build_providers(config, reference, req.providers.segmentation_path,
                                              req.providers.embeddings_path)
        diarizer = OnlineDiarizer(config, segmenter, embedder, uri)
        for window in open_stream(source, config.grid, config.pad_warmup):
            diarizer.step(window)
        hyp = diarizer.finish()
        if req.dump_centroids:
            diarizer.centroids.save(req.dump_centroids)
        return RunResponse(uri=uri, rttm=rttm_string(hyp), num_speakers=len(hyp.labels()),
                           segments=[SegmentModel.of(s, lab) for s, lab in hyp],
                           steps=[StepReportModel.of(r) for r in diarizer.reports])

    @app.post("/sessions", response_model=SessionInfo, status_code=201)
    def open_session(req: SessionCreate):
        p = req.providers
        session = sessions.add(StreamSession(req.config.to_config(), req.uri,
                                             _reference(p.reference_rttm),
                                             p.segmentation_path, p.embeddings_path))
        return _info(session)

    def _session(session_id: str) -> StreamSession:
        try:
            return sessions.get(session_id)
        except KeyError:
            raise HTTPException(404, f"no session {session_id}") from None

    def _info(s: StreamSession) -> SessionInfo:
        return SessionInfo(session_id=s.id, uri=s.uri, frames_received=s.buffer.frames_received,
                           windows=s.windows, num_speakers=s.diarizer.centroids.size,
                           finalized_until=s.diarizer.accumulator.finalized_until
                           * s.config.grid.frame_step)

    @app.get("/sessions/{session_id}", response_model=SessionInfo)
    def session_info(session_id: str):
        return _info(_session(session_id))

    @app.post("/sessions/{session_id}/frames", response_model=FramesResponse)
    def push_frames(session_id: str, req: FramesRequest):
        session = _session(session_id)
        frames = np.asarray(req.frames, dtype=np.float64)
        if frames.ndim != 2:
            raise ValueError("frames must be a list of equal-length rows")
        try:
            reports, closed = session.push(frames)
        except RuntimeError as exc:
            raise HTTPException(409, str(exc)) from None
        return FramesResponse(steps=[StepReportModel.of(r) for r in reports],
                              segments=[SegmentModel.of(s, lab) for s, lab in closed])

    @app.post("/sessions/{session_id}/close", response_model=CloseResponse)
    def close_session(session_id: str):
        session = _session(session_id)
        annotation, closed = session.close()
        return CloseResponse(uri=session.uri, rttm=rttm_string(annotation),
                             num_speakers=len(annotation.labels()),
                             segments=[SegmentModel.of(s, lab) for s, lab in closed])

    @app.delete("/sessions/{session_id}", status_code=204)
    def drop_session(session_id: str):
        _session(session_id)
        sessions.remove(session_id)

    @app.post("/score", response_model=ScoreResponse)
    def score(req: ScoreRequest):
        refs = load_rttm(req.reference_rttm)
        hyps = load_rttm(req.hypothesis_rttm)
        files = []
        total = DerBreakdown(0.0, 0.0, 0.0, 0.0)
        for uri in sorted(refs):
            ref, hyp = refs[uri], hyps.get(uri, Annotation(uri))
            d = der(ref, hyp)
            total = total + d
            curve = None
            if req.bin:
                curve = [CurvePoint(time=t, scores=DerModel.of(b))
                         for t, b in local_der_curve(ref, hyp, req.bin)]
            files.append(FileScore(uri=uri, scores=DerModel.of(d), curve=curve))
        extra = sorted(set(hyps) - set(refs))
        if extra:
            raise ValueError(f"hypothesis recordings without reference: {extra}")
        return ScoreResponse(files=files, aggregate=DerModel.of(total))

    @app.post("/tune", response_model=TuneResponse)
    def tune_grid(req: TuneRequest):
        dev = load_dev_dir(req.dev_dir)
        result = tune(req.grid, dev, req.config.to_config())
        return TuneResponse(best=ConfigModel.from_config(result.best), best_der=result.best_der,
                            table=[TunePoint(params=p, mean_der=m) for p, m in result.table])

    @app.post("/bench", response_model=BenchResponse)
    def bench(req: BenchRequest):
        config = req.config.to_config()
        reference = _reference(req.reference_rttm)
        if req.features_path:
            source = req.features_path
        else:
            fx = build_fixture(req.speakers, req.duration, 0.1, 0.0, seed=config.seed,
                               dim=req.dim, grid=config.grid)
            source, reference = fx.features, reference or fx.reference
        centroids = None
        if req.extra_centroids:
            centroids = seeded_centroids(req.extra_centroids, 2 * _dim(source), config.seed)
        stats = bench_step(config, source, req.repetitions, reference, centroids=centroids)
        return BenchResponse(**stats.as_dict())

    @app.post("/fixtures", response_model=FixtureResponse)
    def make_fixture(req: FixtureRequest):
        config = req.config.to_config()
        fx = build_fixture(req.speakers, req.duration, req.overlap, req.noise, seed=req.seed,
                           dim=req.dim, shared=req.shared, grid=config.grid, uri=req.uri)
        paths = write_fixture(fx, req.out_dir, config.k_max, config.pad_warmup, config.seed)
        return FixtureResponse(paths={k: str(v) for k, v in paths.items()}, summary=describe(fx))

    return app


def _dim(source) -> int:
    if isinstance(source, np.ndarray):
        return source.shape[1]
        return read_matrix_header(source, FEATURES_MAGIC)[0]


app = create_app()
