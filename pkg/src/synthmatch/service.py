"""HTTP + WebSocket job service.

Wraps the match pipeline for the browser UI: multipart upload creates a
job, a worker thread runs the optimization (one job at a time, FIFO),
progress streams over a WebSocket once per generation, and finished jobs
serve their report, preset, and per-key rendered notes (MIDI 48..72,
cached, deterministic).

All structured payloads carry schema_version 1. Results are written
atomically, so a restart never exposes a partial report.
"""

from __future__ import annotations

import asyncio
import io
import json
import tempfile
import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from fastapi import FastAPI, HTTPException, UploadFile, Form, WebSocket
from fastapi.responses import HTMLResponse, JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from starlette.websockets import WebSocketDisconnect

from synthmatch import audio_io, pipeline
from synthmatch.optimizer import CmaConfig
from synthmatch.params import ParamError, Patch, get_tier, load_preset, preset_text
from synthmatch.synth import AudioBuffer, RenderRequest, render

SCHEMA_VERSION = 1
MAX_UPLOAD_BYTES = 50 * 1024 * 1024
MIDI_LO, MIDI_HI = 48, 72  # two octaves, C3..C5
NOTE_SECONDS = 1.0
NOTE_GATE_SECONDS = 0.6  # note-off inside the 1 s render so releases sound
WS_POLL_S = 0.02


def midi_to_hz(note: int) -> float:
    return 440.0 * 2.0 ** ((note - 69) / 12.0)


@dataclass
class Job:
    id: str
    tier: str
    budget: int
    seed: int
    lam: int
    state: str = "queued"  # queued -> running -> done | failed
    error: str | None = None
    created: float = field(default_factory=time.time)
    started: float | None = None
    finished: float | None = None
    report: pipeline.MatchReport | None = None
    progress: list[dict] = field(default_factory=list)
    terminal: dict | None = None
    note_cache: dict[int, bytes] = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def status_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "id": self.id,
            "state": self.state,
            "tier": self.tier,
            "budget": self.budget,
            "seed": self.seed,
            "error": self.error,
            "created": self.created,
            "started": self.started,
            "finished": self.finished,
        }


def waveform_peaks(samples, pairs: int = 512) -> list[list[float]]:
    """Downsampled min/max pairs for a lightweight waveform display."""
    import numpy as np

    x = np.asarray(samples, dtype=float)
    if len(x) == 0:
        return []
    edges = np.linspace(0, len(x), pairs + 1).astype(int)
    out = []
    for a, b in zip(edges[:-1], edges[1:]):
        chunk = x[a:b] if b > a else x[a : a + 1]
        out.append([float(chunk.min()), float(chunk.max())])
    return out


def render_note_wav(patch: Patch, midi: int, seed: int) -> bytes:
    buf = render(
        RenderRequest(
            patch, midi_to_hz(midi), NOTE_SECONDS, seed=seed,
            note_len=NOTE_GATE_SECONDS,
        )
    )
    bio = io.BytesIO()
    audio_io.write_wav(bio, buf, 16)
    return bio.getvalue()


def load_best_preset() -> tuple[Patch, dict]:
    pkg = resources.files("synthmatch")
    with resources.as_file(pkg / "presets" / "best.preset") as path:
        patch = load_preset(path)
    meta = json.loads((pkg / "presets" / "best.meta.json").read_text())
    return patch, meta


class JobRegistry:
    """In-memory jobs plus a single-worker FIFO executor."""

    def __init__(self, results_dir: str | None = None):
        self.jobs: dict[str, Job] = {}
        self.lock = threading.Lock()
        self.executor = ThreadPoolExecutor(max_workers=1)
        self.results_dir = Path(results_dir or tempfile.mkdtemp(prefix="synthmatch_"))
        self.results_dir.mkdir(parents=True, exist_ok=True)

    def create(self, audio: AudioBuffer, tier: str, budget: int, seed: int,
               lam: int) -> Job:
        job = Job(id=uuid.uuid4().hex[:12], tier=tier, budget=budget, seed=seed,
                  lam=lam)
        with self.lock:
            self.jobs[job.id] = job
        self.executor.submit(self._run, job, audio)
        return job

    def get(self, job_id: str) -> Job:
        with self.lock:
            job = self.jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail="unknown job id")
        return job

    def _run(self, job: Job, audio: AudioBuffer):
        with job.lock:
            job.state = "running"
            job.started = time.time()

        def sink(sample):
            event = {
                "schema_version": SCHEMA_VERSION,
                "type": "progress",
                "evaluations": sample.evaluations,
                "best_loss": sample.best_loss,
                "elapsed_ms": sample.wall_ms,
                "progress_fraction": min(1.0, sample.evaluations / job.budget),
            }
            with job.lock:
                job.progress.append(event)

        try:
            report = pipeline.match(
                audio,
                job.tier,
                CmaConfig(lam=job.lam, budget=job.budget, seed=job.seed),
                out_dir=str(self.results_dir / job.id),
                progress_sink=sink,
            )
            with job.lock:
                job.report = report
                job.state = "done"
                job.finished = time.time()
                job.terminal = {
                    "schema_version": SCHEMA_VERSION,
                    "type": "terminal",
                    "state": "done",
                    "final_loss": report.final_loss,
                }
        except Exception as exc:  # noqa: BLE001 - job failures become terminal events
            with job.lock:
                job.state = "failed"
                job.error = str(exc)
                job.finished = time.time()
                job.terminal = {
                    "schema_version": SCHEMA_VERSION,
                    "type": "terminal",
                    "state": "failed",
                    "error": str(exc),
                }


def create_app(results_dir: str | None = None, frontend_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="synthmatch", version="0.1.0")
    registry = JobRegistry(results_dir)
    app.state.registry = registry

    @app.post("/api/jobs", status_code=201)
    async def create_job(
        file: UploadFile,
        tier: str = Form("t28"),
        budget: int = Form(10_000),
        seed: int = Form(0),
        lam: int = Form(40),
    ):
        payload = await file.read()
        if len(payload) > MAX_UPLOAD_BYTES:
            raise HTTPException(status_code=413, detail="upload exceeds 50 MB")
        name = (file.filename or "").lower()
        if name.endswith(".mp3"):
            raise HTTPException(
                status_code=415,
                detail="MP3 decoding is not built in; upload WAV",
            )
        try:
            tier_label = get_tier(tier).label
        except ParamError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        if budget < lam:
            raise HTTPException(status_code=422, detail="budget must be >= lam")
        try:
            audio = audio_io.load_normalized(io.BytesIO(payload))
        except audio_io.AudioIOError as exc:
            raise HTTPException(status_code=400, detail=f"undecodable audio: {exc}")
        job = registry.create(audio, tier_label, budget, seed, lam)
        return {"schema_version": SCHEMA_VERSION, "id": job.id}

    @app.get("/api/jobs/{job_id}")
    def job_status(job_id: str):
        return registry.get(job_id).status_dict()

    @app.get("/api/jobs/{job_id}/result")
    def job_result(job_id: str):
        job = registry.get(job_id)
        with job.lock:
            if job.state == "failed":
                return JSONResponse(
                    status_code=409,
                    content={
                        "schema_version": SCHEMA_VERSION,
                        "state": "failed",
                        "error": job.error,
                    },
                )
            if job.state != "done" or job.report is None:
                raise HTTPException(status_code=409, detail=f"job is {job.state}")
            report = job.report
        first = report.harmonic_comparison[0] if report.harmonic_comparison else None
        matched = render(
            RenderRequest(
                report.patch, report.pitches[0], NOTE_SECONDS, seed=report.seed,
                note_len=NOTE_GATE_SECONDS,
            )
        )
        return {
            "schema_version": SCHEMA_VERSION,
            "id": job.id,
            "report": report.to_dict(),
            "preset": preset_text(report.patch),
            "waveform_peaks": waveform_peaks(matched.samples),
            "first_harmonics": first,
        }

    @app.get("/api/jobs/{job_id}/notes/{midi}")
    def job_note(job_id: str, midi: int):
        job = registry.get(job_id)
        if not MIDI_LO <= midi <= MIDI_HI:
            raise HTTPException(status_code=422, detail=f"midi must be {MIDI_LO}..{MIDI_HI}")
        with job.lock:
            if job.state != "done" or job.report is None:
                raise HTTPException(status_code=409, detail=f"job is {job.state}")
            cached = job.note_cache.get(midi)
            if cached is None:
                cached = render_note_wav(job.report.patch, midi, job.report.seed)
                job.note_cache[midi] = cached
        return Response(content=cached, media_type="audio/wav")

    best_cache: dict[int, bytes] = {}
    best_lock = threading.Lock()

    @app.get("/api/presets/best")
    def best_preset():
        patch, meta = load_best_preset()
        matched = render(
            RenderRequest(patch, midi_to_hz(57), NOTE_SECONDS, seed=0,
                          note_len=NOTE_GATE_SECONDS)
        )
        return {
            "schema_version": SCHEMA_VERSION,
            "preset": {k: patch.values[k] for k in patch.tier.names},
            "preset_text": preset_text(patch),
            "tier": patch.tier.label,
            "meta": meta,
            "waveform_peaks": waveform_peaks(matched.samples),
        }

    @app.get("/api/presets/best/notes/{midi}")
    def best_note(midi: int):
        if not MIDI_LO <= midi <= MIDI_HI:
            raise HTTPException(status_code=422, detail=f"midi must be {MIDI_LO}..{MIDI_HI}")
        with best_lock:
            cached = best_cache.get(midi)
            if cached is None:
                patch, _ = load_best_preset()
                cached = render_note_wav(patch, midi, seed=0)
                best_cache[midi] = cached
        return Response(content=cached, media_type="audio/wav")

    @app.websocket("/api/jobs/{job_id}/progress")
    async def progress_stream(ws: WebSocket, job_id: str):
        with registry.lock:
            job = registry.jobs.get(job_id)
        if job is None:
            await ws.close(code=4404)
            return
        await ws.accept()
        try:
            with job.lock:
                cursor = len(job.progress)
                snapshot = job.progress[-1] if job.progress else None
            if snapshot is not None:
                await ws.send_text(json.dumps(snapshot))
            while True:
                with job.lock:
                    fresh = job.progress[cursor:]
                    cursor = len(job.progress)
                    terminal = job.terminal if cursor == len(job.progress) else None
                for event in fresh:
                    await ws.send_text(json.dumps(event))
                if terminal is not None:
                    await ws.send_text(json.dumps(terminal))
                    break
                await asyncio.sleep(WS_POLL_S)
            await ws.close()
        except WebSocketDisconnect:
            pass

    dist = Path(frontend_dir) if frontend_dir else Path(__file__).resolve().parents[2] / "frontend" / "dist"
    if dist.is_dir():
        app.mount("/", StaticFiles(directory=str(dist), html=True), name="ui")
    else:
        @app.get("/")
        def index() -> HTMLResponse:
            return HTMLResponse(
                "<h1>synthmatch</h1><p>API is running. Build the front end "
                "(frontend/README.md) for the browser UI.</p>"
            )

    return app
