"""End-to-end orchestration: WAV in, recovered patch out.

match() runs segmentation (spectral-flux onsets, delta = 0.015), pitch
tracking, representative-pitch selection (cluster within +/-50 cents, keep
the K most populated clusters, loudest note per cluster), CMA-ES fitting,
and report/preset/trace/audio export. Reports serialize without wall-clock
times so repeated runs with one seed produce byte-identical files.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from synthmatch import audio_io, dsp, kernels, loss as loss_mod, params
from synthmatch.dsp import FeatureSummary
from synthmatch.optimizer import (
    CmaConfig,
    ConvergenceTrace,
    Objective,
    OptimizeResult,
    optimize,
)
from synthmatch.params import Patch, get_tier, save_preset
from synthmatch.synth import (
    DEFAULT_SAMPLE_RATE,
    AudioBuffer,
    RenderRequest,
    render,
    render_batch,
)

MIN_SEGMENT_S = 0.05
CLUSTER_CENTS = 50.0
REPORT_SCHEMA_VERSION = 1


class PipelineAbort(RuntimeError):
    """No usable notes in the input; optimization cannot start."""


@dataclass
class NoteSegment:
    samples: AudioBuffer
    onset: int
    offset: int
    f0: float
    confidence: float

    @property
    def duration(self) -> float:
        return (self.offset - self.onset) / self.samples.sample_rate


@dataclass
class MatchReport:
    tier: str
    patch: Patch
    trace: ConvergenceTrace
    per_pitch_losses: list[float]
    pitches: list[float]
    init_loss: float
    final_loss: float
    feature_summary: FeatureSummary
    harmonic_comparison: list[dict]
    at_bound: tuple[str, ...]
    seed: int
    budget: int

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "tier": self.tier,
            "patch": {k: self.patch.values[k] for k in self.patch.tier.names},
            "pitches": self.pitches,
            "per_pitch_losses": self.per_pitch_losses,
            "init_loss": self.init_loss,
            "final_loss": self.final_loss,
            "feature_summary": self.feature_summary.to_dict(),
            "harmonic_comparison": self.harmonic_comparison,
            "at_bound": list(self.at_bound),
            "seed": self.seed,
            "budget": self.budget,
            "trace": [[e, l] for e, l in self.trace.pairs()],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def _atomic_write(path, data: str | bytes):
    mode = "wb" if isinstance(data, bytes) else "w"
    tmp = f"{path}.tmp"
    with open(tmp, mode) as fh:
        fh.write(data)
    os.replace(tmp, path)


def segment(audio: AudioBuffer) -> list[NoteSegment]:
    """Split audio at onsets and keep pitched regions of at least 50 ms."""
    sr = audio.sample_rate
    x = np.asarray(audio.samples, dtype=float)
    onsets = dsp.detect_onsets(audio)
    if onsets.size == 0:
        if audio.rms() <= dsp.SILENCE_RMS:
            return []
        onsets = np.array([0])
    bounds = list(onsets) + [len(x)]
    segments = []
    min_len = int(MIN_SEGMENT_S * sr)
    for a, b in zip(bounds[:-1], bounds[1:]):
        if b - a < min_len:
            continue
        piece = AudioBuffer(x[a:b], sr)
        if piece.rms() <= dsp.SILENCE_RMS:
            continue
        pitch = dsp.detect_pitch(piece)
        if not pitch.voiced:
            continue
        segments.append(NoteSegment(piece, int(a), int(b), pitch.f0, pitch.confidence))
    return segments


def _cents(f_a: float, f_b: float) -> float:
    return abs(1200.0 * np.log2(f_a / f_b))


def select_pitches(segments: list[NoteSegment], k: int = 3) -> list[NoteSegment]:
    """One representative per pitch class: K most-populated clusters, loudest note."""
    if not segments:
        return []
    ordered = sorted(segments, key=lambda s: s.f0)
    clusters: list[list[NoteSegment]] = [[ordered[0]]]
    for seg in ordered[1:]:
        mean_f0 = float(np.mean([s.f0 for s in clusters[-1]]))
        if _cents(seg.f0, mean_f0) <= CLUSTER_CENTS:
            clusters[-1].append(seg)
        else:
            clusters.append([seg])
    clusters.sort(key=lambda c: (-len(c), float(np.mean([s.f0 for s in c]))))
    reps = [max(c, key=lambda s: s.samples.rms()) for c in clusters[:k]]
    return sorted(reps, key=lambda s: s.f0)


def _as_audio(source) -> AudioBuffer:
    if isinstance(source, AudioBuffer):
        if source.sample_rate != DEFAULT_SAMPLE_RATE:
            return audio_io.resample(source, DEFAULT_SAMPLE_RATE)
        return source
    return audio_io.load_normalized(source)


def prepare_targets(source, k: int = 3) -> list[NoteSegment]:
    """Load, segment, and pick representative notes; aborts when none exist."""
    audio = _as_audio(source)
    segments = segment(audio)
    if not segments:
        raise PipelineAbort(
            "no voiced note segments found (input silent, unpitched, or too short)"
        )
    return select_pitches(segments, k)


def match(source, tier="t28", config: CmaConfig | None = None, out_dir=None,
          progress_sink=None, k: int = 3) -> MatchReport:
    """Full pipeline; optionally writes preset/report/trace/audio to out_dir."""
    tier = get_tier(tier)
    config = config or CmaConfig(budget=10_000)
    targets = prepare_targets(source, k)
    result = optimize(targets, config, tier, progress_sink=progress_sink)

    objective = Objective(targets, tier, seed=config.seed)
    per_pitch = objective.per_pitch(result.vector)
    feature_summary = FeatureSummary.from_buffer(
        max(targets, key=lambda t: t.samples.rms()).samples,
        max(targets, key=lambda t: t.samples.rms()).f0,
    )
    harmonic_comparison = []
    renders = []
    for seg in targets:
        matched = render(
            RenderRequest(result.patch, seg.f0, seg.duration, seg.samples.sample_rate,
                          config.seed)
        )
        renders.append(matched)
        harmonic_comparison.append(
            {
                "f0": seg.f0,
                "original": [float(a) for a in dsp.harmonic_amplitudes(seg.samples, seg.f0)],
                "matched": [float(a) for a in dsp.harmonic_amplitudes(matched, seg.f0)],
            }
        )

    report = MatchReport(
        tier=tier.label,
        patch=result.patch,
        trace=result.trace,
        per_pitch_losses=per_pitch,
        pitches=[s.f0 for s in targets],
        init_loss=result.init_loss,
        final_loss=result.final_loss,
        feature_summary=feature_summary,
        harmonic_comparison=harmonic_comparison,
        at_bound=result.at_bound,
        seed=config.seed,
        budget=config.budget,
    )

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        save_preset(result.patch, os.path.join(out_dir, "match.preset"))
        _atomic_write(os.path.join(out_dir, "report.json"), report.to_json())
        result.trace.to_csv(os.path.join(out_dir, "trace.csv"))
        side = np.concatenate(
            [np.concatenate([seg.samples.samples, r.samples])
             for seg, r in zip(targets, renders)]
        )
        audio_io.write_wav(
            os.path.join(out_dir, "side_by_side.wav"),
            AudioBuffer(side, targets[0].samples.sample_rate),
        )
    return report


@dataclass
class AblationRow:
    tier: str
    dimension: int
    final_loss: float
    at_bound: tuple[str, ...]


def ablate(source, tiers, budget: int, seed: int = 0, lam: int = 40,
           k: int = 3) -> list[AblationRow]:
    """Fit each tier to the same targets with equal budget and seed."""
    tier_objs = sorted((get_tier(t) for t in tiers), key=lambda t: t.dimension)
    if len(tier_objs) < 1:
        raise PipelineAbort("no tiers requested")
    targets = prepare_targets(source, k)
    rows = []
    for tier in tier_objs:
        cfg = CmaConfig(lam=lam, budget=budget, seed=seed)
        result = optimize(targets, cfg, tier)
        rows.append(
            AblationRow(tier.label, tier.dimension, result.final_loss, result.at_bound)
        )
    return rows


@dataclass
class BenchBackendResult:
    backend: str
    batched_evals_per_s: float
    serial_evals_per_s: float
    serial_cached_evals_per_s: float
    speedup: float
    speedup_cached: float
    evaluations: int
    generations: int


@dataclass
class BenchReport:
    results: list[BenchBackendResult]
    b: int
    k: int
    duration: float
    reference_evals_per_s: float = 553.0  # published on an Apple M4, 10 cores

    def lines(self) -> list[str]:
        out = [
            f"batched-vs-serial throughput, B={self.b}, K={self.k}, "
            f"{self.duration * 1000:.0f} ms notes"
        ]
        for r in self.results:
            out.append(
                f"  [{r.backend}] batched {r.batched_evals_per_s:8.1f} evals/s over "
                f"{r.generations} generations ({r.evaluations} evals)"
            )
            out.append(
                f"  [{r.backend}] serial  {r.serial_evals_per_s:8.1f} evals/s"
                f" (one-at-a-time loop), {r.serial_cached_evals_per_s:.1f} with"
                f" cached target features"
            )
            out.append(
                f"  [{r.backend}] speedup {r.speedup:.1f}x"
                f" ({r.speedup_cached:.1f}x vs cached-serial)"
            )
        out.append(
            f"  reference point: {self.reference_evals_per_s:.0f} evals/s"
            " (Apple M4, 10 CPU cores)"
        )
        return out


def _bench_backend(backend: str, b: int, k: int, duration: float,
                   min_seconds: float, seed: int) -> BenchBackendResult:
    rng = np.random.default_rng(seed)
    tier = get_tier("t28")
    target_patch = params.denormalize(rng.uniform(0.2, 0.8, tier.dimension), tier)
    pitches = [221.0, 278.0, 295.0][:k]
    target_bufs = [
        render(RenderRequest(target_patch, f, duration, seed=seed)) for f in pitches
    ]
    feats = [loss_mod.TargetFeatures(t) for t in target_bufs]
    X = rng.uniform(0.0, 1.0, (b, tier.dimension))

    with kernels.use_backend(backend):
        # batched: full generations until the clock budget is spent
        generations = 0
        t0 = time.perf_counter()
        while True:
            Y = render_batch(X, pitches, duration, seed=seed)
            loss_mod.composite_loss_batch(Y, feats)
            generations += 1
            if time.perf_counter() - t0 >= min_seconds and generations >= 2:
                break
        batched_dt = (time.perf_counter() - t0) / (generations * b)

        # serial: the public one-at-a-time loop (render + pairwise loss)
        serial_evals = max(4, min(b, int(min_seconds / 2 / 0.05)))
        t0 = time.perf_counter()
        for i in range(serial_evals):
            patch = params.denormalize(X[i % b], tier)
            for f0, tbuf in zip(pitches, target_bufs):
                cand = render(RenderRequest(patch, f0, duration, seed=seed))
                loss_mod.composite_loss(tbuf, cand)
        serial_dt = (time.perf_counter() - t0) / serial_evals

        # serial with target features cached (batching is the only difference)
        t0 = time.perf_counter()
        for i in range(serial_evals):
            patch = params.denormalize(X[i % b], tier)
            for f0, tf in zip(pitches, feats):
                cand = render(RenderRequest(patch, f0, duration, seed=seed))
                tf.composite_rows(cand.samples[None, :])
        cached_dt = (time.perf_counter() - t0) / serial_evals

    return BenchBackendResult(
        backend=backend,
        batched_evals_per_s=1.0 / batched_dt,
        serial_evals_per_s=1.0 / serial_dt,
        serial_cached_evals_per_s=1.0 / cached_dt,
        speedup=serial_dt / batched_dt,
        speedup_cached=cached_dt / batched_dt,
        evaluations=generations * b,
        generations=generations,
    )


def bench(b: int = 40, k: int = 3, duration: float = 0.15,
          min_seconds: float = 10.0, seed: int = 0,
          backends=None) -> BenchReport:
    """Measure batched render+loss throughput against the serial loop."""
    names = backends or kernels.backend_names()
    results = [
        _bench_backend(name, b, k, duration, min_seconds, seed) for name in names
    ]
    return BenchReport(results=results, b=b, k=k, duration=duration)
