"""Search drivers: spectral initialization, CMA-ES fitting, multi-start, SPSA.

The objective is the mean composite loss across K target notes; each
candidate evaluation renders the synthesizer at every target pitch. Traces
record (evaluations, best loss, wall ms) once per generation; the initial
point is logged at evaluation 0 and does not count toward the budget.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from synthmatch import loss as loss_mod
from synthmatch.cma import CmaEs
from synthmatch.dsp import FeatureSummary
from synthmatch.params import Patch, denormalize, get_tier
from synthmatch.synth import DEFAULT_SAMPLE_RATE, render_batch

BOUND_EPS = 1e-3  # coordinates this close to 0/1 count as pinned at a bound


class OptimizerError(ValueError):
    pass


@dataclass
class CmaConfig:
    lam: int = 40
    sigma0: float = 0.15
    budget: int = 100_000
    seed: int = 0


@dataclass(frozen=True)
class TraceSample:
    evaluations: int
    best_loss: float
    wall_ms: int


@dataclass
class ConvergenceTrace:
    samples: list[TraceSample] = field(default_factory=list)

    def append(self, evaluations: int, best_loss: float, wall_ms: int):
        if self.samples:
            last = self.samples[-1]
            if evaluations <= last.evaluations:
                raise OptimizerError("trace evaluations must strictly increase")
            best_loss = min(best_loss, last.best_loss)
        self.samples.append(TraceSample(evaluations, best_loss, wall_ms))

    @property
    def best_loss(self) -> float:
        return self.samples[-1].best_loss if self.samples else np.inf

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("evaluations,best_loss,wall_ms\n")
            for s in self.samples:
                fh.write(f"{s.evaluations},{s.best_loss!r},{s.wall_ms}\n")

    def pairs(self) -> list[tuple[int, float]]:
        return [(s.evaluations, s.best_loss) for s in self.samples]


@dataclass
class SpectralInit:
    vector: np.ndarray
    fallback: bool  # True when the target was unvoiced and defaults were used


@dataclass
class OptimizeResult:
    patch: Patch
    vector: np.ndarray
    trace: ConvergenceTrace
    init_loss: float
    final_loss: float
    evaluations: int
    at_bound: tuple[str, ...]

    @property
    def diverged(self) -> bool:
        return "detune" in self.at_bound


@dataclass
class MultiStartResult:
    best: OptimizeResult
    runs: list[OptimizeResult]


class Objective:
    """Mean composite loss over K targets for populations in [0,1]^D."""

    def __init__(self, targets, tier, seed: int = 0):
        if not 1 <= len(targets) <= 3:
            raise OptimizerError("expected 1..3 target notes")
        self.tier = get_tier(tier)
        self.seed = seed
        self.f0s = [float(t.f0) for t in targets]
        self.sample_rate = targets[0].samples.sample_rate
        self.durations = [len(t.samples.samples) / self.sample_rate for t in targets]
        self.features = [loss_mod.TargetFeatures(t.samples) for t in targets]
        self.evaluations = 0

    def __call__(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        total = np.zeros(X.shape[0])
        for f0, dur, feats in zip(self.f0s, self.durations, self.features):
            bufs = render_batch(
                X, [f0], dur, self.sample_rate, self.seed, tier=self.tier
            )[:, 0, :]
            total += feats.composite_rows(bufs)
        self.evaluations += X.shape[0]
        return total / float(len(self.f0s))

    def per_pitch(self, x: np.ndarray) -> list[float]:
        """Composite loss of one candidate at each pitch separately."""
        out = []
        for f0, dur, feats in zip(self.f0s, self.durations, self.features):
            buf = render_batch(
                np.atleast_2d(x), [f0], dur, self.sample_rate, self.seed, tier=self.tier
            )[:, 0, :]
            out.append(float(feats.composite_rows(buf)[0]))
        return out


def spectral_init(features: FeatureSummary | None, tier) -> SpectralInit:
    """Map target features to a starting vector; 0.5 everywhere as fallback.

    Cutoff tracks the 95% rolloff, oscillator weights lean saw vs pulse by
    the even/odd harmonic ratio (threshold 0.15, blended over +/-0.1),
    noise tracks flatness, output gain tracks RMS.
    """
    tier = get_tier(tier)
    x = np.full(tier.dimension, 0.5)
    if features is None:
        return SpectralInit(x, True)

    cutoff_spec = tier.spec("cutoff")
    rolloff = min(max(features.rolloff_95, cutoff_spec.lo), cutoff_spec.hi)
    x[tier.index("cutoff")] = float(cutoff_spec.to_normalized(rolloff))

    t = float(np.clip(0.5 + (features.even_odd_ratio - 0.15) / 0.2, 0.0, 1.0))
    x[tier.index("osc_mix_saw")] = 0.25 + 0.5 * t
    x[tier.index("osc_mix_pulse")] = 0.75 - 0.5 * t
    x[tier.index("osc_mix_sine")] = 0.15
    x[tier.index("osc_mix_noise")] = float(np.clip(2.0 * features.flatness, 0.0, 1.0))
    x[tier.index("output_gain")] = float(np.clip(1.5 * features.rms, 0.0, 1.0))
    return SpectralInit(x, False)


def features_of_loudest(targets) -> FeatureSummary | None:
    """FeatureSummary of the highest-RMS voiced target, or None."""
    best = None
    for t in targets:
        if getattr(t, "confidence", 1.0) < 0.5 or t.f0 <= 0.0:
            continue
        if best is None or t.samples.rms() > best.samples.rms():
            best = t
    if best is None:
        return None
    return FeatureSummary.from_buffer(best.samples, best.f0)


def optimize(targets, config: CmaConfig, tier, progress_sink=None,
             x0: np.ndarray | None = None) -> OptimizeResult:
    """Fit one parameter vector to the targets with CMA-ES.

    progress_sink, when given, receives a TraceSample once per generation.
    x0 overrides the spectral initialization (used by multi_start).
    """
    tier = get_tier(tier)
    if config.budget < config.lam:
        raise OptimizerError("budget must cover at least one generation")
    objective = Objective(targets, tier, seed=config.seed)
    if x0 is None:
        x0 = spectral_init(features_of_loudest(targets), tier).vector
    x0 = np.clip(np.asarray(x0, dtype=float), 0.0, 1.0)

    t_start = time.monotonic()
    init_loss = float(objective(x0[None, :])[0])
    best_x, best_loss = x0.copy(), init_loss
    trace = ConvergenceTrace()
    trace.append(0, init_loss, 0)

    es = CmaEs(x0, config.sigma0, config.lam, seed=config.seed)
    generations = config.budget // config.lam
    evaluations = 0
    for _ in range(generations):
        X = es.ask()
        losses = objective(X)
        es.tell(X, losses)
        evaluations += config.lam
        if es.best_loss < best_loss:
            best_loss = float(es.best_loss)
            best_x = es.best_x.copy()
        wall = int((time.monotonic() - t_start) * 1000)
        trace.append(evaluations, best_loss, wall)
        if progress_sink is not None:
            progress_sink(trace.samples[-1])

    at_bound = tuple(
        name
        for name, v in zip(tier.names, best_x)
        if v <= BOUND_EPS or v >= 1.0 - BOUND_EPS
    )
    return OptimizeResult(
        patch=denormalize(best_x, tier),
        vector=best_x,
        trace=trace,
        init_loss=init_loss,
        final_loss=best_loss,
        evaluations=evaluations,
        at_bound=at_bound,
    )


def multi_start(targets, config: CmaConfig, tier, n: int = 8,
                progress_sink=None) -> MultiStartResult:
    """n independent runs from perturbed spectral inits; budget split evenly.

    Run 0 starts from the unperturbed initialization (so n=1 reduces to
    optimize); later runs add clamped N(0, 0.1^2) perturbations.
    """
    if n < 1:
        raise OptimizerError("need at least one start")
    tier = get_tier(tier)
    base = spectral_init(features_of_loudest(targets), tier).vector
    per_run = config.budget // n
    runs = []
    for i in range(n):
        x0 = base
        if i > 0:
            rng = np.random.default_rng([config.seed, i])
            x0 = np.clip(base + rng.normal(0.0, 0.1, base.shape), 0.0, 1.0)
        cfg = CmaConfig(config.lam, config.sigma0, per_run, config.seed + i)
        runs.append(optimize(targets, cfg, tier, progress_sink=progress_sink, x0=x0))
    best = min(runs, key=lambda r: r.final_loss)
    return MultiStartResult(best=best, runs=runs)


def spsa_gradient(fn, x: np.ndarray, c_k: float, rng) -> np.ndarray:
    """One SPSA gradient estimate with a Rademacher perturbation."""
    delta = rng.integers(0, 2, len(x)) * 2.0 - 1.0
    lo = np.clip(x - c_k * delta, 0.0, 1.0)
    hi = np.clip(x + c_k * delta, 0.0, 1.0)
    fp, fm = fn(np.vstack([hi, lo]))
    return (fp - fm) / (2.0 * c_k) * delta


def spsa_finetune(x: np.ndarray, targets, tier=None, iterations: int = 50,
                  a: float = 0.02, c: float = 0.05, seed: int = 0) -> np.ndarray:
    """SPSA refinement that never returns a worse point than its input.

    Gains a_k = a/(k+1)^0.602 and c_k = c/(k+1)^0.101; iterates are clamped
    to [0,1]. Returns whichever of (input, final iterate) scores lower.
    """
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    if tier is None:
        tier = {15: "t15", 18: "t18", 24: "t24", 28: "t28", 31: "t29"}[len(x)]
    objective = Objective(targets, tier, seed=seed)
    rng = np.random.default_rng(seed)
    cur = x.copy()
    for k in range(iterations):
        a_k = a / (k + 1) ** 0.602
        c_k = c / (k + 1) ** 0.101
        g = spsa_gradient(objective, cur, c_k, rng)
        cur = np.clip(cur - a_k * g, 0.0, 1.0)
    f_in, f_out = objective(np.vstack([x, cur]))
    return cur if f_out < f_in else x
