"""Batched subtractive synthesizer.

Signal chain per note:

    Oscillators -> Mixer -> LP Filter -> EQ -> (+noise floor) -> Amp
    [-> Distortion] -> Reverb [-> Delay] -> output gain -> soft clip

Bracketed stages exist only at tier t29. The low-pass filter is a
frequency-domain magnitude shape applied over short Hann-windowed frames at
50% overlap (exact unity overlap-add), each frame using the cutoff
modulated by the filter envelope's running mean at that frame; see
FILTER_FRAME for the resolution tradeoff. Rendering is a pure function of
(patch, f0, duration, sample_rate, seed): batched and one-at-a-time calls
produce identical samples, and all noise comes from counter-based streams
derived from the seed.

Known quirk, kept deliberately: the pulse oscillator compares sin(phase)
against the constant sin(2*pi*w), so duty behaviour is asymmetric around
w = 0.25 and w = 0.75 rather than sweeping duty linearly in w.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft
from scipy.special import expit

from synthmatch import kernels
from synthmatch.params import (
    RENDER_DEFAULTS,
    ParamError,
    Patch,
    TIERS,
    denormalize_rows,
    get_tier,
    patch_to_rows,
)

DEFAULT_SAMPLE_RATE = 44100
# Samples per filter block. Sets the filter kernel's frequency resolution
# (sr/FILTER_FRAME, 86 Hz at 512) and the cutoff envelope's time
# granularity (11.6 ms), a balance between resolving low cutoffs and
# tracking fast sweeps.
FILTER_FRAME = 512
EQ_BANDWIDTH = 0.4          # Gaussian sigma of an EQ band, natural-log frequency
REVERB_MIN_SECONDS = 0.05
REVERB_SECONDS_PER_SIZE = 0.45
REVERB_DECAY_LN = np.log(1000.0)   # -60 dB over the impulse length
DELAY_SECONDS = 0.3         # one eighth note at 100 BPM
VIBRATO_RATE_HZ = 5.0

# counter-based noise streams
STREAM_OSC = 0
STREAM_FLOOR = 1
STREAM_REVERB = 2

# FFT helpers: scipy's pocketfft computes each 1-D transform independently,
# so per-row results do not depend on batch size or worker count.
FFT_WORKERS = max(1, os.cpu_count() or 1)

_DIM_TO_TIER = {t.dimension: t for t in TIERS.values()}


def _rfft(x, n=None, axis=-1):
    return sfft.rfft(x, n=n, axis=axis, workers=FFT_WORKERS)


def _irfft(x, n, axis=-1):
    return sfft.irfft(x, n=n, axis=axis, workers=FFT_WORKERS)


class RenderError(ValueError):
    """Raised for invalid render requests."""


@dataclass
class AudioBuffer:
    """Mono audio: float64 samples plus their sample rate."""

    samples: np.ndarray
    sample_rate: int

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def rms(self) -> float:
        if len(self.samples) == 0:
            return 0.0
        return float(np.sqrt(np.mean(self.samples**2)))


@dataclass(frozen=True)
class RenderRequest:
    patch: Patch
    f0: float
    duration: float
    sample_rate: int = DEFAULT_SAMPLE_RATE
    seed: int = 0
    note_len: float | None = None  # note-off time; defaults to duration


def _check_f0(f0: float, sample_rate: float):
    if not 20.0 < f0 < sample_rate / 4.0:
        raise RenderError(f"f0 = {f0} Hz outside (20, sample_rate/4)")


def unison_offsets(voices: int) -> np.ndarray:
    """Symmetric voice offsets, e.g. 5 voices -> [-1, -0.5, 0, 0.5, 1]."""
    if voices <= 1:
        return np.zeros(1)
    return np.linspace(-1.0, 1.0, voices)


def unison_ratios(detune: float, spread: float, voices: int) -> np.ndarray:
    """Per-voice frequency ratios 2^((d + s*o)/12)."""
    return 2.0 ** ((detune + spread * unison_offsets(voices)) / 12.0)


def filter_magnitude(freqs, f_c, alpha, q):
    """Low-pass magnitude: sigmoid edge at f_c plus a resonance bump.

    H(f) = sigmoid(-alpha*(f/f_c - 1)) + q * 2*exp(-((f/f_c - 1)/0.15)^2 / 2)

    Broadcasts over array arguments; H(f_c) = 0.5 + 2q exactly.
    """
    u = np.asarray(freqs, dtype=float) / np.asarray(f_c, dtype=float) - 1.0
    with np.errstate(under="ignore"):
        return expit(-np.asarray(alpha, dtype=float) * u) + np.asarray(
            q, dtype=float
        ) * 2.0 * np.exp(-0.5 * (u / 0.15) ** 2)


def eq_magnitude(freqs, bands):
    """Gain of a parametric EQ: Gaussian bumps in log-frequency.

    bands is a sequence of (center_hz, gain_db); each contributes
    10^(gain_db * w(f) / 20) with w(f) a unit Gaussian around the center in
    natural-log frequency (sigma EQ_BANDWIDTH). Positive gains boost.
    """
    freqs = np.asarray(freqs, dtype=float)
    gain = np.ones_like(freqs * 1.0)
    with np.errstate(divide="ignore", under="ignore"):
        logf = np.where(freqs > 0.0, np.log(np.maximum(freqs, 1e-300)), 0.0)
    for center, gain_db in bands:
        center = np.asarray(center, dtype=float)
        gain_db = np.asarray(gain_db, dtype=float)
        with np.errstate(under="ignore"):
            w = np.exp(-0.5 * ((logf - np.log(center)) / EQ_BANDWIDTH) ** 2)
        w = np.where(freqs > 0.0, w, 0.0)
        gain = gain * 10.0 ** (gain_db * w / 20.0)
    return gain


def _adsr_rows(attack, decay, sustain, release, note_len, n, sample_rate):
    """Piecewise-linear ADSR for row-shaped parameter arrays: (R, n).

    Gate portion as min(attack ramp, 1) minus the decayed fraction, which
    collapses attack/decay/sustain into two terms; after note-off the level
    at note_len ramps linearly to zero over the release time.
    """
    t = np.arange(n, dtype=float) / sample_rate
    a = np.asarray(attack, dtype=float)[:, None]
    d = np.asarray(decay, dtype=float)[:, None]
    s = np.asarray(sustain, dtype=float)[:, None]
    r = np.asarray(release, dtype=float)[:, None]
    tt = t[None, :]
    gate = np.minimum(tt / a, 1.0) - (1.0 - s) * np.clip((tt - a) / d, 0.0, 1.0)
    off = np.minimum(note_len / a, 1.0) - (1.0 - s) * np.clip(
        (note_len - a) / d, 0.0, 1.0
    )
    rel = off * np.clip(1.0 - (tt - note_len) / r, 0.0, 1.0)
    return np.where(tt < note_len, gate, rel)


def adsr(attack, decay, sustain, release, note_len, n, sample_rate) -> np.ndarray:
    """Scalar ADSR envelope of n samples; note-off at note_len seconds."""
    env = _adsr_rows(
        np.array([attack]),
        np.array([decay]),
        np.array([sustain]),
        np.array([release]),
        float(note_len),
        int(n),
        float(sample_rate),
    )
    return env[0]


def _next_pow2(n: int) -> int:
    return 1 << (int(n - 1)).bit_length()


def _reverb_rows(y, size, mix, seed, sample_rate):
    """Convolve rows with seeded exponentially-decaying noise impulses.

    Rows with mix == 0 are returned untouched (bit-identical dry path). The
    impulse of a row depends only on (n, that row's size, seed), so a row is
    processed the same way whether it arrives alone or in a batch; impulse
    spectra are cached per length since consecutive rows repeat candidates.
    Output is truncated to n samples, so the convolution only needs the
    first n impulse samples (normalization still uses the full impulse).
    """
    n = y.shape[1]
    mix = np.asarray(mix, dtype=float)
    size = np.asarray(size, dtype=float)
    active = np.flatnonzero(mix > 0.0)
    if active.size == 0:
        return y
    out = y.copy()
    dtype = y.dtype
    cplx = np.complex64 if dtype == np.float32 else np.complex128
    lengths = np.maximum(
        (REVERB_MIN_SECONDS + REVERB_SECONDS_PER_SIZE * size) * sample_rate, 1.0
    ).astype(int)
    master = kernels.rand_unit(seed, STREAM_REVERB, 0, int(lengths.max()))
    heff = np.minimum(lengths, n)
    nfft_of = {}
    for i in active:
        nfft_of[i] = sfft.next_fast_len(n + int(heff[i]) - 1, real=True)
    spectra: dict[tuple[int, int], np.ndarray] = {}
    for nfft in sorted(set(nfft_of.values())):
        rows = np.array([i for i in active if nfft_of[i] == nfft])
        hf = np.empty((rows.size, nfft // 2 + 1), dtype=cplx)
        for j, i in enumerate(rows):
            L = int(lengths[i])
            key = (L, nfft)
            if key not in spectra:
                imp = master[:L] * np.exp(-REVERB_DECAY_LN * np.arange(L) / L)
                imp /= np.sqrt(np.sum(imp**2))
                spectra[key] = _rfft(imp[: int(heff[i])].astype(dtype), n=nfft)
            hf[j] = spectra[key]
        wet = _irfft(_rfft(y[rows], n=nfft, axis=1) * hf, n=nfft, axis=1)[:, :n]
        gain = mix[rows][:, None].astype(dtype)
        out[rows] = (1.0 - gain) * y[rows] + gain * wet
    return out


def reverb(buf: AudioBuffer, size: float, mix: float, seed: int = 0) -> AudioBuffer:
    """Standalone reverb on a buffer; mix = 0 returns the input samples."""
    if not (0.0 <= size <= 1.0 and 0.0 <= mix <= 0.5):
        raise RenderError("reverb expects size in [0,1], mix in [0,0.5]")
    y = _reverb_rows(
        np.asarray(buf.samples, dtype=float)[None, :],
        np.array([size]),
        np.array([mix]),
        seed,
        buf.sample_rate,
    )
    return AudioBuffer(y[0], buf.sample_rate)


def _delay_rows(y, feedback, sample_rate):
    """Single feedback tap at DELAY_SECONDS, applied in place."""
    n = y.shape[1]
    d = int(DELAY_SECONDS * sample_rate)
    if d <= 0 or d >= n:
        return y
    fb = np.asarray(feedback, dtype=float)[:, None]
    for start in range(d, n, d):
        stop = min(start + d, n)
        y[:, start:stop] += fb * y[:, start - d : start - d + (stop - start)]
    return y


def chebyshev_waveshape(buf: AudioBuffer, coeffs) -> AudioBuffer:
    """Waveshape with Chebyshev polynomials T_1..T_5 of the clipped input.

    y = sum_k c_k T_k(clip(x, -1, 1)); coefficients in [-1, 1]. The clip is
    the identity on [-1, 1], so coeffs (1,0,0,0,0) pass such signals through
    unchanged.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (5,):
        raise RenderError("expected exactly 5 Chebyshev coefficients")
    if np.any(np.abs(coeffs) > 1.0):
        raise RenderError("Chebyshev coefficients must lie in [-1, 1]")
    x = np.clip(np.asarray(buf.samples, dtype=float), -1.0, 1.0)
    y = np.polynomial.chebyshev.chebval(x, np.concatenate(([0.0], coeffs)))
    return AudioBuffer(y, buf.sample_rate)


def fm_operator(f0: float, ratio: float, index: float, n: int, sample_rate: float) -> np.ndarray:
    """Two-operator FM: sin(2*pi*f0*t + index*sin(2*pi*ratio*f0*t))."""
    if not 0.5 <= ratio <= 8.0:
        raise RenderError("FM ratio must lie in [0.5, 8]")
    if not 0.0 <= index <= 10.0:
        raise RenderError("FM index must lie in [0, 10]")
    t = np.arange(n, dtype=float) / sample_rate
    return np.sin(2.0 * np.pi * f0 * t + index * np.sin(2.0 * np.pi * ratio * f0 * t))


def _filled_rows(rows: dict[str, np.ndarray], count: int) -> dict[str, np.ndarray]:
    """Parameter rows with render defaults for fields the tier lacks."""
    out = dict(rows)
    for name, default in RENDER_DEFAULTS.items():
        if name not in out:
            out[name] = np.full(count, default)
    return out


# Audio after the oscillator stage is processed in float32: the headroom of
# float64 buys nothing audible, and the FFT-heavy filter/reverb stages run
# about twice as fast. Envelope integration stays float64 (a float32 cumsum
# drifts over long notes).
AUDIO_DTYPE = np.float32


def _render_rows(rows, f0s, n, sample_rate, seed, tier, note_len) -> np.ndarray:
    """Core renderer: (B,) parameter rows x (K,) pitches -> (B, K, n)."""
    tier = get_tier(tier)
    B = rows["cutoff"].shape[0]
    f0s = np.asarray(f0s, dtype=float)
    K = f0s.shape[0]
    R = B * K
    p = _filled_rows(rows, B)

    def rep(a):  # (B,) -> (R,), candidate-major
        return np.repeat(a, K)

    f0_row = np.tile(f0s, B)
    mix = kernels.osc_mix(
        f0_row,
        rep(p["osc_mix_saw"]),
        rep(p["osc_mix_pulse"]),
        rep(p["osc_mix_sine"]),
        rep(p["osc_mix_noise"]),
        rep(p["detune"]),
        rep(p["unison_spread"]),
        rep(p["unison_voices"]).astype(np.int64),
        rep(p["pulse_width"]),
        rep(p["vibrato_depth"]),
        n,
        float(sample_rate),
        seed,
    )

    # Filter: the magnitude response is sampled on FILTER_FRAME bins and
    # turned into a linear-phase FIR (windowed frequency-sampling design).
    # Each FILTER_FRAME block of the note is linearly convolved with its
    # block-local kernel and overlap-added, so a static envelope gives a
    # truly time-invariant filter (no frame-rate intermodulation); the
    # cutoff follows the filter envelope's running mean at each block end.
    e_filt = _adsr_rows(
        p["filter_attack"], p["filter_decay"], p["filter_sustain"], p["filter_release"],
        note_len, n, sample_rate,
    )
    running_mean = np.cumsum(e_filt, axis=1) / np.arange(1, n + 1, dtype=float)
    frames = -(-n // FILTER_FRAME)
    ends = np.minimum(FILTER_FRAME * np.arange(1, frames + 1) - 1, n - 1)
    fc_eff = p["cutoff"][:, None] * (
        1.0 + p["filter_env_amount"][:, None] * (running_mean[:, ends] - 0.5)
    )
    fc_eff = np.maximum(fc_eff, 1.0)  # keep f/f_c finite
    kfreqs = np.fft.rfftfreq(FILTER_FRAME, 1.0 / sample_rate)
    hmag = filter_magnitude(
        kfreqs[None, None, :],
        fc_eff[:, :, None],
        p["slope"][:, None, None],
        p["resonance"][:, None, None],
    )
    if "eq1_freq" in tier.names:
        # the static EQ shares the filter kernels instead of its own pass
        g1 = eq_magnitude(kfreqs[None, :], [(p["eq1_freq"][:, None], p["eq1_gain"][:, None])])
        g2 = eq_magnitude(kfreqs[None, :], [(p["eq2_freq"][:, None], p["eq2_gain"][:, None])])
        hmag = hmag * (g1 * g2)[:, None, :]
    half = FILTER_FRAME // 2
    nfft = 2 * FILTER_FRAME
    taper = (
        0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(FILTER_FRAME) / FILTER_FRAME)
    ).astype(AUDIO_DTYPE)
    kernels_t = (
        np.roll(_irfft(hmag.astype(AUDIO_DTYPE), n=FILTER_FRAME, axis=2), half, axis=2)
        * taper
    )
    kernel_f = _rfft(kernels_t, n=nfft, axis=2)  # (B, frames, bins)
    blocks = np.zeros((R, frames * FILTER_FRAME), dtype=AUDIO_DTYPE)
    blocks[:, :n] = mix
    spec = _rfft(blocks.reshape(R, frames, FILTER_FRAME), n=nfft, axis=2)
    spec = (
        spec.reshape(B, K, frames, -1) * kernel_f[:, None, :, :]
    ).reshape(R, frames, -1)
    pieces = _irfft(spec, n=nfft, axis=2)
    acc = np.zeros((R, frames * FILTER_FRAME + nfft), dtype=AUDIO_DTYPE)
    for j in range(frames):  # overlap-add; sequential, batch-shape independent
        acc[:, FILTER_FRAME * j : FILTER_FRAME * j + nfft] += pieces[:, j]
    # compensate the kernel's linear-phase delay; contiguous so views below share data
    y = np.ascontiguousarray(acc[:, half : half + n])

    floor = kernels.rand_unit(seed, STREAM_FLOOR, 0, n).astype(AUDIO_DTYPE)
    nf = p["noise_floor"].astype(AUDIO_DTYPE)
    yv = y.reshape(B, K, n)
    yv += nf[:, None, None] * floor[None, None, :]

    amp = _adsr_rows(
        p["amp_attack"], p["amp_decay"], p["amp_sustain"], p["amp_release"],
        note_len, n, sample_rate,
    ).astype(AUDIO_DTYPE)
    yv *= amp[:, None, :]

    if "distortion_drive" in tier.names:
        y = np.tanh(rep(p["distortion_drive"]).astype(AUDIO_DTYPE)[:, None] * y)

    y = _reverb_rows(y, rep(p["reverb_size"]), rep(p["reverb_mix"]), seed, sample_rate)

    if "delay_feedback" in tier.names:
        y = _delay_rows(y, rep(p["delay_feedback"]), sample_rate)

    y = np.tanh(rep(p["output_gain"]).astype(AUDIO_DTYPE)[:, None] * y)
    return y.reshape(B, K, n)


def render(req: RenderRequest) -> AudioBuffer:
    """Render a single note; deterministic in (patch, f0, duration, sr, seed)."""
    _check_f0(req.f0, req.sample_rate)
    if not 0.0 < req.duration <= 10.0:
        raise RenderError(f"duration {req.duration} outside (0, 10] s")
    n = int(round(req.duration * req.sample_rate))
    note_len = req.duration if req.note_len is None else float(req.note_len)
    rows = patch_to_rows(req.patch)
    y = _render_rows(
        rows, [req.f0], n, req.sample_rate, req.seed, req.patch.tier, note_len
    )
    return AudioBuffer(y[0, 0], req.sample_rate)


def render_batch(
    population,
    pitches,
    duration: float,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
    seed: int = 0,
    tier=None,
    note_len: float | None = None,
) -> np.ndarray:
    """Render a (B, D) population at K pitches: returns (B, K, n) samples.

    Entry (b, k) is bit-identical to render() of the denormalized candidate
    b at pitch k with the same seed. The tier is inferred from D when not
    given; candidates of mixed tiers cannot be stacked and are rejected.
    """
    X = np.asarray(population, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise RenderError("population must be a non-empty (B, D) array")
    if tier is None:
        tier = _DIM_TO_TIER.get(X.shape[1])
        if tier is None:
            raise RenderError(
                f"no tier has dimension {X.shape[1]}; populations must share one tier"
            )
    tier = get_tier(tier)
    pitches = np.asarray(pitches, dtype=float)
    for f0 in pitches:
        _check_f0(f0, sample_rate)
    if not 0.0 < duration <= 10.0:
        raise RenderError(f"duration {duration} outside (0, 10] s")
    n = int(round(duration * sample_rate))
    rows = denormalize_rows(X, tier)
    return _render_rows(
        rows, pitches, n, sample_rate, seed,
        tier, duration if note_len is None else float(note_len),
    )


def render_patch(patch: Patch, f0: float, duration: float, sample_rate: int = DEFAULT_SAMPLE_RATE,
                 seed: int = 0, note_len: float | None = None) -> AudioBuffer:
    """Convenience wrapper building the request inline."""
    return render(RenderRequest(patch, f0, duration, sample_rate, seed, note_len))
