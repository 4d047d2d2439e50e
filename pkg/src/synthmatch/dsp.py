"""Feature extraction: transforms, mel/MFCC, spectral statistics, onsets, pitch.

Shared by the loss (mel spectrograms, centroid, MFCC), the spectral
initializer (rolloff, even/odd ratio, flatness, RMS) and the note
segmenter (spectral-flux onsets, YIN-style pitch).

Conventions: Hann windows, hop = fft_size/4, HTK mel scale, log floor 1e-7
before any log-magnitude or log-mel.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import fft as sfft

from synthmatch.synth import FFT_WORKERS, AudioBuffer

LOG_FLOOR = 1e-7
SILENCE_RMS = 1e-4


class AnalysisError(ValueError):
    pass


def hann(n: int) -> np.ndarray:
    """Periodic Hann window."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


@dataclass
class Spectrogram:
    magnitudes: np.ndarray  # (frames, bins)
    fft_size: int
    hop: int
    sample_rate: int

    @property
    def freqs(self) -> np.ndarray:
        return np.fft.rfftfreq(self.fft_size, 1.0 / self.sample_rate)


def frame_signal(x: np.ndarray, fft_size: int, hop: int) -> np.ndarray:
    """Consecutive frames (F, fft_size); shorter signals get one padded frame."""
    n = len(x)
    if n < fft_size:
        frame = np.zeros(fft_size)
        frame[:n] = x
        return frame[None, :]
    count = 1 + (n - fft_size) // hop
    idx = hop * np.arange(count)[:, None] + np.arange(fft_size)[None, :]
    return x[idx]


def stft_rows(rows: np.ndarray, fft_size: int, hop: int, window=None) -> np.ndarray:
    """Windowed (Hann by default) magnitude spectrogram per row: (R, F, bins)."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    R, n = rows.shape
    if n < fft_size:
        frames = np.zeros((R, 1, fft_size))
        frames[:, 0, :n] = rows
    else:
        count = 1 + (n - fft_size) // hop
        idx = hop * np.arange(count)[:, None] + np.arange(fft_size)[None, :]
        frames = rows[:, idx]
    w = hann(fft_size) if window is None else window
    frames = frames * w[None, None, :]
    return np.abs(sfft.rfft(frames, axis=2, workers=FFT_WORKERS))


def stft(buf: AudioBuffer, fft_size: int, hop: int | None = None) -> Spectrogram:
    """Magnitude STFT of a buffer; hop defaults to fft_size/4."""
    if fft_size & (fft_size - 1):
        raise AnalysisError("fft_size must be a power of two")
    hop = fft_size // 4 if hop is None else hop
    mags = stft_rows(np.asarray(buf.samples, dtype=float)[None, :], fft_size, hop)[0]
    return Spectrogram(mags, fft_size, hop, buf.sample_rate)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=float) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=float) / 2595.0) - 1.0)


@lru_cache(maxsize=32)
def mel_filterbank(sample_rate: int, fft_size: int, n_mels: int,
                   fmax: float | None = None):
    """HTK-mel triangular filterbank as banded (start, weights) pairs.

    Returned as a tuple of (start_bin, weight_array) per band plus the dense
    matrix; the banded form lets callers apply the bank with elementwise
    multiplies and last-axis sums (stable row-wise, unlike GEMM).
    """
    bins = fft_size // 2 + 1
    freqs = np.fft.rfftfreq(fft_size, 1.0 / sample_rate)
    top = sample_rate / 2.0 if fmax is None else float(fmax)
    pts = mel_to_hz(np.linspace(hz_to_mel(0.0), hz_to_mel(top), n_mels + 2))
    dense = np.zeros((n_mels, bins))
    for m in range(n_mels):
        lo, mid, hi = pts[m], pts[m + 1], pts[m + 2]
        up = (freqs - lo) / max(mid - lo, 1e-12)
        down = (hi - freqs) / max(hi - mid, 1e-12)
        dense[m] = np.clip(np.minimum(up, down), 0.0, None)
        if not np.any(dense[m] > 0.0):
            # band narrower than one bin: tap the nearest bin so no band is dead
            dense[m, int(np.argmin(np.abs(freqs - mid)))] = 1.0
    bands = []
    for m in range(n_mels):
        nz = np.flatnonzero(dense[m] > 0.0)
        if nz.size == 0:
            bands.append((0, np.zeros(1)))
        else:
            bands.append((int(nz[0]), dense[m, nz[0] : nz[-1] + 1].copy()))
    return tuple(bands), dense


def apply_filterbank(mags: np.ndarray, bands) -> np.ndarray:
    """Banded filterbank apply: (..., bins) -> (..., n_mels)."""
    out = np.empty(mags.shape[:-1] + (len(bands),))
    for m, (start, w) in enumerate(bands):
        out[..., m] = (mags[..., start : start + len(w)] * w).sum(axis=-1)
    return out


def a_weighting_gain(freqs) -> np.ndarray:
    """IEC 61672 A-weighting as linear gain (0 dB at 1 kHz)."""
    f2 = np.asarray(freqs, dtype=float) ** 2
    num = (12194.0**2) * f2**2
    den = (
        (f2 + 20.6**2)
        * np.sqrt((f2 + 107.7**2) * (f2 + 737.9**2))
        * (f2 + 12194.0**2)
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        ra = np.where(den > 0.0, num / np.maximum(den, 1e-300), 0.0)
    return ra * (10.0 ** (2.0 / 20.0))


def mel_spectrogram(spec: Spectrogram, n_mels: int = 128, a_weighting: bool = False) -> np.ndarray:
    """Mel-band magnitudes (frames, n_mels), optionally A-weighted per bin."""
    bands, _ = mel_filterbank(spec.sample_rate, spec.fft_size, n_mels)
    mags = spec.magnitudes
    if a_weighting:
        mags = mags * a_weighting_gain(spec.freqs)[None, :]
    return apply_filterbank(mags, bands)


def mfcc(buf: AudioBuffer, n_coeffs: int = 13, n_mels: int = 40,
         fft_size: int = 2048, hop: int = 512) -> np.ndarray:
    """MFCCs per frame: DCT-II (ortho) of log-mel energies, first n_coeffs."""
    spec = stft(buf, fft_size, hop)
    mel = mel_spectrogram(spec, n_mels=n_mels)
    logmel = np.log(np.maximum(mel, LOG_FLOOR))
    return sfft.dct(logmel, type=2, axis=-1, norm="ortho")[:, :n_coeffs]


def spectral_centroid(buf: AudioBuffer, fft_size: int = 2048, hop: int = 512) -> np.ndarray:
    """Per-frame centroid in Hz for non-silent frames (frame RMS > 1e-4)."""
    x = np.asarray(buf.samples, dtype=float)
    frames = frame_signal(x, fft_size, hop)
    rms_f = np.sqrt(np.mean(frames**2, axis=1))
    spec = stft(buf, fft_size, hop)
    num = (spec.magnitudes * spec.freqs[None, :]).sum(axis=1)
    den = spec.magnitudes.sum(axis=1)
    cent = np.where(den > 0.0, num / np.maximum(den, 1e-300), 0.0)
    return cent[rms_f > SILENCE_RMS]


def mean_spectral_centroid(buf: AudioBuffer) -> tuple[float, bool]:
    """Mean centroid over non-silent frames; (0.0, True) for silence."""
    cents = spectral_centroid(buf)
    if cents.size == 0:
        return 0.0, True
    return float(np.mean(cents)), False


def _mean_power_spectrum(buf: AudioBuffer, fft_size: int = 2048):
    spec = stft(buf, fft_size)
    power = np.mean(spec.magnitudes**2, axis=0)
    return power, spec.freqs


def spectral_rolloff(buf: AudioBuffer, fraction: float = 0.95) -> float:
    """Lowest frequency containing at least `fraction` of spectral energy."""
    power, freqs = _mean_power_spectrum(buf)
    total = power.sum()
    if total <= 0.0:
        return 0.0
    idx = int(np.searchsorted(np.cumsum(power), fraction * total))
    return float(freqs[min(idx, len(freqs) - 1)])


def spectral_flatness(buf: AudioBuffer) -> float:
    """Geometric over arithmetic mean of the power spectrum, in [0, 1]."""
    power, _ = _mean_power_spectrum(buf)
    power = np.maximum(power, LOG_FLOOR**2)
    return float(np.exp(np.mean(np.log(power))) / np.mean(power))


def rms(buf: AudioBuffer) -> float:
    return buf.rms()


def _harmonic_windows(f0: float, count: int, nyquist: float, tol: float = 0.03):
    """(k, lo_hz, hi_hz) for harmonics k*f0 below Nyquist."""
    out = []
    for k in range(1, count + 1):
        f = k * f0
        if f >= nyquist:
            break
        out.append((k, f * (1.0 - tol), f * (1.0 + tol)))
    return out


def even_odd_ratio(buf: AudioBuffer, f0: float) -> float:
    """Energy at even harmonics (2..12) over odd harmonics (1..11).

    The fundamental counts toward the odd set, so an ideal sawtooth (1/n
    amplitudes) scores about 0.31 and a square wave scores near zero.
    """
    if f0 <= 0.0:
        raise AnalysisError("even_odd_ratio requires a positive f0")
    x = np.asarray(buf.samples, dtype=float)
    mag = np.abs(sfft.rfft(x * hann(len(x)), workers=FFT_WORKERS))
    freqs = np.fft.rfftfreq(len(x), 1.0 / buf.sample_rate)
    even = odd = 0.0
    for k, lo, hi in _harmonic_windows(f0, 12, buf.sample_rate / 2.0):
        sel = (freqs >= lo) & (freqs <= hi)
        e = float(np.sum(mag[sel] ** 2))
        if k % 2 == 0:
            even += e
        else:
            odd += e
    return even / max(odd, 1e-30)


def harmonic_amplitudes(buf: AudioBuffer, f0: float, count: int = 8) -> np.ndarray:
    """Relative amplitudes of harmonics k*f0 (H1 normalized to 1).

    Peaks are measured from a 4x zero-padded Hann-windowed FFT with
    parabolic interpolation inside a +/-3% window per harmonic. Harmonics
    at or above Nyquist are dropped, so the result may be shorter than
    `count`.
    """
    if f0 <= 0.0:
        raise AnalysisError("harmonic_amplitudes requires a positive f0")
    x = np.asarray(buf.samples, dtype=float)
    n = len(x)
    nfft = 4 * (1 << (n - 1).bit_length())
    mag = np.abs(sfft.rfft(x * hann(n), n=nfft, workers=FFT_WORKERS))
    freqs = np.fft.rfftfreq(nfft, 1.0 / buf.sample_rate)
    amps = []
    for k, lo, hi in _harmonic_windows(f0, count, buf.sample_rate / 2.0):
        sel = np.flatnonzero((freqs >= lo) & (freqs <= hi))
        if sel.size == 0:
            break
        peak = sel[np.argmax(mag[sel])]
        a = mag[peak]
        if 0 < peak < len(mag) - 1:
            lm, mm, rm = np.log(np.maximum(mag[peak - 1 : peak + 2], 1e-300))
            denom = lm - 2.0 * mm + rm
            if denom < 0.0:
                delta = 0.5 * (lm - rm) / denom
                a = float(np.exp(mm - 0.25 * (lm - rm) * delta))
        amps.append(a)
    amps = np.asarray(amps)
    if amps.size and amps[0] > 0.0:
        amps = amps / amps[0]
    return amps


@dataclass
class FeatureSummary:
    """Spectral-initializer inputs for one target note."""

    rolloff_95: float
    flatness: float
    even_odd_ratio: float
    rms: float
    centroid_mean: float
    harmonic_amps: np.ndarray

    @classmethod
    def from_buffer(cls, buf: AudioBuffer, f0: float) -> "FeatureSummary":
        cent, _ = mean_spectral_centroid(buf)
        return cls(
            rolloff_95=spectral_rolloff(buf),
            flatness=spectral_flatness(buf),
            even_odd_ratio=even_odd_ratio(buf, f0),
            rms=buf.rms(),
            centroid_mean=cent,
            harmonic_amps=harmonic_amplitudes(buf, f0),
        )

    def to_dict(self) -> dict:
        return {
            "rolloff_95": self.rolloff_95,
            "flatness": self.flatness,
            "even_odd_ratio": self.even_odd_ratio,
            "rms": self.rms,
            "centroid_mean": self.centroid_mean,
            "harmonic_amps": [float(a) for a in self.harmonic_amps],
        }


# ---------------------------------------------------------------------------
# Onset detection: half-wave-rectified spectral flux, mean-normalized,
# peak-picked with a threshold over the local median and a 50 ms gap.
# ---------------------------------------------------------------------------

ONSET_FFT = 1024
ONSET_HOP = 256
ONSET_MELS = 128
ONSET_MIN_GAP_S = 0.05
_ONSET_MAX_WIN = 5     # frames (~29 ms) each side for the local-max test
_ONSET_MEAN_WIN = 17   # frames (~100 ms) each side for the local mean


def onset_novelty(buf: AudioBuffer) -> tuple[np.ndarray, int]:
    """Mean-normalized spectral-flux novelty curve and its hop size.

    Flux is the band-averaged half-wave-rectified frame difference of
    dB-scaled mel power. A band contributes only while it sits within 60 dB
    of the signal loudest band (30 dB): deep leakage bands jitter by whole dB
    from frame alignment and would otherwise fill quiet stretches with
    false flux. Differences are taken against a 3-band maximum of the
    previous frame, so tonal content that merely shifts bins is silent
    while real attacks (tens of dB out of silence) stand far above the
    pick threshold.
    """
    from scipy.ndimage import maximum_filter1d
    from scipy.signal.windows import blackmanharris

    # Blackman-Harris analysis window: its -92 dB sidelobes keep tonal
    # leakage out of quiet mel bands, so steady notes produce near-zero flux
    mags = stft_rows(
        np.asarray(buf.samples, dtype=float)[None, :], ONSET_FFT, ONSET_HOP,
        window=blackmanharris(ONSET_FFT, sym=False),
    )[0]
    mags[:, 0] = 0.0  # DC tracks envelope ramps, not note starts
    # bands stop at Nyquist/2: the naive oscillators beat against their
    # aliases near Nyquist, which reads as spurious flux on sustained notes
    bands, _ = mel_filterbank(
        buf.sample_rate, ONSET_FFT, ONSET_MELS, fmax=buf.sample_rate / 4.0
    )
    power = apply_filterbank(mags, bands) ** 2
    peak = power.max()
    if peak <= 0.0:
        return np.zeros(power.shape[0]), ONSET_HOP
    db = 10.0 * np.log10(np.maximum(power, peak * 1e-8))
    significant = db > db.max() - 40.0
    # reference: the max of the previous two frames across a 3-band
    # neighbourhood; a band only contributes once it jumps well past that.
    # Sustained notes shimmer by several dB (window-mainlobe interference
    # between neighbouring harmonics, slow beats between alias components
    # of the deliberately naive oscillators), while a real attack lifts its
    # bands by tens of dB, so only rises of at least 10 dB count.
    wide = maximum_filter1d(db, size=3, axis=1)
    floor_row = np.full((1, db.shape[1]), db.min())
    prev1 = np.vstack([floor_row, wide[:-1]])
    prev2 = np.vstack([floor_row, floor_row, wide[:-2]])
    prev = np.maximum(prev1, prev2)
    rise = db - prev
    flux = (np.where(rise >= 10.0, rise, 0.0) * significant).mean(axis=1)
    flux = np.convolve(flux, np.ones(3) / 3.0, mode="same")  # calm jitter
    mean = flux.mean()
    if mean > 0.0:
        flux = flux / mean
    return flux, ONSET_HOP


def detect_onsets(buf: AudioBuffer, delta: float = 0.015) -> np.ndarray:
    """Onset sample indices; silence yields an empty array.

    A frame is an onset when it is the maximum of its +/-29 ms
    neighbourhood, exceeds the +/-100 ms local mean by delta, and arrives
    at least 50 ms after the previous pick. The mean (not a robust median)
    is deliberate: an attack spike inflates the local mean for the next
    ~100 ms, which is what suppresses post-attack wobble at this small
    delta.
    """
    if buf.rms() <= SILENCE_RMS:
        return np.zeros(0, dtype=int)
    nov, hop = onset_novelty(buf)
    n = len(nov)
    gap = max(1, int(round(ONSET_MIN_GAP_S * buf.sample_rate / hop)))
    picks = []
    last = -gap - 1
    for i in range(n):
        lo = max(0, i - _ONSET_MAX_WIN)
        hi = min(n, i + _ONSET_MAX_WIN + 1)
        if nov[i] < nov[lo:hi].max():
            continue
        mlo = max(0, i - _ONSET_MEAN_WIN)
        mhi = min(n, i + _ONSET_MEAN_WIN + 1)
        if nov[i] < np.mean(nov[mlo:mhi]) + delta:
            continue
        if i - last < gap:
            continue
        picks.append(i)
        last = i
    # frames start at i*hop; energy lands mid-window, so report the center
    samples = np.asarray(picks, dtype=int) * hop + ONSET_FFT // 2
    return np.minimum(samples, max(len(buf.samples) - 1, 0))


# ---------------------------------------------------------------------------
# Pitch: YIN-style cumulative-mean-normalized difference with parabolic
# interpolation; confidence = 1 - minimum normalized difference.
# ---------------------------------------------------------------------------

PITCH_FMIN = 50.0
PITCH_FMAX = 2000.0
PITCH_THRESHOLD = 0.1
VOICED_CONFIDENCE = 0.5


@dataclass
class PitchResult:
    f0: float
    confidence: float
    voiced: bool


def detect_pitch(buf: AudioBuffer) -> PitchResult:
    """Estimate the fundamental of a (>= 50 ms) monophonic segment."""
    sr = buf.sample_rate
    x = np.asarray(buf.samples, dtype=float)
    if len(x) < int(0.05 * sr):
        raise AnalysisError("pitch detection needs at least 50 ms of audio")
    x = x - x.mean()
    tau_min = max(2, int(sr / PITCH_FMAX))
    tau_max = min(int(sr / PITCH_FMIN), len(x) // 2)
    w = min(4096, len(x) - tau_max)
    if w < tau_min:
        return PitchResult(0.0, 0.0, False)

    # difference function via FFT cross-correlation
    nfft = sfft.next_fast_len(len(x), real=True)
    spec = sfft.rfft(x, n=nfft, workers=FFT_WORKERS)
    # corr[tau] = sum_j x[j] x[j+tau] over j < w
    head = sfft.rfft(x[:w], n=nfft, workers=FFT_WORKERS)
    corr = sfft.irfft(np.conj(head) * spec, n=nfft, workers=FFT_WORKERS)[: tau_max + 1]
    sq = np.concatenate([[0.0], np.cumsum(x**2)])
    e0 = sq[w]
    etau = sq[np.arange(tau_max + 1) + w] - sq[np.arange(tau_max + 1)]
    diff = np.maximum(e0 + etau - 2.0 * corr, 0.0)

    cum = np.cumsum(diff[1:])
    cmndf = np.ones(tau_max + 1)
    taus = np.arange(1, tau_max + 1)
    cmndf[1:] = np.where(cum > 0.0, diff[1:] * taus / np.maximum(cum, 1e-300), 1.0)

    seg = cmndf[tau_min : tau_max + 1]
    below = np.flatnonzero(seg < PITCH_THRESHOLD)
    if below.size:
        t = below[0] + tau_min
        while t + 1 <= tau_max and cmndf[t + 1] < cmndf[t]:
            t += 1
    else:
        t = int(np.argmin(seg)) + tau_min

    conf = float(np.clip(1.0 - cmndf[t], 0.0, 1.0))
    if tau_min < t < tau_max:
        a, b, c = cmndf[t - 1], cmndf[t], cmndf[t + 1]
        denom = a - 2.0 * b + c
        shift = 0.5 * (a - c) / denom if denom > 0.0 else 0.0
        tau = t + float(np.clip(shift, -0.5, 0.5))
    else:
        tau = float(t)
    f0 = sr / tau
    return PitchResult(f0, conf, conf >= VOICED_CONFIDENCE)
