"""Composite perceptual loss for audio matching.

    composite = mel + 0.1 * centroid + 0.05 * mfcc

mel: spectral convergence plus log-magnitude L1 on A-weighted mel
spectrograms at FFT sizes 1024/2048/8192 (hop = fft/4), averaged over the
three resolutions so the scale stays comparable if resolutions change.
centroid: |mean centroid difference| normalized by Nyquist. mfcc: MSE over
time-averaged 13-coefficient vectors.

The target is always the first argument: it anchors the spectral-convergence
normalization, so the loss is not symmetric. TargetFeatures caches the
target-side features for the many-candidates-one-target case; batched
evaluation reuses exactly the ops of the single path (elementwise, FFT, and
per-row reductions), so a batch entry is bit-identical to a lone evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from synthmatch import dsp
from synthmatch.synth import AudioBuffer

RESOLUTIONS = (1024, 2048, 8192)
MEL_BANDS = 128
MFCC_BANDS = 40
N_MFCC = 13
MFCC_FFT = 2048
MFCC_HOP = 512
CENTROID_FFT = 2048
CENTROID_HOP = 512
WEIGHTS = (1.0, 0.1, 0.05)  # mel, centroid, mfcc


class LossError(ValueError):
    pass


@dataclass(frozen=True)
class LossBreakdown:
    mel: float
    centroid: float
    mfcc: float
    composite: float
    weights: tuple[float, float, float] = WEIGHTS
    flags: tuple[str, ...] = ()


# Spectral features run in float32: twice the FFT throughput at precision
# far beyond what the loss needs. Values are reported back as float64.
DTYPE = np.float32


def _frame_rows(Y: np.ndarray, fft_size: int, hop: int) -> np.ndarray:
    """Consecutive frames per row: (P, F, fft_size), loss dtype."""
    Y = np.ascontiguousarray(Y, dtype=DTYPE)
    n = Y.shape[1]
    if n < fft_size:
        frames = np.zeros((Y.shape[0], 1, fft_size), dtype=DTYPE)
        frames[:, 0, :n] = Y
        return frames
    count = 1 + (n - fft_size) // hop
    idx = hop * np.arange(count)[:, None] + np.arange(fft_size)[None, :]
    return Y[:, idx]


@lru_cache(maxsize=16)
def _hann32(n: int) -> np.ndarray:
    return dsp.hann(n).astype(DTYPE)


def _mags_rows(Y: np.ndarray, fft_size: int, hop: int) -> np.ndarray:
    """Hann-windowed magnitude spectrogram per row, loss dtype."""
    from scipy import fft as sfft

    frames = _frame_rows(Y, fft_size, hop) * _hann32(fft_size)[None, None, :]
    return np.abs(sfft.rfft(frames, axis=2, workers=dsp.FFT_WORKERS))


def _shared_2048(Y: np.ndarray):
    """The 2048/512 frames, their RMS, and magnitudes, computed once.

    This resolution feeds the mel loss, the centroid, and the MFCCs.
    """
    from scipy import fft as sfft

    frames = _frame_rows(Y, CENTROID_FFT, CENTROID_HOP)
    rms_f = np.sqrt(np.mean(frames**2, axis=2))
    mags = np.abs(
        sfft.rfft(frames * _hann32(CENTROID_FFT)[None, None, :], axis=2,
                  workers=dsp.FFT_WORKERS)
    )
    return rms_f, mags


@lru_cache(maxsize=32)
def _bands32(sample_rate: int, fft_size: int, n_mels: int):
    bands, _ = dsp.mel_filterbank(sample_rate, fft_size, n_mels)
    return tuple((start, w.astype(DTYPE)) for start, w in bands)


@lru_cache(maxsize=16)
def _a_weighting32(sample_rate: int, fft_size: int) -> np.ndarray:
    freqs = np.fft.rfftfreq(fft_size, 1.0 / sample_rate)
    return dsp.a_weighting_gain(freqs).astype(DTYPE)


def _apply_bands(mags: np.ndarray, bands) -> np.ndarray:
    out = np.empty(mags.shape[:-1] + (len(bands),), dtype=DTYPE)
    for m, (start, w) in enumerate(bands):
        out[..., m] = (mags[..., start : start + len(w)] * w).sum(axis=-1)
    return out


def _centroid_from_mags(mags: np.ndarray, rms_f: np.ndarray, sample_rate: int):
    """Mean spectral centroid per row over non-silent frames: (P,), (P,) flag."""
    freqs = np.fft.rfftfreq(CENTROID_FFT, 1.0 / sample_rate).astype(DTYPE)
    num = (mags * freqs[None, None, :]).sum(axis=2)
    den = mags.sum(axis=2)
    cent = np.where(den > 0.0, num / np.maximum(den, DTYPE(1e-30)), DTYPE(0.0))
    voiced = rms_f > dsp.SILENCE_RMS
    count = voiced.sum(axis=1)
    mean = np.where(count > 0, (cent * voiced).sum(axis=1) / np.maximum(count, 1), 0.0)
    return mean, count == 0


def _centroid_rows(Y: np.ndarray, sample_rate: int):
    rms_f, mags = _shared_2048(Y)
    return _centroid_from_mags(mags, rms_f, sample_rate)


def _mfcc_from_mags(mags: np.ndarray, sample_rate: int) -> np.ndarray:
    """Time-averaged MFCC vector per row: (P, N_MFCC)."""
    from scipy import fft as sfft

    mel = _apply_bands(mags, _bands32(sample_rate, MFCC_FFT, MFCC_BANDS))
    logmel = np.log(np.maximum(mel, DTYPE(dsp.LOG_FLOOR)))
    co = sfft.dct(logmel, type=2, axis=-1, norm="ortho")[..., :N_MFCC]
    return co.mean(axis=1)


def _mfcc_mean_rows(Y: np.ndarray, sample_rate: int) -> np.ndarray:
    _, mags = _shared_2048(Y)
    return _mfcc_from_mags(mags, sample_rate)


class TargetFeatures:
    """Cached target-side features for repeated candidate evaluation."""

    def __init__(self, target: AudioBuffer):
        self.sample_rate = target.sample_rate
        self.samples = np.asarray(target.samples, dtype=float)
        self.n = len(self.samples)
        self.silent = target.rms() <= dsp.SILENCE_RMS
        row = self.samples[None, :]
        rms_f, mags2048 = _shared_2048(row)
        self._mel = {}
        for res in RESOLUTIONS:
            aw = _a_weighting32(self.sample_rate, res)
            bands = _bands32(self.sample_rate, res, MEL_BANDS)
            mags = mags2048 if res == CENTROID_FFT else _mags_rows(row, res, res // 4)
            mel_t = _apply_bands(mags * aw[None, None, :], bands)[0]
            self._mel[res] = (
                mel_t,
                float(np.sqrt((mel_t.astype(np.float64) ** 2).sum())),
                np.log(np.maximum(mel_t, DTYPE(dsp.LOG_FLOOR))),
                aw,
                bands,
            )
        cent, cent_silent = _centroid_from_mags(mags2048, rms_f, self.sample_rate)
        self.centroid = float(cent[0])
        self.centroid_silent = bool(cent_silent[0])
        self.mfcc_mean = _mfcc_from_mags(mags2048, self.sample_rate)[0]

    def _mel_from_mags(self, mags: np.ndarray, res: int) -> np.ndarray:
        """Spectral convergence + log L1 at one resolution."""
        mel_t, norm_t, logmel_t, aw, bands = self._mel[res]
        mel_y = _apply_bands(mags * aw[None, None, :], bands)
        diff = (mel_y - mel_t[None]).astype(np.float64)
        sc = np.sqrt((diff**2).sum(axis=(1, 2))) / max(norm_t, dsp.LOG_FLOOR)
        if self.silent:
            cand_silent = np.sqrt((mel_y.astype(np.float64) ** 2).sum(axis=(1, 2)))
            sc = np.where(cand_silent <= dsp.LOG_FLOOR, 0.0, sc)
        l1 = (
            np.abs(np.log(np.maximum(mel_y, DTYPE(dsp.LOG_FLOOR))) - logmel_t[None])
            .astype(np.float64)
            .mean(axis=(1, 2))
        )
        return sc + l1

    def mel_rows(self, Y: np.ndarray) -> np.ndarray:
        """Multi-resolution mel loss per row (spectral convergence + log L1)."""
        Y = np.atleast_2d(Y)
        total = np.zeros(Y.shape[0])
        for res in RESOLUTIONS:
            mags = _mags_rows(Y, res, res // 4)
            total += self._mel_from_mags(mags, res)
        return total / float(len(RESOLUTIONS))

    def centroid_rows(self, Y: np.ndarray):
        cent, silent = _centroid_rows(np.atleast_2d(Y), self.sample_rate)
        return (
            np.abs(self.centroid - cent.astype(np.float64)) / (self.sample_rate / 2.0),
            silent,
        )

    def mfcc_rows(self, Y: np.ndarray) -> np.ndarray:
        co = _mfcc_mean_rows(np.atleast_2d(Y), self.sample_rate)
        return ((co - self.mfcc_mean[None]).astype(np.float64) ** 2).mean(axis=1)

    def breakdown_rows(self, Y: np.ndarray) -> dict[str, np.ndarray]:
        """All loss components for candidate rows (P, n): arrays of shape (P,)."""
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if Y.shape[1] != self.n:
            if Y.shape[1] < self.n:
                pad = np.zeros((Y.shape[0], self.n))
                pad[:, : Y.shape[1]] = Y
                Y = pad
            else:
                padded = np.zeros(Y.shape[1])
                padded[: self.n] = self.samples
                return TargetFeatures(
                    AudioBuffer(padded, self.sample_rate)
                ).breakdown_rows(Y)
        rms_f, mags2048 = _shared_2048(Y)
        mel = np.zeros(Y.shape[0])
        for res in RESOLUTIONS:
            mags = mags2048 if res == CENTROID_FFT else _mags_rows(Y, res, res // 4)
            mel += self._mel_from_mags(mags, res)
        mel /= float(len(RESOLUTIONS))
        cent_mean, cand_silent = _centroid_from_mags(mags2048, rms_f, self.sample_rate)
        cent = np.abs(self.centroid - cent_mean.astype(np.float64)) / (
            self.sample_rate / 2.0
        )
        co = _mfcc_from_mags(mags2048, self.sample_rate)
        mf = ((co - self.mfcc_mean[None]).astype(np.float64) ** 2).mean(axis=1)
        composite = mel + WEIGHTS[1] * cent + WEIGHTS[2] * mf
        return {
            "mel": mel,
            "centroid": cent,
            "mfcc": mf,
            "composite": composite,
            "candidate_silent": cand_silent,
        }

    def composite_rows(self, Y: np.ndarray) -> np.ndarray:
        return self.breakdown_rows(Y)["composite"]


def _as_features(target) -> TargetFeatures:
    return target if isinstance(target, TargetFeatures) else TargetFeatures(target)


def _check_rates(x: AudioBuffer, y: AudioBuffer):
    if x.sample_rate != y.sample_rate:
        raise LossError("sample rates differ")


def mel_multires_loss(x: AudioBuffer, y: AudioBuffer) -> float:
    """Multi-resolution A-weighted mel loss; x is the target."""
    _check_rates(x, y)
    return float(composite_loss(x, y).mel)


def centroid_loss(x: AudioBuffer, y: AudioBuffer) -> float:
    _check_rates(x, y)
    return float(composite_loss(x, y).centroid)


def mfcc_loss(x: AudioBuffer, y: AudioBuffer) -> float:
    _check_rates(x, y)
    return float(composite_loss(x, y).mfcc)


def composite_loss(x: AudioBuffer, y: AudioBuffer) -> LossBreakdown:
    """Full breakdown for a (target, candidate) pair."""
    _check_rates(x, y)
    tf = _as_features(x)
    parts = tf.breakdown_rows(np.asarray(y.samples, dtype=float)[None, :])
    flags = []
    if tf.silent:
        flags.append("silent_target")
    if bool(parts["candidate_silent"][0]):
        flags.append("silent_candidate")
    return LossBreakdown(
        mel=float(parts["mel"][0]),
        centroid=float(parts["centroid"][0]),
        mfcc=float(parts["mfcc"][0]),
        composite=float(parts["composite"][0]),
        flags=tuple(flags),
    )


def composite_loss_batch(renders, targets) -> np.ndarray:
    """Mean composite loss per candidate across K targets.

    renders: (B, K, n) array (or list of K arrays shaped (B, n)); targets:
    K AudioBuffers or TargetFeatures. Entry b equals the arithmetic mean of
    the K per-pitch composites, bit-identical to evaluating candidates one
    at a time.
    """
    if isinstance(renders, np.ndarray):
        if renders.ndim != 3:
            raise LossError("renders must be (B, K, n)")
        per_k = [renders[:, k, :] for k in range(renders.shape[1])]
    else:
        per_k = [np.atleast_2d(r) for r in renders]
    if len(per_k) != len(targets):
        raise LossError(f"{len(per_k)} render columns vs {len(targets)} targets")
    feats = [_as_features(t) for t in targets]
    total = np.zeros(per_k[0].shape[0])
    for tf, Y in zip(feats, per_k):
        total += tf.composite_rows(Y)
    return total / float(len(feats))
