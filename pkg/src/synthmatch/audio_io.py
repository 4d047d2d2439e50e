"""WAV input/output and rate conversion.

Readers normalize to mono float64 in [-1, 1]; stereo is downmixed by
averaging channels, and foreign rates are resampled with a windowed-sinc
polyphase filter. Writers emit mono little-endian RIFF as 16-bit PCM or
32-bit float.
"""

from __future__ import annotations

from math import gcd

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from synthmatch.synth import DEFAULT_SAMPLE_RATE, AudioBuffer


class AudioIOError(ValueError):
    pass


def to_mono(data: np.ndarray) -> np.ndarray:
    data = np.asarray(data)
    if data.ndim == 2:
        return data.mean(axis=1)
    return data


def _normalize_dtype(data: np.ndarray) -> np.ndarray:
    if data.dtype == np.int16:
        return data / 32768.0
    if data.dtype == np.int32:
        return data / 2147483648.0
    if data.dtype == np.uint8:
        return (data.astype(float) - 128.0) / 128.0
    if data.dtype in (np.float32, np.float64):
        return data.astype(float)
    raise AudioIOError(f"unsupported WAV sample format {data.dtype}")


def read_wav(path) -> AudioBuffer:
    try:
        rate, data = wavfile.read(path)
    except Exception as exc:
        raise AudioIOError(f"cannot read WAV: {exc}") from exc
    samples = to_mono(_normalize_dtype(data))
    return AudioBuffer(np.asarray(samples, dtype=float), int(rate))


def write_wav(path, buf: AudioBuffer, bits: int | str = 16):
    samples = np.clip(np.asarray(buf.samples, dtype=float), -1.0, 1.0)
    if bits == 16:
        data = np.round(samples * 32767.0).astype(np.int16)
    elif bits in (32, "float32", "float"):
        data = samples.astype(np.float32)
    else:
        raise AudioIOError("bits must be 16 or 'float32'")
    wavfile.write(path, buf.sample_rate, data)


def resample(buf: AudioBuffer, target_rate: int) -> AudioBuffer:
    """Windowed-sinc polyphase resampling to target_rate."""
    if buf.sample_rate == target_rate:
        return buf
    g = gcd(int(buf.sample_rate), int(target_rate))
    up, down = target_rate // g, buf.sample_rate // g
    out = resample_poly(buf.samples, up, down)
    return AudioBuffer(np.asarray(out, dtype=float), int(target_rate))


def load_normalized(path, target_rate: int = DEFAULT_SAMPLE_RATE) -> AudioBuffer:
    """Read, downmix, and resample to the engine rate."""
    return resample(read_wav(path), target_rate)
