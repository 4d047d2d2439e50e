"""Pure-NumPy oscillator kernels (fallback backend).

The compiled extension (_kernels_c) implements the same two entry points
with identical integer noise math; only transcendental rounding may differ
between backends. Within a backend, every operation here is elementwise or
a per-row reduction, so a row of a batched call is bit-identical to the
same row rendered alone.
"""

from __future__ import annotations

import numpy as np

TWO_PI = 2.0 * np.pi

# splitmix64 constants
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U64 = np.uint64


def rand_unit(seed: int, stream: int, start: int, count: int) -> np.ndarray:
    """Counter-based uniform noise in [-1, 1).

    Sample i of a stream depends only on (seed, stream, start + i), so any
    slice of a stream can be regenerated independently -- this is what makes
    batched and one-at-a-time rendering agree exactly.
    """
    if count <= 0:
        return np.zeros(0)
    idx = np.arange(start, start + count, dtype=np.uint64)
    ctr = (_U64(stream) << _U64(40)) + idx
    z = _U64(seed & 0xFFFFFFFFFFFFFFFF) + _GOLDEN * (ctr + _U64(1))
    z = (z ^ (z >> _U64(30))) * _MIX1
    z = (z ^ (z >> _U64(27))) * _MIX2
    z = z ^ (z >> _U64(31))
    u = (z >> _U64(11)).astype(np.float64) * (2.0 ** -53)
    return 2.0 * u - 1.0


def osc_mix(
    f0,
    w_saw,
    w_pulse,
    w_sine,
    w_noise,
    detune,
    spread,
    voices,
    pulse_width,
    vib_depth,
    n: int,
    sample_rate: float,
    seed: int,
) -> np.ndarray:
    """Mixed oscillator block for R rows: (R, n) float64.

    Per row: unison-averaged saw/pulse/sine voices (ratios 2^((d + s*o)/12)
    with symmetric offsets o), plus a shared white-noise stream. Pulse is
    tanh(20*(sin(phase) - sin(2*pi*w))); saw is the plain phase ramp. A
    nonzero vibrato depth modulates instantaneous frequency sinusoidally at
    5 Hz by +/- depth semitones.
    """
    f0 = np.asarray(f0, dtype=float)
    R = f0.shape[0]
    w_saw = np.asarray(w_saw, dtype=float)
    w_pulse = np.asarray(w_pulse, dtype=float)
    w_sine = np.asarray(w_sine, dtype=float)
    w_noise = np.asarray(w_noise, dtype=float)
    detune = np.asarray(detune, dtype=float)
    spread = np.asarray(spread, dtype=float)
    voices = np.asarray(voices, dtype=np.int64)
    pulse_width = np.asarray(pulse_width, dtype=float)
    vib_depth = np.asarray(vib_depth, dtype=float)

    # Integrated time grid in samples; plain arange unless vibrato bends it.
    if np.any(vib_depth > 0.0):
        lfo = np.sin(TWO_PI * 5.0 * np.arange(n) / sample_rate)
        rate = 2.0 ** (vib_depth[:, None] * lfo[None, :] / 12.0)
        tgrid = np.empty((R, n))
        tgrid[:, 0] = 0.0
        np.cumsum(rate[:, :-1], axis=1, out=tgrid[:, 1:])
    else:
        tgrid = np.broadcast_to(np.arange(n, dtype=float), (R, n))

    need_saw = bool(np.any(w_saw != 0.0))
    need_pulse = bool(np.any(w_pulse != 0.0))
    need_sine = bool(np.any(w_sine != 0.0))
    need_noise = bool(np.any(w_noise != 0.0))

    sum_saw = np.zeros((R, n)) if need_saw else None
    sum_pulse = np.zeros((R, n)) if need_pulse else None
    sum_sine = np.zeros((R, n)) if need_sine else None
    thr = np.sin(TWO_PI * pulse_width)

    vmax = int(voices.max()) if R else 0
    for v in range(vmax):
        act = np.flatnonzero(voices > v)
        if act.size == 0:
            continue
        nv = voices[act].astype(float)
        offset = np.where(nv > 1.0, -1.0 + 2.0 * v / np.maximum(nv - 1.0, 1.0), 0.0)
        ratio = 2.0 ** ((detune[act] + spread[act] * offset) / 12.0)
        scale = TWO_PI * f0[act] * ratio / sample_rate
        phase = scale[:, None] * tgrid[act]
        if need_saw or need_pulse or need_sine:
            if need_saw:
                pm = phase - TWO_PI * np.floor(phase / TWO_PI)
                sum_saw[act] += pm / np.pi - 1.0
            if need_pulse or need_sine:
                s = np.sin(phase)
                if need_pulse:
                    sum_pulse[act] += np.tanh(20.0 * (s - thr[act][:, None]))
                if need_sine:
                    sum_sine[act] += s

    out = np.zeros((R, n))
    nv = voices.astype(float)[:, None]
    if need_saw:
        out += w_saw[:, None] * (sum_saw / nv)
    if need_pulse:
        out += w_pulse[:, None] * (sum_pulse / nv)
    if need_sine:
        out += w_sine[:, None] * (sum_sine / nv)
    if need_noise:
        noise = rand_unit(seed, 0, 0, n)
        out += w_noise[:, None] * noise[None, :]
    return out
