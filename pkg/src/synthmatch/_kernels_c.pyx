# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: language_level=3
"""Compiled oscillator kernels.

Same contract as _kernels_np: identical counter-based noise (pure integer
math, bit-identical across backends) and the same oscillator definitions.
Pitched voices advance sin/cos by rotation recurrence instead of calling
libm per sample, so transcendental rounding may differ from the NumPy
backend by a few ulp. Rows are independent scalar loops, parallelized with
OpenMP; results do not depend on batch shape or thread count.
"""

import numpy as np

cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport cos, floor, pow, sin, tanh
from libc.stdint cimport int64_t, uint64_t
from libc.stdlib cimport free, malloc

cnp.import_array()

cdef double TWO_PI = 6.283185307179586476925287
cdef double PI = 3.14159265358979323846
cdef double INV_2_53 = 1.0 / 9007199254740992.0  # 2**-53


cdef inline uint64_t _splitmix(uint64_t x) nogil:
    cdef uint64_t z = x
    z = (z ^ (z >> 30)) * (<uint64_t>0xBF58476D1CE4E5B9)
    z = (z ^ (z >> 27)) * (<uint64_t>0x94D049BB133111EB)
    return z ^ (z >> 31)


cdef inline double _unit(uint64_t seed, uint64_t stream, uint64_t idx) nogil:
    cdef uint64_t ctr = (stream << 40) + idx
    cdef uint64_t z = _splitmix(seed + (<uint64_t>0x9E3779B97F4A7C15) * (ctr + 1))
    return 2.0 * ((z >> 11) * INV_2_53) - 1.0


def rand_unit(seed, stream, start, count):
    """Counter-based uniform noise in [-1, 1); matches the NumPy backend."""
    cdef Py_ssize_t n = int(count)
    if n <= 0:
        return np.zeros(0)
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef uint64_t s = <uint64_t>(int(seed) & 0xFFFFFFFFFFFFFFFF)
    cdef uint64_t st = <uint64_t>int(stream)
    cdef uint64_t base = <uint64_t>int(start)
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            o[i] = _unit(s, st, base + <uint64_t>i)
    return out


cdef void _osc_row(double* out, const double* noise, const double* lfo,
                   double f0, double ws, double wp, double wi, double wn,
                   double det, double spr, int64_t V, double pw, double vd,
                   Py_ssize_t N, double sr, bint has_noise) nogil:
    cdef double* saw
    cdef double* pul
    cdef double* sne
    cdef Py_ssize_t i, v
    cdef double thr, offset, ratio, step, phi, sphi, cphi, sd_, cd_, tmp, invv
    cdef bint need_saw = ws != 0.0
    cdef bint need_pulse = wp != 0.0
    cdef bint need_sine = wi != 0.0

    if V < 1:
        V = 1
    if need_saw or need_pulse or need_sine:
        saw = <double*>malloc(3 * N * sizeof(double))
        if saw == NULL:
            return
        pul = saw + N
        sne = pul + N
        for i in range(3 * N):
            saw[i] = 0.0
        thr = sin(TWO_PI * pw)
        for v in range(V):
            offset = -1.0 + 2.0 * v / (V - 1.0) if V > 1 else 0.0
            ratio = pow(2.0, (det + spr * offset) / 12.0)
            step = TWO_PI * f0 * ratio / sr
            phi = 0.0
            if vd > 0.0:
                for i in range(N):
                    if need_saw:
                        saw[i] += (phi - TWO_PI * floor(phi / TWO_PI)) / PI - 1.0
                    if need_pulse or need_sine:
                        tmp = sin(phi)
                        if need_pulse:
                            pul[i] += tanh(20.0 * (tmp - thr))
                        if need_sine:
                            sne[i] += tmp
                    phi += step * pow(2.0, vd * lfo[i] / 12.0)
            else:
                sphi = 0.0
                cphi = 1.0
                sd_ = sin(step)
                cd_ = cos(step)
                for i in range(N):
                    if need_saw:
                        saw[i] += phi / PI - 1.0
                    if need_pulse:
                        pul[i] += tanh(20.0 * (sphi - thr))
                    if need_sine:
                        sne[i] += sphi
                    tmp = sphi * cd_ + cphi * sd_
                    cphi = cphi * cd_ - sphi * sd_
                    sphi = tmp
                    phi += step
                    if phi >= TWO_PI:
                        phi -= TWO_PI
        invv = 1.0 / V
        for i in range(N):
            out[i] = ws * (saw[i] * invv) + wp * (pul[i] * invv) + wi * (sne[i] * invv)
        free(saw)
    else:
        for i in range(N):
            out[i] = 0.0
    if has_noise and wn != 0.0:
        for i in range(N):
            out[i] += wn * noise[i]


def osc_mix(f0, w_saw, w_pulse, w_sine, w_noise, detune, spread, voices,
            pulse_width, vib_depth, n, sample_rate, seed):
    """Mixed oscillator block for R rows: (R, n) float64."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] f0a = np.ascontiguousarray(f0, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] wsa = np.ascontiguousarray(w_saw, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] wpa = np.ascontiguousarray(w_pulse, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] wia = np.ascontiguousarray(w_sine, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] wna = np.ascontiguousarray(w_noise, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] det = np.ascontiguousarray(detune, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] spr = np.ascontiguousarray(spread, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] vcs = np.ascontiguousarray(voices, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] pwa = np.ascontiguousarray(pulse_width, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] vib = np.ascontiguousarray(vib_depth, dtype=np.float64)

    cdef Py_ssize_t R = f0a.shape[0]
    cdef Py_ssize_t N = int(n)
    cdef double sr = float(sample_rate)
    out = np.zeros((R, N), dtype=np.float64)
    cdef double[:, ::1] ov = out
    if R == 0 or N == 0:
        return out

    cdef bint any_noise = bool(np.any(wna != 0.0))
    cdef bint any_vib = bool(np.any(vib > 0.0))

    noise_arr = rand_unit(seed, 0, 0, N) if any_noise else np.zeros(1)
    cdef double[::1] nz = noise_arr
    lfo_arr = np.sin(TWO_PI * 5.0 * np.arange(N) / sr) if any_vib else np.zeros(1)
    cdef double[::1] lfo = lfo_arr

    cdef double[::1] f0v = f0a
    cdef double[::1] wsv = wsa
    cdef double[::1] wpv = wpa
    cdef double[::1] wiv = wia
    cdef double[::1] wnv = wna
    cdef double[::1] dxv = det
    cdef double[::1] spv = spr
    cdef int64_t[::1] vcv = vcs
    cdef double[::1] pwv = pwa
    cdef double[::1] vbv = vib

    cdef Py_ssize_t r
    with nogil:
        for r in prange(R, schedule="static"):
            _osc_row(&ov[r, 0], &nz[0], &lfo[0],
                     f0v[r], wsv[r], wpv[r], wiv[r], wnv[r],
                     dxv[r], spv[r], vcv[r], pwv[r], vbv[r],
                     N, sr, any_noise)
    return out
