"""Hot sample-by-sample loops.

Every kernel has two implementations with identical semantics: a numba
``@njit`` version and a numpy/scipy version. The active backend is picked
at import time from ``EMSHIELD_BACKEND`` (``numba`` or ``numpy``) and falls
back to numpy when numba cannot be imported. ``set_backend`` switches at
runtime (used by the benchmark and the backend-parity tests).
"""

from __future__ import annotations

import os

import numpy as np
from scipy import signal as _sig

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    NUMBA_AVAILABLE = False

_EMPTY_SOS = np.zeros((0, 6))


# ---------------------------------------------------------------------------
# numpy / scipy reference path
# ---------------------------------------------------------------------------

def _sosfilt_numpy(sos, x):
    if sos.shape[0] == 0:
        return np.array(x, dtype=np.float64, copy=True)
    return _sig.sosfilt(sos, x)


def _interp_noise_numpy(noise, ratio, n):
    if noise.size == 0:
        return np.zeros(n)
    pos = np.arange(n) / ratio
    return np.interp(pos, np.arange(noise.size), noise)


def _rectifier_amp_numpy(x, sos_par, sos_hp, sos_lp, gain, a2, noise, ratio, rails):
    u = _sosfilt_numpy(sos_par, x)
    h = _sosfilt_numpy(sos_hp, u)
    y = _sosfilt_numpy(sos_lp, gain * u + a2 * (h * h))
    y += _interp_noise_numpy(noise, ratio, x.size)
    if np.isfinite(rails):
        np.clip(y, -rails, rails, out=y)
    return y


def _tones_numpy(cyc, amp, phase, n):
    idx = np.arange(n, dtype=np.float64)
    out = np.zeros(n)
    for c, a, ph in zip(cyc, amp, phase):
        out += a * np.sin((2 * np.pi * c) * idx + ph)
    return out


def _schmitt_numpy(x, lo, hi, start_high):
    # +1 above hi, 0 below lo, -1 inside the band; then forward-fill the band
    state = np.full(x.size, -1, dtype=np.int8)
    state[x > hi] = 1
    state[x < lo] = 0
    idx = np.where(state >= 0, np.arange(x.size), -1)
    np.maximum.accumulate(idx, out=idx)
    out = np.where(idx >= 0, state[np.maximum(idx, 0)], 1 if start_high else 0)
    return out.astype(np.bool_)


def _runs_numpy(mask, debounce):
    m = np.concatenate(([False], np.asarray(mask, dtype=np.bool_), [False]))
    d = np.diff(m.astype(np.int8))
    starts = np.flatnonzero(d == 1)
    stops = np.flatnonzero(d == -1)
    keep = (stops - starts) >= debounce
    return starts[keep].astype(np.int64), stops[keep].astype(np.int64)


# ---------------------------------------------------------------------------
# numba path
# ---------------------------------------------------------------------------

if NUMBA_AVAILABLE:

    @njit(cache=True, nogil=True, inline="always", fastmath={"contract"})
    def _sos_step(sos, z, v):
        for s in range(sos.shape[0]):
            y = sos[s, 0] * v + z[s, 0]
            z[s, 0] = sos[s, 1] * v - sos[s, 4] * y + z[s, 1]
            z[s, 1] = sos[s, 2] * v - sos[s, 5] * y
            v = y
        return v

    @njit(cache=True, nogil=True)
    def _sosfilt_numba(sos, x):
        z = np.zeros((sos.shape[0], 2))
        y = np.empty(x.size)
        for i in range(x.size):
            y[i] = _sos_step(sos, z, x[i])
        return y

    @njit(cache=True, nogil=True, fastmath={"contract"})
    def _rectifier_amp_numba(x, sos_par, sos_hp, sos_lp, gain, a2, noise, ratio, rails):
        n = x.size
        zp = np.zeros((sos_par.shape[0], 2))
        zh = np.zeros((sos_hp.shape[0], 2))
        zl = np.zeros((sos_lp.shape[0], 2))
        y = np.empty(n)
        nn = noise.size
        clamp = np.isfinite(rails)
        for i in range(n):
            u = _sos_step(sos_par, zp, x[i])
            h = _sos_step(sos_hp, zh, u)
            v = _sos_step(sos_lp, zl, gain * u + a2 * (h * h))
            if nn > 0:
                pos = i / ratio
                j = int(pos)
                if j >= nn - 1:
                    v += noise[nn - 1]
                else:
                    f = pos - j
                    v += noise[j] * (1.0 - f) + noise[j + 1] * f
            if clamp:
                if v > rails:
                    v = rails
                elif v < -rails:
                    v = -rails
            y[i] = v
        return y

    @njit(cache=True, nogil=True)
    def _tones_numba(cyc, amp, phase, n):
        # phasor recurrence, re-seeded exactly at every block start
        out = np.zeros(n)
        block = 1024
        for k in range(cyc.size):
            w = 2 * np.pi * cyc[k]
            cr, ci = np.cos(w), np.sin(w)
            a = amp[k]
            for b0 in range(0, n, block):
                th = w * b0 + phase[k]
                zr, zi = np.cos(th), np.sin(th)
                for i in range(b0, min(b0 + block, n)):
                    out[i] += a * zi
                    zr, zi = zr * cr - zi * ci, zr * ci + zi * cr
        return out

    @njit(cache=True, nogil=True)
    def _schmitt_numba(x, lo, hi, start_high):
        out = np.empty(x.size, dtype=np.bool_)
        state = start_high
        for i in range(x.size):
            v = x[i]
            if v > hi:
                state = True
            elif v < lo:
                state = False
            out[i] = state
        return out

    @njit(cache=True, nogil=True)
    def _runs_numba(mask, debounce):
        n = mask.size
        starts = np.empty(n // 2 + 1, dtype=np.int64)
        stops = np.empty(n // 2 + 1, dtype=np.int64)
        k = 0
        i = 0
        while i < n:
            if mask[i]:
                j = i
                while j < n and mask[j]:
                    j += 1
                if j - i >= debounce:
                    starts[k] = i
                    stops[k] = j
                    k += 1
                i = j
            else:
                i += 1
        return starts[:k].copy(), stops[:k].copy()

else:  # pragma: no cover
    _sosfilt_numba = _sosfilt_numpy
    _rectifier_amp_numba = _rectifier_amp_numpy
    _schmitt_numba = _schmitt_numpy
    _runs_numba = _runs_numpy
    _tones_numba = _tones_numpy


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

_IMPLS = {
    "numba": (_sosfilt_numba, _rectifier_amp_numba, _schmitt_numba, _runs_numba, _tones_numba),
    "numpy": (_sosfilt_numpy, _rectifier_amp_numpy, _schmitt_numpy, _runs_numpy, _tones_numpy),
}

BACKEND = "numpy"


def set_backend(name: str) -> None:
    global BACKEND
    if name not in _IMPLS:
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not NUMBA_AVAILABLE:
        raise ValueError("numba is not installed")
    BACKEND = name


def active_backend() -> str:
    return BACKEND


def _default_backend() -> str:
    requested = os.environ.get("EMSHIELD_BACKEND", "").strip().lower()
    if requested == "numpy" or not NUMBA_AVAILABLE:
        return "numpy"
    return "numba"


set_backend(_default_backend())


def _as_sos(sos):
    if sos is None:
        return _EMPTY_SOS
    return np.ascontiguousarray(sos, dtype=np.float64).reshape(-1, 6)


def sosfilt(sos, x):
    """Causal cascaded-biquad filter (direct form II transposed, zero initial state)."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    return _IMPLS[BACKEND][0](_as_sos(sos), x)


def rectifier_amp(x, sos_par, sos_hp, sos_lp, gain, a2, noise=None, ratio=1.0,
                  rails=np.inf):
    """Fused amplifier core: ``clamp(LP[gain*u + a2*HP(u)**2] + noise)``.

    ``u`` is ``x`` through the parasitic input section ``sos_par``. ``sos_hp``
    selects the part of ``u`` that gets squared (``None`` squares all of it).
    ``noise`` is a coarse noise track, linearly interpolated with ``ratio``
    output samples per noise sample.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    noise = np.zeros(0) if noise is None else np.ascontiguousarray(noise, dtype=np.float64)
    return _IMPLS[BACKEND][1](x, _as_sos(sos_par), _as_sos(sos_hp), _as_sos(sos_lp),
                              float(gain), float(a2), noise, float(ratio), float(rails))


def schmitt(x, lo, hi, start_high=False):
    """Two-threshold latch; the state flips high above ``hi`` and low below ``lo``."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    return _IMPLS[BACKEND][2](x, float(lo), float(hi), bool(start_high))


def runs(mask, debounce=1):
    """Half-open ``[start, stop)`` index runs of True that last ``>= debounce`` samples."""
    mask = np.ascontiguousarray(mask, dtype=np.bool_)
    return _IMPLS[BACKEND][3](mask, int(debounce))


def tones(cycles_per_sample, amplitudes, phases, n):
    """``sum_k a_k sin(2 pi c_k i + phi_k)`` for ``i = 0 .. n-1``."""
    c = np.ascontiguousarray(cycles_per_sample, dtype=np.float64)
    a = np.ascontiguousarray(amplitudes, dtype=np.float64)
    p = np.ascontiguousarray(phases, dtype=np.float64)
    return _IMPLS[BACKEND][4](c, a, p, int(n))
