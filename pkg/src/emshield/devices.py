"""Behavioural models of the amplifiers, the motor driver and the comparator.

All filters are causal. A band limit ``LP_f`` is four identical single-pole
sections whose combined -3 dB point sits at ``f``. RF rectification is a
static square law applied to the part of the input above the band edge,
selected by a Butterworth high-pass of order ``p/2``; its power response
``x^p / (1 + x^p)`` (``x = f / f_band``) is the rectification
effectiveness used by the closed-form estimates below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import signal as _sig

from . import _kernels
from .errors import (
    EmptyWaveform,
    InvalidSpec,
    InvalidThreshold,
    LengthMismatch,
    NoCrossing,
    RateMismatch,
)
from .waveform import Waveform

LP_ORDER = 4
NOISE_OVERSAMPLE = 8


# ---------------------------------------------------------------------------
# filter design
# ---------------------------------------------------------------------------

def _pole_for_band(f_band: float, order: int = LP_ORDER) -> float:
    return f_band / math.sqrt(2.0 ** (1.0 / order) - 1.0)


def lowpass_sos(f_band: float, sample_rate: float, order: int = LP_ORDER) -> np.ndarray:
    """``order`` matched-z single poles with unity DC gain, -3 dB at ``f_band``."""
    fp = _pole_for_band(f_band, order)
    a = 1.0 - math.exp(-2.0 * math.pi * fp / sample_rate)
    return np.tile([a, 0.0, 0.0, 1.0, -(1.0 - a), 0.0], (order, 1))


def pole_sos(f_pole: float, sample_rate: float) -> np.ndarray | None:
    if not math.isfinite(f_pole):
        return None
    a = 1.0 - math.exp(-2.0 * math.pi * f_pole / sample_rate)
    return np.array([[a, 0.0, 0.0, 1.0, -(1.0 - a), 0.0]])


def highpass_sos(f_edge: float, sample_rate: float, exponent: float) -> np.ndarray:
    order = _hp_order(exponent)
    if f_edge >= sample_rate / 2:
        raise InvalidSpec(f"band edge {f_edge} Hz is not below Nyquist at {sample_rate} S/s")
    return _sig.butter(order, f_edge, btype="highpass", fs=sample_rate, output="sos")


def _hp_order(exponent: float) -> int:
    order = exponent / 2
    if order < 1 or order != int(order):
        raise InvalidSpec(f"feedback_exponent must be an even integer >= 2 for simulation, got {exponent}")
    return int(order)


def lowpass_mag(f, f_band: float, order: int = LP_ORDER):
    x = np.asarray(f, dtype=np.float64) / _pole_for_band(f_band, order)
    return (1.0 + x * x) ** (-order / 2)


def pole_mag(f, f_pole: float):
    if not math.isfinite(f_pole):
        return np.ones_like(np.asarray(f, dtype=np.float64))
    x = np.asarray(f, dtype=np.float64) / f_pole
    return 1.0 / np.sqrt(1.0 + x * x)


def effectiveness(f, f_band: float, exponent: float):
    """Sigmoid ``x^p / (1 + x^p)``: 0 at DC, 1/2 at the band edge, 1 far above it."""
    x = np.asarray(f, dtype=np.float64) / f_band
    xp = x ** exponent
    return xp / (1.0 + xp)


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseModel:
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise InvalidSpec("noise sigma must be >= 0")

    def track(self, n: int, sample_rate: float, band: float) -> tuple[np.ndarray, float]:
        """Coarse Gaussian track and the interpolation ratio for ``n`` samples.

        Noise is drawn at ``min(rate, 8 * band)`` and linearly interpolated, so
        for a given seed and duration the realisation does not depend on the
        simulation rate.
        """
        if self.sigma == 0.0:
            return np.zeros(0), 1.0
        r_n = min(sample_rate, NOISE_OVERSAMPLE * band)
        ratio = sample_rate / r_n
        count = int(math.ceil(n / ratio)) + 2
        rng = np.random.default_rng(self.seed)
        return self.sigma * rng.standard_normal(count), ratio


@dataclass(frozen=True)
class DiffAmpModel:
    gain: float
    f_max: float
    a2: float
    feedback_exponent: float = 2.0
    f_parasitic: float = 5e9
    rails: float = 5.0
    noise_sigma: float = 0.0

    def __post_init__(self):
        if not self.gain > 0:
            raise InvalidSpec("gain must be positive")
        if not 0 < self.f_max < self.f_parasitic:
            raise InvalidSpec("need 0 < f_max < f_parasitic")
        if not self.rails > 0:
            raise InvalidSpec("rails must be positive")
        if self.feedback_exponent < 1:
            raise InvalidSpec("feedback_exponent must be >= 1")
        if self.noise_sigma < 0:
            raise InvalidSpec("noise_sigma must be >= 0")


@dataclass(frozen=True)
class AudioAmp:
    gain: float
    f_band: float
    a2: float
    rails: float
    feedback_exponent: float = 2.0
    f_parasitic: float = math.inf
    noise_sigma: float = 0.0

    def __post_init__(self):
        if not self.rails > 0:
            raise InvalidSpec("rails must be positive")
        if not self.f_band > 0:
            raise InvalidSpec("f_band must be positive")


@dataclass(frozen=True)
class MotorDriver:
    """Schmitt-trigger input stage driving a half bridge.

    ``hysteresis`` is the full width of the threshold band; ``None`` means 5 %
    of the logic swing.
    """

    v_threshold: float
    rect_coeff: float
    f_band: float
    v_low: float = 0.0
    v_high: float = 3.3
    hysteresis: float | None = None
    f_parasitic: float = math.inf

    def __post_init__(self):
        if self.hysteresis is None:
            object.__setattr__(self, "hysteresis", 0.05 * (self.v_high - self.v_low))
        if not self.v_low < self.v_threshold < self.v_high:
            raise InvalidSpec("need v_low < v_threshold < v_high")
        if self.hysteresis < 0:
            raise InvalidSpec("hysteresis must be >= 0")
        if not self.f_band > 0:
            raise InvalidSpec("f_band must be positive")


ConditionerModel = Union[AudioAmp, MotorDriver]


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def diffamp(model: DiffAmpModel, v_plus: Waveform, v_minus: Waveform,
            noise: NoiseModel | None = None) -> Waveform:
    """Output of the detection amplifier for the tap pair ``(v_plus, v_minus)``."""
    if v_plus.sample_rate != v_minus.sample_rate:
        raise RateMismatch(f"{v_plus.sample_rate} != {v_minus.sample_rate}")
    if len(v_plus) != len(v_minus):
        raise LengthMismatch(f"{len(v_plus)} != {len(v_minus)}")
    if len(v_plus) == 0:
        raise EmptyWaveform("diffamp needs samples")
    fs = v_plus.sample_rate
    if fs < 4 * model.f_max:
        raise InvalidSpec(f"sample rate {fs} below 4 * f_max")
    u = v_plus.samples - v_minus.samples
    track, ratio = (noise or NoiseModel()).track(u.size, fs, model.f_max)
    out = _kernels.rectifier_amp(
        u,
        pole_sos(model.f_parasitic, fs),
        highpass_sos(model.f_max, fs, model.feedback_exponent),
        lowpass_sos(model.f_max, fs),
        model.gain, model.a2, track, ratio, model.rails,
    )
    return Waveform(out, fs, v_plus.t0)


def rectified_dc_estimate(model: DiffAmpModel, f: float, amplitude: float) -> float:
    """Closed-form DC offset a pure tone of ``amplitude`` produces at frequency ``f``."""
    eff = model.a2 * effectiveness(f, model.f_max, model.feedback_exponent)
    a = amplitude * pole_mag(f, model.f_parasitic)
    return float(eff * a * a / 2.0)


def linear_peak_estimate(model: DiffAmpModel, f: float, amplitude: float) -> float:
    """Closed-form peak of the linear path for a differential tone."""
    return float(model.gain * amplitude * pole_mag(f, model.f_parasitic)
                 * lowpass_mag(f, model.f_max))


@dataclass(frozen=True)
class Crossings:
    f_pk_eps: float
    f_dc_eps: float

    @property
    def no_gap(self) -> bool:
        return self.f_dc_eps < self.f_pk_eps


def _bisect_log(fn, lo: float, hi: float, rtol: float = 1e-4) -> float:
    # fn(lo) is False, fn(hi) is True
    while hi / lo - 1.0 > rtol:
        mid = math.sqrt(lo * hi)
        if fn(mid):
            hi = mid
        else:
            lo = mid
    return hi


def find_crossings(model: DiffAmpModel, amplitude: float, epsilon: float) -> Crossings:
    """Lowest frequencies where the linear peak drops below, and the DC offset reaches, ``epsilon``.

    ``amplitude`` is the differential amplitude at the amplifier input.
    """
    if not epsilon > 0:
        raise InvalidThreshold("epsilon must be positive")
    if model.gain * amplitude <= epsilon:
        raise NoCrossing("peak", "in-band peak never reaches epsilon")

    def below(f):
        return linear_peak_estimate(model, f, amplitude) < epsilon

    hi = model.f_max
    while not below(hi):
        hi *= 2
        if hi > 1e18:
            raise NoCrossing("peak")
    f_pk = _bisect_log(below, model.f_max * 1e-9, hi)

    grid = np.geomspace(model.f_max * 1e-6,
                        max(model.f_parasitic, model.f_max) * 1e4, 4001)
    dc = np.array([rectified_dc_estimate(model, f, amplitude) for f in grid])
    hits = np.flatnonzero(dc >= epsilon)
    if hits.size == 0:
        raise NoCrossing("dc", "rectified DC never reaches epsilon")
    j = hits[0]
    if j == 0:
        f_dc = grid[0]
    else:
        f_dc = _bisect_log(lambda f: rectified_dc_estimate(model, f, amplitude) >= epsilon,
                           grid[j - 1], grid[j])
    return Crossings(float(f_pk), float(f_dc))


def conditioner(model: ConditionerModel, input: Waveform,
                noise: NoiseModel | None = None) -> Waveform:
    """Drive signal the signal conditioner produces from ``input``."""
    if len(input) == 0:
        raise EmptyWaveform("conditioner needs samples")
    fs = input.sample_rate
    x = input.samples
    if isinstance(model, AudioAmp):
        track, ratio = (noise or NoiseModel()).track(x.size, fs, model.f_band)
        y = _kernels.rectifier_amp(
            x,
            pole_sos(model.f_parasitic, fs),
            highpass_sos(model.f_band, fs, model.feedback_exponent),
            lowpass_sos(model.f_band, fs),
            model.gain, model.a2, track, ratio, model.rails,
        )
        return Waveform(y, fs, input.t0)
    if isinstance(model, MotorDriver):
        v_eff = motor_effective_input(model, input)
        half = model.hysteresis / 2
        state = _kernels.schmitt(v_eff, model.v_threshold - half, model.v_threshold + half,
                                 start_high=bool(v_eff[0] > model.v_threshold))
        return Waveform(np.where(state, model.v_high, model.v_low), fs, input.t0)
    raise InvalidSpec(f"unknown conditioner model {model!r}")


def motor_effective_input(model: MotorDriver, input: Waveform) -> np.ndarray:
    """``LP[u] + rect_coeff * LP[u^2]`` seen by the driver's Schmitt trigger."""
    fs = input.sample_rate
    return _kernels.rectifier_amp(
        input.samples, pole_sos(model.f_parasitic, fs), None,
        lowpass_sos(model.f_band, fs), 1.0, model.rect_coeff)


def comparator(o: Waveform, epsilon: float, debounce: int = 1) -> list[tuple[int, int]]:
    """Window comparator: half-open sample intervals where ``|o| >= epsilon``."""
    if len(o) == 0:
        raise EmptyWaveform("comparator needs samples")
    if not epsilon > 0:
        raise InvalidThreshold("epsilon must be positive")
    if debounce < 1:
        raise InvalidSpec("debounce must be >= 1")
    starts, stops = _kernels.runs(np.abs(o.samples) >= epsilon, debounce)
    return [(int(a), int(b)) for a, b in zip(starts, stops)]
