"""Threshold calibration, the detection decision and the parameter-design algebra.

Noise enters the design inequalities as a worst-case peak (a scalar in
volts). Attack "power" in these formulas is the injected amplitude at the
amplifier input, in volts.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import devices
from .coupling import SPEED_OF_LIGHT
from .errors import (
    DegenerateK,
    DivideByZero,
    EmptyCalibration,
    Infeasible,
    InvalidRegime,
    InvalidSpec,
    InvalidThreshold,
    NoPolicy,
)
from .waveform import Waveform

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AdaptivePolicy:
    window: float
    quantile: float = 1.0
    margin: float = 1.2
    floor: float = 0.0

    def __post_init__(self):
        if not 0.5 < self.quantile <= 1:
            raise InvalidSpec("quantile must be in (0.5, 1]")
        if self.margin < 1:
            raise InvalidSpec("margin must be >= 1")
        if not self.window > 0:
            raise InvalidSpec("window must be positive")


@dataclass(frozen=True)
class DetectorConfig:
    epsilon: float
    debounce: int = 1
    adaptive: AdaptivePolicy | None = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise InvalidThreshold(f"epsilon must be positive, got {self.epsilon}")
        if self.debounce < 1:
            raise InvalidSpec("debounce must be >= 1")


@dataclass(frozen=True)
class DesignedParams:
    k: float
    g: float
    epsilon: float


@dataclass(frozen=True)
class DetectionOutcome:
    detected: bool
    latency: float | None
    peak: float
    dc_offset: float
    events: tuple = field(default=())


def calibrate_threshold(noise_runs, margin: float = 1.0) -> float:
    """``margin`` times the largest ``|sample|`` seen across attack-free runs."""
    runs = list(noise_runs)
    if not runs:
        raise EmptyCalibration("need at least one noise run")
    if margin < 1:
        raise InvalidSpec("margin must be >= 1")
    worst = max(float(np.max(np.abs(w.samples))) if len(w) else 0.0 for w in runs)
    return margin * worst


def detect(o: Waveform, cfg: DetectorConfig, attack_onset: float | None = None) -> DetectionOutcome:
    if not cfg.epsilon > 0:
        raise InvalidThreshold("epsilon must be positive")
    intervals = devices.comparator(o, cfg.epsilon, cfg.debounce)
    events = tuple((o.t0 + a / o.sample_rate, o.t0 + b / o.sample_rate) for a, b in intervals)
    latency = None
    if events and attack_onset is not None:
        after = [s for s, _ in events if s >= attack_onset]
        latency = (after[0] if after else events[0][0]) - attack_onset
    window = o if attack_onset is None else o.slice_time(attack_onset)
    if len(window) == 0:
        window = o
    x = window.samples
    return DetectionOutcome(
        detected=bool(events),
        latency=latency,
        peak=float(np.max(np.abs(x - x.mean()))),
        dc_offset=float(x.mean()),
        events=events,
    )


def min_detectable_power(k, g, epsilon, n):
    """Smallest injected level that trips the comparator: ``(eps/G - n) K/(K-1)``.

    Works on floats and on ``fractions.Fraction`` inputs alike.
    """
    if not k > 1:
        raise DegenerateK(f"k must be > 1, got {k}")
    if not g > 0:
        raise InvalidSpec("g must be positive")
    if not epsilon > g * n:
        raise InvalidRegime("epsilon must exceed g * n or noise alone trips detection")
    return (epsilon / g - n) * k / (k - 1)


def min_power_curve(k_values, g, epsilon, n) -> list[tuple]:
    return [(k, min_detectable_power(k, g, epsilon, n)) for k in k_values]


def feasibility_check(params: DesignedParams, p_min: float, noise_peak: float) -> bool:
    """Both design inequalities by direct substitution."""
    g, k, eps = params.g, params.k, params.epsilon
    detects = g * ((k - 1) / k * p_min + noise_peak) >= eps
    quiet = g * noise_peak < eps
    return bool(detects and quiet)


def design_params(p_min: float, noise_peak: float, g_options, k_max: float) -> DesignedParams:
    """Pick ``(K, G, eps)`` that catch every injection of at least ``p_min``.

    Uses the largest gain, ``K = k_max`` and the midpoint of the feasible
    threshold interval ``(G n, G (p_min (K-1)/K + n))``.
    """
    if not p_min > 0:
        raise Infeasible("P_min must be positive")
    if noise_peak < 0:
        raise Infeasible("noise peak must be >= 0")
    if not k_max > 1:
        raise Infeasible("k_max must be > 1")
    gains = sorted((g for g in g_options if g > 0), reverse=True)
    if not gains:
        raise Infeasible("no positive gain available")
    k = k_max
    for g in gains:
        lo = g * noise_peak
        hi = g * (p_min * (k - 1) / k + noise_peak)
        if hi > lo:
            eps = (lo + hi) / 2
            params = DesignedParams(k=k, g=g, epsilon=eps)
            if eps > lo and min_detectable_power(k, g, eps, noise_peak) <= p_min:
                return params
    raise Infeasible("feasible threshold interval is empty for every gain")


def adaptive_update(cfg: DetectorConfig, recent_noise: Waveform) -> DetectorConfig:
    """Re-derive the threshold from the last ``window`` seconds of noise."""
    pol = cfg.adaptive
    if pol is None:
        raise NoPolicy("detector config has no adaptive policy")
    w = recent_noise
    if w.duration > pol.window:
        w = w.slice_time(w.t0 + w.duration - pol.window)
    mags = np.abs(w.samples)
    level = float(np.quantile(mags, pol.quantile)) if mags.size else 0.0
    eps = max(pol.margin * level, pol.floor)
    if not eps > 0:
        raise InvalidThreshold("adaptive threshold collapsed to zero; set a floor")
    if eps != cfg.epsilon:
        log.info("adaptive threshold %.6g V -> %.6g V", cfg.epsilon, eps)
    return replace(cfg, epsilon=eps)


def cancellation_requirements(wire_spacing: float, g: float, k: float) -> dict:
    """What an attacker needs to null the detector through its own output wire.

    The injection into the detector wire must arrive in antiphase (wire
    spacing of half a wavelength) and be ``g (k-1)/k`` times stronger than
    the injection into the control wire.
    """
    if not wire_spacing > 0:
        raise InvalidSpec("wire spacing must be positive")
    if not k > 1:
        raise DegenerateK(f"k must be > 1, got {k}")
    if not g > 0:
        raise InvalidSpec("g must be positive")
    ratio = g * (k - 1) / k
    return {
        "wire_spacing_m": wire_spacing,
        "g": g,
        "k": k,
        "f_required": SPEED_OF_LIGHT / (2.0 * wire_spacing),
        "power_ratio_required": ratio,
        "phase_only_regime": ratio < 1,
    }


def drive_vs_control_power_ratio(p_drive: float, p_control: float) -> float:
    if p_control == 0:
        raise DivideByZero("control power must be non-zero")
    if p_control < 0 or p_drive < 0:
        raise InvalidSpec("powers must be >= 0")
    return p_drive / p_control

