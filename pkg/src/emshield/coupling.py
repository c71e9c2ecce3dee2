"""Wires as frequency-selective antennas, and injection by superposition."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft

from .errors import DegenerateK, EmptyWaveform, InvalidLength, InvalidSpec, NegativeInput
from .waveform import Am, Gated, Pwm, Silence, Sine, Sum, Waveform

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class Mode:
    """One Lorentzian resonance of a wire."""

    f_res: float
    q: float
    peak_gain: float

    def __post_init__(self):
        if not self.f_res > 0:
            raise InvalidSpec("mode f_res must be positive")
        if not self.q > 0:
            raise InvalidSpec("mode q must be positive")
        if self.peak_gain < 0:
            raise InvalidSpec("mode peak_gain must be >= 0")


def lorentzian(f, f_res: float, q: float):
    """``1 / (1 + q^2 (f/f_res - f_res/f)^2)``; 1 at resonance, 0 at DC."""
    f = np.asarray(f, dtype=np.float64)
    with np.errstate(divide="ignore"):
        detune = np.where(f > 0, f / f_res - f_res / np.where(f > 0, f, 1.0), np.inf)
    return np.where(np.isfinite(detune), 1.0 / (1.0 + (q * detune) ** 2), 0.0)


@dataclass(frozen=True)
class TransferFunction:
    """Zero-phase magnitude response plus a pure delay."""

    broadband_gain: float = 1.0
    modes: tuple = ()
    delay: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(
            m if isinstance(m, Mode) else Mode(**m) for m in self.modes))
        if self.broadband_gain < 0:
            raise InvalidSpec("broadband_gain must be >= 0")
        if self.delay < 0:
            raise InvalidSpec("delay must be >= 0")

    @property
    def is_scalar(self) -> bool:
        return not self.modes and self.delay == 0.0

    def magnitude(self, f):
        f = np.asarray(f, dtype=np.float64)
        h = np.full(f.shape, float(self.broadband_gain))
        for m in self.modes:
            h = h + m.peak_gain * lorentzian(f, m.f_res, m.q)
        return h if h.ndim else float(h)

    def to_dict(self) -> dict:
        return {
            "gain": self.broadband_gain,
            "modes": [{"f_res": m.f_res, "q": m.q, "peak_gain": m.peak_gain} for m in self.modes],
            "delay_s": self.delay,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TransferFunction":
        return cls(float(d.get("gain", 1.0)), tuple(Mode(**m) for m in d.get("modes", ())),
                   float(d.get("delay_s", 0.0)))


@dataclass(frozen=True)
class CouplingPair:
    """Primary wire response ``t_c``; the reference wire is ``k`` times less sensitive."""

    t_c: TransferFunction
    k: float
    skew: float = 0.0

    def __post_init__(self):
        if not self.k > 1:
            raise DegenerateK(f"k must be > 1, got {self.k}")


def apply(tf: TransferFunction, w: Waveform) -> Waveform:
    """Filter ``w`` by ``|H(f)|`` and delay it.

    Linear (not circular) convolution: the trace is zero padded to at least
    twice its length before the transform and truncated back afterwards.
    """
    if len(w) == 0:
        raise EmptyWaveform("cannot couple an empty waveform")
    if tf.is_scalar:
        if tf.broadband_gain == 1.0:
            return w
        return w.with_samples(w.samples * tf.broadband_gain)
    n = len(w)
    m = sfft.next_fast_len(2 * n, real=True)
    spec = sfft.rfft(w.samples, m)
    f = np.arange(spec.size) * (w.sample_rate / m)
    h = tf.magnitude(f).astype(np.complex128)
    if tf.delay:
        h *= np.exp(-2j * np.pi * f * tf.delay)
    y = sfft.irfft(spec * h, m)
    # zero-phase response: negative-lag taps wrap to the end of the padded buffer
    return w.with_samples(y[:n])


def apply_to_spec(tf: TransferFunction, spec):
    """Tone-domain equivalent of :func:`apply` for line-spectrum signals.

    Every sinusoid is scaled by ``|H(f)|`` and phase-shifted by the delay, so
    the result is the steady-state response with no transform over the full
    trace. AM is expanded into carrier plus two sidebands. Gated signals are
    filtered before gating (edge smoothing is ignored) and the gates move by
    the delay. PWM has no finite line spectrum and is rejected.
    """
    if isinstance(spec, Silence):
        return spec
    if isinstance(spec, Sine):
        return Sine(spec.f, spec.amplitude_pp * tf.magnitude(spec.f),
                    spec.phase - 2 * math.pi * spec.f * tf.delay)
    if isinstance(spec, Am):
        a = spec.carrier_amplitude_pp
        side = a * spec.mod_index / 2
        # cos(x) = sin(x + pi/2)
        tones = [Sine(spec.carrier_f, a, math.pi / 2),
                 Sine(spec.carrier_f + spec.mod_f, side, math.pi / 2),
                 Sine(abs(spec.carrier_f - spec.mod_f), side, math.pi / 2)]
        return Sum(tuple(apply_to_spec(tf, t) for t in tones))
    if isinstance(spec, Sum):
        return Sum(tuple(apply_to_spec(tf, p) for p in spec.parts))
    if isinstance(spec, Gated):
        return Gated(apply_to_spec(tf, spec.inner),
                     tuple((a + tf.delay, b + tf.delay) for a, b in spec.windows))
    if isinstance(spec, Pwm):
        raise InvalidSpec("PWM has no finite line spectrum; use apply() on the waveform")
    raise InvalidSpec(f"unknown signal spec {spec!r}")


def couple_pair(attack: Waveform, pair: CouplingPair) -> tuple[Waveform, Waveform]:
    """Signals the attack induces on the primary and reference wires."""
    primary = apply(pair.t_c, attack)
    reference = apply(TransferFunction(1.0 / pair.k, (), pair.skew), primary)
    return primary, reference


def wire_resonant_frequency(length: float) -> float:
    """Half-wave resonance ``c / (2 L)`` of a straight wire."""
    if not length > 0:
        raise InvalidLength(f"wire length must be positive, got {length}")
    return SPEED_OF_LIGHT / (2.0 * length)


def injected_amplitude_from_power(attack_power: float, coupling_coefficient: float) -> float:
    """Induced amplitude in volts, ``coefficient * sqrt(power)``."""
    if attack_power < 0 or coupling_coefficient < 0:
        raise NegativeInput("attack power and coupling coefficient must be >= 0")
    return coupling_coefficient * math.sqrt(attack_power)
