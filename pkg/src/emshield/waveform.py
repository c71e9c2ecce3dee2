"""Sampled waveforms, signal synthesis and spectral/time-domain analytics."""

from __future__ import annotations

import csv
import io
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np
from scipy import fft as sfft

from . import _kernels
from .errors import AliasingError, DegenerateError, EmptyWaveform, InvalidSpec


@dataclass(frozen=True, eq=False)
class Waveform:
    """Uniformly sampled voltage trace. ``samples`` is made read-only."""

    samples: np.ndarray
    sample_rate: float
    t0: float = 0.0

    def __post_init__(self):
        if not self.sample_rate > 0:
            raise InvalidSpec(f"sample_rate must be positive, got {self.sample_rate}")
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim != 1:
            raise InvalidSpec("samples must be one-dimensional")
        if arr.flags.writeable:
            # read-only view; avoids copying multi-hundred-MB RF traces
            arr = arr.view()
            arr.flags.writeable = False
        object.__setattr__(self, "samples", arr)

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.samples.size) / self.sample_rate

    def with_samples(self, samples) -> "Waveform":
        return Waveform(samples, self.sample_rate, self.t0)

    def slice_time(self, start: float, stop: float | None = None) -> "Waveform":
        i0 = max(0, int(math.ceil((start - self.t0) * self.sample_rate - 1e-9)))
        i1 = self.samples.size if stop is None else int(round((stop - self.t0) * self.sample_rate))
        return Waveform(self.samples[i0:i1], self.sample_rate, self.t0 + i0 / self.sample_rate)


# ---------------------------------------------------------------------------
# signal specifications
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Sine:
    f: float
    amplitude_pp: float
    phase: float = 0.0


@dataclass(frozen=True)
class Pwm:
    f: float
    duty: float
    v_low: float = 0.0
    v_high: float = 1.0


@dataclass(frozen=True)
class Am:
    """Carrier ``(A/2)(1 + m cos(2 pi mod_f t)) cos(2 pi carrier_f t)``."""

    carrier_f: float
    carrier_amplitude_pp: float
    mod_f: float
    mod_index: float


@dataclass(frozen=True)
class Silence:
    pass


@dataclass(frozen=True)
class Sum:
    parts: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))


@dataclass(frozen=True)
class Gated:
    """``inner`` passed through rectangular on-windows ``[t_start, t_end)``."""

    inner: "SignalSpec"
    windows: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "windows", tuple((float(a), float(b)) for a, b in self.windows))


SignalSpec = Union[Sine, Pwm, Am, Silence, Sum, Gated]


def spec_frequencies(spec) -> list[float]:
    """Every spectral frequency the spec puts energy at (PWM: fundamental only)."""
    if isinstance(spec, Sine):
        return [spec.f]
    if isinstance(spec, Pwm):
        return [spec.f]
    if isinstance(spec, Am):
        return [spec.carrier_f + spec.mod_f, spec.carrier_f, abs(spec.carrier_f - spec.mod_f)]
    if isinstance(spec, Sum):
        return [f for p in spec.parts for f in spec_frequencies(p)]
    if isinstance(spec, Gated):
        return spec_frequencies(spec.inner)
    return []


def _validate(spec, sample_rate: float, duration: float) -> None:
    nyq = sample_rate / 2
    if isinstance(spec, Sine):
        if spec.f < 0:
            raise InvalidSpec("negative frequency")
        if spec.f >= nyq:
            raise AliasingError(f"sine at {spec.f} Hz >= Nyquist {nyq} Hz")
    elif isinstance(spec, Pwm):
        if not 0 < spec.duty < 1:
            raise InvalidSpec(f"duty must be in (0, 1), got {spec.duty}")
        if not spec.f > 0:
            raise InvalidSpec("PWM frequency must be positive")
        if spec.f >= nyq:
            raise AliasingError(f"PWM at {spec.f} Hz >= Nyquist {nyq} Hz")
    elif isinstance(spec, Am):
        if not 0 <= spec.mod_index <= 1:
            raise InvalidSpec(f"mod_index must be in [0, 1], got {spec.mod_index}")
        if spec.carrier_f < 0 or spec.mod_f < 0:
            raise InvalidSpec("negative frequency")
        if spec.carrier_f + spec.mod_f >= nyq:
            raise AliasingError(f"AM upper sideband {spec.carrier_f + spec.mod_f} Hz >= Nyquist {nyq} Hz")
    elif isinstance(spec, Sum):
        for p in spec.parts:
            _validate(p, sample_rate, duration)
    elif isinstance(spec, Gated):
        _validate(spec.inner, sample_rate, duration)
        prev_end = -math.inf
        for a, b in sorted(spec.windows):
            if not a < b:
                raise InvalidSpec(f"gate window ({a}, {b}) is empty")
            if a < 0 or b > duration * (1 + 1e-12):
                raise InvalidSpec(f"gate window ({a}, {b}) outside [0, {duration}]")
            if a < prev_end:
                raise InvalidSpec("gate windows overlap")
            prev_end = b
    elif not isinstance(spec, Silence):
        raise InvalidSpec(f"unknown signal spec {spec!r}")


def _sines(spec):
    """Flatten a Sine or a Sum of Sines into tone lists, else None."""
    if isinstance(spec, Sine):
        return [spec]
    if isinstance(spec, Sum):
        found = []
        for p in spec.parts:
            sub = _sines(p)
            if sub is None:
                return None
            found += sub
        return found
    return None


def _render(spec, n: int, rate: float) -> np.ndarray:
    if isinstance(spec, Silence):
        return np.zeros(n)
    flat = _sines(spec)
    if flat is not None:
        return _kernels.tones([s.f / rate for s in flat], [s.amplitude_pp / 2 for s in flat],
                              [s.phase for s in flat], n)
    idx = np.arange(n, dtype=np.float64)
    if isinstance(spec, Pwm):
        # phase in cycles, computed as (i*f mod rate)/rate to stay exact for integer f, rate
        frac = np.mod(idx * spec.f, rate) / rate
        return np.where(frac < spec.duty, spec.v_high, spec.v_low).astype(np.float64)
    if isinstance(spec, Am):
        env = 1.0 + spec.mod_index * np.cos((2 * np.pi * spec.mod_f / rate) * idx)
        env *= spec.carrier_amplitude_pp / 2
        env *= np.cos((2 * np.pi * spec.carrier_f / rate) * idx)
        return env
    if isinstance(spec, Sum):
        out = np.zeros(n)
        for p in spec.parts:
            out += _render(p, n, rate)
        return out
    if isinstance(spec, Gated):
        inner = _render(spec.inner, n, rate)
        mask = np.zeros(n, dtype=bool)
        for a, b in spec.windows:
            i0 = int(math.ceil(a * rate - 1e-9))
            i1 = int(math.ceil(b * rate - 1e-9))
            mask[max(i0, 0):min(i1, n)] = True
        inner[~mask] = 0.0
        return inner
    raise InvalidSpec(f"unknown signal spec {spec!r}")


def synthesize(spec, sample_rate: float, duration: float) -> Waveform:
    """Render ``spec`` at ``sample_rate`` for ``duration`` seconds, starting at t = 0."""
    if not duration > 0:
        raise InvalidSpec("duration must be positive")
    if not sample_rate > 0:
        raise InvalidSpec("sample_rate must be positive")
    _validate(spec, sample_rate, duration)
    n = int(round(duration * sample_rate))
    if n < 1:
        raise InvalidSpec("duration shorter than one sample")
    return Waveform(_render(spec, n, float(sample_rate)), float(sample_rate))


# ---------------------------------------------------------------------------
# spectrum
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Spectrum:
    """One-sided power spectrum; ``power[k]`` is mean-square volts in bin ``k``."""

    bin_hz: float
    power: np.ndarray = field(repr=False)

    @property
    def freqs(self) -> np.ndarray:
        return np.arange(self.power.size) * self.bin_hz


def _require(w: Waveform) -> None:
    if len(w) == 0:
        raise EmptyWaveform("waveform has no samples")


def power_spectrum(w: Waveform, window: str = "hann") -> Spectrum:
    """Power-normalised periodogram.

    Bins are scaled by ``sum(window**2)`` so that the bin powers add up to the
    window-weighted mean square of the samples, and an on-bin tone of
    amplitude A puts exactly A**2/2 into its main lobe. With
    ``window="boxcar"`` the sum is the plain mean square.
    """
    _require(w)
    x = w.samples
    n = x.size
    if window == "hann":
        win = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)
    elif window == "boxcar":
        win = np.ones(n)
    else:
        raise ValueError(f"unknown window {window!r}")
    norm = float(np.sum(win * win))
    if norm == 0.0:  # single-sample Hann window
        win = np.ones(n)
        norm = float(n)
    spec = sfft.rfft(x * win)
    p = (spec.real ** 2 + spec.imag ** 2) / (n * norm)
    if n % 2 == 0:
        p[1:-1] *= 2
    else:
        p[1:] *= 2
    return Spectrum(w.sample_rate / n, p)


def band_power(w: Waveform, center_f: float, bandwidth: float, spectrum: Spectrum | None = None) -> float:
    """Sum of periodogram bins within ``center_f +/- bandwidth/2`` (V^2)."""
    _require(w)
    if center_f + bandwidth / 2 >= w.sample_rate / 2:
        raise AliasingError(f"band edge {center_f + bandwidth / 2} Hz >= Nyquist")
    s = spectrum if spectrum is not None else power_spectrum(w)
    k = np.arange(s.power.size)
    lo = (center_f - bandwidth / 2) / s.bin_hz
    hi = (center_f + bandwidth / 2) / s.bin_hz
    sel = (k >= lo - 1e-9) & (k <= hi + 1e-9)
    return float(np.sum(s.power[sel]))


def impact_db(w: Waveform, f_legit: float, f_malicious: float, bandwidth: float,
              spectrum: Spectrum | None = None) -> float:
    """``10 log10(P_malicious / P_legit)``; ``-inf`` when the malicious band is empty."""
    s = spectrum if spectrum is not None else power_spectrum(w)
    p_legit = band_power(w, f_legit, bandwidth, s)
    p_mal = band_power(w, f_malicious, bandwidth, s)
    if p_legit == 0.0:
        raise DegenerateError("legitimate band power is zero")
    if p_mal == 0.0:
        return -math.inf
    return 10.0 * math.log10(p_mal / p_legit)


def peak_amplitude(w: Waveform) -> float:
    _require(w)
    x = w.samples
    return float(np.max(np.abs(x - x.mean())))


def mean_offset(w: Waveform) -> float:
    _require(w)
    return float(w.samples.mean())


def duty_cycle(w: Waveform, v_mid: float) -> float:
    """Fraction of samples strictly above ``v_mid``."""
    _require(w)
    return float(np.count_nonzero(w.samples > v_mid)) / len(w)


# ---------------------------------------------------------------------------
# serialisation
# ---------------------------------------------------------------------------

_MAGIC = b"EMW1"
_HEADER = struct.Struct("<4sId")


def to_csv(w: Waveform, path) -> None:
    """Two columns ``time_s,volts`` with 17 significant digits."""
    with open(path, "w", newline="") as fh:
        fh.write(waveform_csv_text(w))


def waveform_csv_text(w: Waveform) -> str:
    buf = io.StringIO()
    buf.write("time_s,volts\n")
    for t, v in zip(w.times, w.samples):
        buf.write(f"{t:.17g},{v:.17g}\n")
    return buf.getvalue()


def from_csv(path) -> Waveform:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [h.strip() for h in header] != ["time_s", "volts"]:
            raise InvalidSpec(f"unexpected CSV header {header}")
        rows = [(float(a), float(b)) for a, b in reader]
    if len(rows) < 2:
        raise EmptyWaveform("CSV needs at least two rows to recover the sample rate")
    t = np.array([r[0] for r in rows])
    v = np.array([r[1] for r in rows])
    rate = (len(t) - 1) / (t[-1] - t[0])
    return Waveform(v, float(rate), float(t[0]))


def to_binary(w: Waveform, path) -> None:
    """16-byte header (``EMW1``, u32 count, f64 rate) then little-endian f64 samples."""
    Path(path).write_bytes(to_bytes(w))


def to_bytes(w: Waveform) -> bytes:
    return _HEADER.pack(_MAGIC, len(w), float(w.sample_rate)) + w.samples.astype("<f8").tobytes()


def from_bytes(data: bytes) -> Waveform:
    if len(data) < _HEADER.size:
        raise InvalidSpec("truncated EMW1 header")
    magic, count, rate = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise InvalidSpec(f"bad magic {magic!r}")
    body = data[_HEADER.size:]
    if len(body) != 8 * count:
        raise InvalidSpec(f"expected {count} samples, found {len(body) // 8}")
    return Waveform(np.frombuffer(body, dtype="<f8").astype(np.float64), rate)


def from_binary(path) -> Waveform:
    return from_bytes(Path(path).read_bytes())
