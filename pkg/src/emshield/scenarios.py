"""End-to-end speaker and motor systems, the sweep engine and its report."""

from __future__ import annotations

import hashlib
import io
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import devices
from .coupling import CouplingPair, Mode, TransferFunction, apply, apply_to_spec
from .detector import DetectionOutcome, DetectorConfig, detect
from .devices import AudioAmp, DiffAmpModel, MotorDriver, NoiseModel
from .errors import ConfigError, EmShieldError, InvalidSpec
from .waveform import (
    Am,
    Gated,
    Pwm,
    Silence,
    Sine,
    Sum,
    Waveform,
    band_power,
    duty_cycle,
    impact_db,
    power_spectrum,
    spec_frequencies,
    synthesize,
)

log = logging.getLogger(__name__)

SPEAKER = "speaker"
MOTOR = "motor"

# bands used as the noise reference next to the 6 kHz tone; clear of 5/6 kHz
# and of the 10/12 kHz second-order products
_NOISE_REF_CENTERS = (7.5e3, 8.0e3, 8.5e3, 9.0e3)


@dataclass(frozen=True)
class AttackConfig:
    spec: object
    onset: float = 0.0


@dataclass(frozen=True)
class Analysis:
    """Where the system metric is read.

    Speaker: impact between ``f_legit`` and ``f_malicious`` over ``bandwidth``.
    Motor: duty cycle over the last ``duty_periods`` PWM periods.
    The speaker drive is block-averaged down to about ``analysis_rate``
    before the spectrum is taken; it is band-limited far below that rate.
    Attack-free sweep and calibration runs execute at ``analysis_rate``
    (raised if the legitimate signal needs more) since nothing fast is on
    the wires.
    """

    f_legit: float = 5e3
    f_malicious: float = 6e3
    bandwidth: float = 500.0
    duty_periods: int = 5
    analysis_rate: float = 2e6


@dataclass(frozen=True)
class ScenarioConfig:
    system: str
    legit: object
    conditioner: object
    detection_amp: DiffAmpModel
    coupling: CouplingPair
    attack: AttackConfig | None
    detector: DetectorConfig
    sample_rate: float
    duration: float
    seed: int = 0
    analysis: Analysis = field(default_factory=Analysis)


@dataclass(frozen=True)
class RunResult:
    outcome: DetectionOutcome
    impact_db: float | None = None
    duty_cycle: float | None = None
    drive_preview: dict = field(default_factory=dict)
    tone_snr_db: float | None = None
    sample_rate: float = 0.0
    max_abs_output: float = 0.0


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def _analytic_frequencies(cfg: ScenarioConfig) -> list[float]:
    if cfg.system == SPEAKER:
        return [cfg.analysis.f_legit, cfg.analysis.f_malicious]
    return [f for f in spec_frequencies(cfg.legit) if f > 0]


def validate(cfg: ScenarioConfig) -> None:
    """Raise :class:`ConfigError` naming the first field that breaks an invariant."""
    if cfg.system not in (SPEAKER, MOTOR):
        raise ConfigError("system", f"must be 'speaker' or 'motor', got {cfg.system!r}")
    if cfg.system == SPEAKER and not isinstance(cfg.conditioner, AudioAmp):
        raise ConfigError("conditioner", "speaker system needs an audio amplifier")
    if cfg.system == MOTOR and not isinstance(cfg.conditioner, MotorDriver):
        raise ConfigError("conditioner", "motor system needs a motor driver")
    if not cfg.sample_rate > 0:
        raise ConfigError("sample_rate", "must be positive")
    if not cfg.duration > 0:
        raise ConfigError("duration", "must be positive")
    n = cfg.sample_rate * cfg.duration
    if abs(n - round(n)) > 1e-6 * max(1.0, n):
        raise ConfigError("duration", "sample_rate * duration must be a whole number of samples")
    freqs = spec_frequencies(cfg.legit)
    if cfg.attack is not None:
        freqs += spec_frequencies(cfg.attack.spec)
        if not 0 <= cfg.attack.onset < cfg.duration:
            raise ConfigError("attack.onset", "must lie inside the run")
    top = max(freqs, default=0.0)
    if cfg.sample_rate < 10 * top * (1 - 1e-12):
        raise ConfigError("sample_rate", f"{cfg.sample_rate} S/s is below 10x the highest frequency {top} Hz")
    low = min(_analytic_frequencies(cfg), default=0.0)
    if low > 0 and cfg.duration * low < 20 * (1 - 1e-9):
        raise ConfigError("duration", f"needs >= 20 periods of {low} Hz")
    if cfg.sample_rate < 4 * cfg.detection_amp.f_max:
        raise ConfigError("sample_rate", "below 4x the detection amplifier band")
    if cfg.sample_rate <= 2 * cfg.conditioner.f_band:
        raise ConfigError("sample_rate", "conditioner band edge above Nyquist")


# ---------------------------------------------------------------------------
# one run
# ---------------------------------------------------------------------------

def _noise_seeds(seed: int) -> tuple[int, int]:
    a, b = np.random.SeedSequence(seed).generate_state(2, dtype=np.uint64)
    return int(a), int(b)


def _with_onset(spec, onset: float, duration: float):
    if onset <= 0 or isinstance(spec, Gated):
        return spec
    return Gated(spec, ((onset, duration),))


def _inject(pair: CouplingPair, spec, fs: float, duration: float) -> tuple[np.ndarray, np.ndarray]:
    """Primary and reference wire voltages for the attack ``spec``."""
    try:
        primary_spec = apply_to_spec(pair.t_c, spec)
    except InvalidSpec:
        primary = apply(pair.t_c, synthesize(spec, fs, duration)).samples
        ref_tf = TransferFunction(1.0 / pair.k, (), pair.skew)
        return primary, apply(ref_tf, Waveform(primary, fs)).samples
    primary = synthesize(primary_spec, fs, duration).samples
    if pair.skew == 0:
        return primary, primary * (1.0 / pair.k)
    ref_spec = apply_to_spec(TransferFunction(1.0 / pair.k, (), pair.skew), primary_spec)
    return primary, synthesize(ref_spec, fs, duration).samples


def block_average(w: Waveform, target_rate: float) -> Waveform:
    """Mean over blocks of ``m`` samples, ``m`` the largest divisor of ``len(w)``
    with ``rate/m >= target_rate``. Its response has nulls at every multiple
    of the new rate, so band-limited content does not alias in."""
    n = len(w)
    m = max(1, int(w.sample_rate // target_rate))
    while m > 1 and n % m:
        m -= 1
    if m == 1:
        return w
    return Waveform(w.samples.reshape(-1, m).mean(axis=1), w.sample_rate / m, w.t0)


def _tone_snr_db(w: Waveform, spectrum, analysis: Analysis) -> float:
    tone = band_power(w, analysis.f_malicious, analysis.bandwidth, spectrum)
    floor = np.mean([band_power(w, c, analysis.bandwidth, spectrum) for c in _NOISE_REF_CENTERS])
    if floor <= 0:
        return math.inf if tone > 0 else -math.inf
    if tone <= 0:
        return -math.inf
    return 10 * math.log10(tone / floor)


def run_scenario(cfg: ScenarioConfig, keep_waveforms: bool = False):
    """Simulate one run.

    Control signal and its reference copy go out on two wires; the attack
    couples into both; the conditioner sees the primary wire; the detection
    amplifier sees the pair. Returns a :class:`RunResult` (and a dict of the
    intermediate waveforms when ``keep_waveforms``).
    """
    validate(cfg)
    fs, dur = float(cfg.sample_rate), float(cfg.duration)
    legit = synthesize(cfg.legit, fs, dur).samples
    onset = None
    if cfg.attack is not None:
        onset = float(cfg.attack.onset)
        spec = _with_onset(cfg.attack.spec, onset, dur)
        primary, reference = _inject(cfg.coupling, spec, fs, dur)
        v_plus = legit + primary
        del primary
        v_minus = legit + reference
        del reference
    else:
        v_plus = legit
        v_minus = legit
    del legit
    v_plus_w, v_minus_w = Waveform(v_plus, fs), Waveform(v_minus, fs)

    cond_seed, amp_seed = _noise_seeds(cfg.seed)
    cond = cfg.conditioner
    cond_noise = NoiseModel(getattr(cond, "noise_sigma", 0.0), cond_seed)
    drive = devices.conditioner(cond, v_plus_w, cond_noise)
    amp = cfg.detection_amp
    o = devices.diffamp(amp, v_plus_w, v_minus_w, NoiseModel(amp.noise_sigma, amp_seed))
    if not keep_waveforms:
        del v_plus, v_minus, v_plus_w, v_minus_w

    outcome = detect(o, cfg.detector, onset)
    x = drive.samples
    preview = {"min": float(x.min()), "max": float(x.max()), "mean": float(x.mean()),
               "rms": float(np.sqrt(np.mean(x * x)))}
    impact = duty = snr = None
    an = cfg.analysis
    if cfg.system == SPEAKER:
        low = block_average(drive, an.analysis_rate)
        spectrum = power_spectrum(low)
        impact = impact_db(low, an.f_legit, an.f_malicious, an.bandwidth, spectrum)
        snr = _tone_snr_db(low, spectrum, an)
    else:
        duty = motor_duty(cfg, drive)
    result = RunResult(outcome, impact, duty, preview, snr, fs, float(np.max(np.abs(o.samples))))
    if keep_waveforms:
        return result, {"drive": drive, "diffamp": o, "v_plus": v_plus_w, "v_minus": v_minus_w}
    return result


def _pwm_of(spec) -> Pwm | None:
    if isinstance(spec, Pwm):
        return spec
    if isinstance(spec, Sum):
        for p in spec.parts:
            found = _pwm_of(p)
            if found is not None:
                return found
    return None


def motor_duty(cfg: ScenarioConfig, drive: Waveform) -> float:
    """Duty cycle of the driver output over the last few whole PWM periods."""
    pwm = _pwm_of(cfg.legit)
    mid = (cfg.conditioner.v_low + cfg.conditioner.v_high) / 2
    if pwm is None:
        return duty_cycle(drive, mid)
    span = cfg.analysis.duty_periods / pwm.f
    n = int(round(span * drive.sample_rate))
    n = min(n, len(drive))
    return duty_cycle(drive.with_samples(drive.samples[len(drive) - n:]), mid)


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

# Calibration constants. None of these are measured device values: the
# rectification coefficients, noise levels and wire modes are tuned so the
# simulated systems land on the reported thresholds (2.4 mV speaker, 0.17 mV
# motor), the -52.7 dB no-attack impact and the qualitative frequency trends.
SPEAKER_DIFFAMP = DiffAmpModel(gain=150.0, f_max=10e3, a2=5.0, feedback_exponent=2.0,
                               f_parasitic=5e9, rails=4.9, noise_sigma=0.5e-3)
MOTOR_DIFFAMP = DiffAmpModel(gain=1.0, f_max=500e3, a2=1e-4, feedback_exponent=2.0,
                             f_parasitic=5e9, rails=13.0, noise_sigma=0.0285e-3)
SPEAKER_AMP = AudioAmp(gain=20.0, f_band=100e3, a2=18.0, rails=4.5, feedback_exponent=2.0,
                       f_parasitic=1e9, noise_sigma=0.085)
MOTOR_DRIVER = MotorDriver(v_threshold=1.1055, rect_coeff=-0.1, f_band=2e6, v_low=0.0,
                           v_high=3.3, f_parasitic=150e6)

# broad, staggered modes: efficient pickup at a few frequencies, falling overall
SPEAKER_WIRE = TransferFunction(0.25, (Mode(1e6, 0.5, 0.5), Mode(12e6, 0.7, 0.35),
                                       Mode(120e6, 1.0, 0.25), Mode(600e6, 2.0, 0.12)))
MOTOR_WIRE = TransferFunction(20.0, (Mode(60e6, 5.0, 4.0), Mode(85e6, 8.0, 2.0)))

DEVICE_PRESETS = {
    "ad623-like": SPEAKER_DIFFAMP,
    "ad629-like": MOTOR_DIFFAMP,
    "lm386-like": SPEAKER_AMP,
    "drv8833-like": MOTOR_DRIVER,
}

SPEAKER_DURATION = 4e-3
MOTOR_PWM_F = 20e3
MOTOR_DUTY = 0.7
MOTOR_GATE_FRACTION = 0.2
MOTOR_DURATION = 20 / MOTOR_PWM_F

SPEAKER_AMPLITUDES = (0.1, 0.3, 0.5, 0.7)
MOTOR_AMPLITUDES = (0.9, 1.1, 1.3)
MOTOR_FREQS = tuple(float(f) for f in np.linspace(30e6, 90e6, 7))


def rate_for(freq: float, duration: float, floor: float = 0.0) -> float:
    """Smallest rate >= 10x ``freq`` (and >= ``floor``) giving whole MHz multiples
    when possible, and always a whole number of samples over ``duration``."""
    need = max(10 * freq, floor)
    step = 1e6 if need >= 1e6 else 1.0 / duration
    rate = math.ceil(need / step - 1e-9) * step
    if abs(rate * duration - round(rate * duration)) > 1e-6:
        rate = math.ceil(need * duration - 1e-9) / duration
    return float(rate)


def speaker_preset(carrier_f: float = 300e6, amplitude_pp: float = 0.7,
                   attack: bool = True) -> ScenarioConfig:
    """Speaker system: 5 kHz audio, LM386-like amplifier, AD623-like detector (G = 150).

    The attack is an AM carrier with a 6 kHz malicious tone at 50 % depth.
    """
    spec = Am(carrier_f, amplitude_pp, 6e3, 0.5)
    rate = rate_for(carrier_f + 6e3, SPEAKER_DURATION, floor=2e6) if attack else 2e6
    return ScenarioConfig(
        system=SPEAKER,
        legit=Sine(5e3, 0.2),
        conditioner=SPEAKER_AMP,
        detection_amp=SPEAKER_DIFFAMP,
        coupling=CouplingPair(SPEAKER_WIRE, k=10.0),
        attack=AttackConfig(spec, 0.0) if attack else None,
        detector=DetectorConfig(epsilon=2.4e-3),
        sample_rate=rate,
        duration=SPEAKER_DURATION,
        seed=1,
        analysis=Analysis(5e3, 6e3, 500.0, 5),
    )


def motor_gates(duration: float = MOTOR_DURATION, f_pwm: float = MOTOR_PWM_F,
                duty: float = MOTOR_DUTY, fraction: float = MOTOR_GATE_FRACTION) -> tuple:
    """On-windows covering the last ``fraction`` of every high interval."""
    period = 1.0 / f_pwm
    n = int(round(duration * f_pwm))
    return tuple((i * period + duty * (1 - fraction) * period, i * period + duty * period)
                 for i in range(n))


def motor_preset(carrier_f: float = 60e6, amplitude_pp: float = 1.1,
                 attack: bool = True) -> ScenarioConfig:
    """Motor system: 20 kHz PWM at 70 % duty, DRV8833-like driver, AD629-like
    unity-gain detector. The attack radiates during the last 20 % of every
    high interval, pulling the driver low."""
    gates = motor_gates()
    spec = Gated(Sine(carrier_f, amplitude_pp), gates)
    return ScenarioConfig(
        system=MOTOR,
        legit=Pwm(MOTOR_PWM_F, MOTOR_DUTY, 0.0, 3.3),
        conditioner=MOTOR_DRIVER,
        detection_amp=MOTOR_DIFFAMP,
        coupling=CouplingPair(MOTOR_WIRE, k=10.0),
        attack=AttackConfig(spec, gates[0][0]) if attack else None,
        detector=DetectorConfig(epsilon=0.17e-3),
        sample_rate=1e9,
        duration=MOTOR_DURATION,
        seed=2,
        analysis=Analysis(duty_periods=5, analysis_rate=100e6),
    )


def expected_attacked_duty(duty: float = MOTOR_DUTY, fraction: float = MOTOR_GATE_FRACTION) -> float:
    return duty * (1 - fraction)


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepGrid:
    freqs: tuple
    amplitudes: tuple
    repeats: int = 1
    include_no_attack: int = 0

    def __post_init__(self):
        object.__setattr__(self, "freqs", tuple(float(f) for f in self.freqs))
        object.__setattr__(self, "amplitudes", tuple(float(a) for a in self.amplitudes))
        if self.repeats < 1:
            raise ConfigError("grid.repeats", "must be >= 1")
        if self.include_no_attack < 0:
            raise ConfigError("grid.include_no_attack", "must be >= 0")
        if not (self.freqs and self.amplitudes) and not self.include_no_attack:
            raise ConfigError("grid", "grid is empty")


@dataclass(frozen=True)
class SweepRow:
    f: float | None
    amplitude: float | None
    seed: int
    result: RunResult | None
    error: str | None = None

    @property
    def attack(self) -> bool:
        return self.f is not None


@dataclass
class SweepReport:
    system: str
    rows: list
    tpr: float | None
    fpr: float | None
    metadata: dict

    # --- emission -----------------------------------------------------------

    def csv_text(self) -> str:
        metric = "impact_db" if self.system == SPEAKER else "duty"
        buf = io.StringIO()
        buf.write(f"# config_hash={self.metadata['config_hash']}\n")
        buf.write(f"f_hz,amp_v,seed,detected,latency_s,peak_v,dc_v,{metric},error\n")
        for r in self.rows:
            if r.result is None:
                cells = ["", "", "", "", ""]
            else:
                o = r.result.outcome
                m = r.result.impact_db if self.system == SPEAKER else r.result.duty_cycle
                cells = [str(int(o.detected)), _num(o.latency), _num(o.peak), _num(o.dc_offset), _num(m)]
            err = (r.error or "").replace(",", ";").replace("\n", " ")
            buf.write(",".join([_num(r.f), _num(r.amplitude), str(r.seed), *cells, err]) + "\n")
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "system": self.system,
            "tpr": self.tpr,
            "fpr": self.fpr,
            "n_attack": sum(1 for r in self.rows if r.attack),
            "n_no_attack": sum(1 for r in self.rows if not r.attack),
            "n_errors": sum(1 for r in self.rows if r.error),
            "config_hash": self.metadata["config_hash"],
            "metadata": self.metadata,
        }

    def json_text(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True) + "\n"

    @property
    def n_errors(self) -> int:
        return sum(1 for r in self.rows if r.error)


def _num(v) -> str:
    if v is None:
        return ""
    return repr(float(v))


def snap(freq: float, duration: float) -> float:
    """Nearest frequency with a whole number of cycles in ``duration``."""
    return round(freq * duration) / duration


def _retune(spec, f: float, amp: float):
    if isinstance(spec, Sine):
        return replace(spec, f=f, amplitude_pp=amp)
    if isinstance(spec, Am):
        return replace(spec, carrier_f=f, carrier_amplitude_pp=amp)
    if isinstance(spec, Gated):
        return replace(spec, inner=_retune(spec.inner, f, amp))
    raise ConfigError("attack.spec", f"sweep cannot retune a {type(spec).__name__} attack")


def cell_seed(base_seed: int, key: tuple) -> int:
    """64-bit per-cell seed from the base seed and the cell's grid index."""
    ss = np.random.SeedSequence(int(base_seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def cell_config(base: ScenarioConfig, f: float | None, amp: float | None, seed: int) -> ScenarioConfig:
    """Base config retuned to one grid cell (``f is None`` means no attack).

    Each cell runs at 10x its own highest frequency, never below the quiet
    rate; the base ``sample_rate`` only governs single runs.
    """
    if f is None:
        return replace(base, attack=None, seed=seed, sample_rate=quiet_rate(base))
    if base.attack is None:
        raise ConfigError("attack", "sweep with frequencies needs an attack template")
    spec = _retune(base.attack.spec, f, amp)
    top = max(spec_frequencies(spec) + spec_frequencies(base.legit))
    rate = rate_for(top, base.duration, floor=quiet_rate(base))
    return replace(base, attack=replace(base.attack, spec=spec), sample_rate=rate, seed=seed)


def quiet_rate(base: ScenarioConfig) -> float:
    """Rate for attack-free runs: the analysis rate, raised if the legitimate
    signal needs more, on a whole-sample grid."""
    top = max(spec_frequencies(base.legit), default=0.0)
    return rate_for(top, base.duration, floor=base.analysis.analysis_rate)


def config_hash(base: ScenarioConfig, grid: SweepGrid | None = None) -> str:
    from .config import scenario_to_dict, grid_to_dict

    doc = {"scenario": scenario_to_dict(base)}
    if grid is not None:
        doc["grid"] = grid_to_dict(grid)
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def default_workers() -> int:
    raw = os.environ.get("EMSHIELD_THREADS")
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ConfigError("EMSHIELD_THREADS", f"not an integer: {raw!r}") from None
        if n < 1:
            raise ConfigError("EMSHIELD_THREADS", "must be a positive integer")
        return n
    return 1


def _run_cell(args):
    cfg, f, amp, seed = args
    try:
        return SweepRow(f, amp, seed, run_scenario(cfg))
    except EmShieldError as exc:
        return SweepRow(f, amp, seed, None, f"{type(exc).__name__}: {exc}")


def run_sweep(base: ScenarioConfig, grid: SweepGrid, workers: int | None = None) -> SweepReport:
    """Run every (frequency, amplitude, repeat) cell plus the attack-free runs.

    Rows come back in grid order whatever the worker count; every cell draws
    its noise from a seed derived from the base seed and its grid index.
    """
    workers = default_workers() if workers is None else int(workers)
    if workers < 1:
        raise ConfigError("workers", "must be >= 1")
    snapped = [snap(f, base.duration) for f in grid.freqs]
    jobs = []
    for fi, f in enumerate(snapped):
        for ai, a in enumerate(grid.amplitudes):
            for ri in range(grid.repeats):
                seed = cell_seed(base.seed, (0, fi, ai, ri))
                jobs.append((cell_config(base, f, a, seed), f, a, seed))
    for j in range(grid.include_no_attack):
        seed = cell_seed(base.seed, (1, j))
        jobs.append((cell_config(base, None, None, seed), None, None, seed))

    if workers == 1:
        rows = [_run_cell(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_cell, jobs))

    att = [r for r in rows if r.attack and r.result is not None]
    clean = [r for r in rows if not r.attack and r.result is not None]
    tpr = sum(r.result.outcome.detected for r in att) / len(att) if att else None
    fpr = sum(r.result.outcome.detected for r in clean) / len(clean) if clean else None
    metadata = {
        "config_hash": config_hash(base, grid),
        "requested_freqs_hz": list(grid.freqs),
        "snapped_freqs_hz": snapped,
        "sample_rates_hz": sorted({j[0].sample_rate for j in jobs}),
        "window_s": base.duration,
        "analysis": {"f_legit": base.analysis.f_legit, "f_malicious": base.analysis.f_malicious,
                     "bandwidth": base.analysis.bandwidth,
                     "duty_periods": base.analysis.duty_periods,
                     "analysis_rate": base.analysis.analysis_rate},
    }
    return SweepReport(base.system, rows, tpr, fpr, metadata)


@dataclass(frozen=True)
class Calibration:
    epsilon: float
    runs: int
    margin: float
    worst_peak: float
    mean_peak: float
    std_peak: float
    floor_applied: bool
    config_hash: str

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "runs": self.runs,
            "margin": self.margin,
            "floor_applied": self.floor_applied,
            "noise": {"worst_peak": self.worst_peak, "mean_peak": self.mean_peak,
                      "std_peak": self.std_peak},
            "config_hash": self.config_hash,
        }


def calibrate(base: ScenarioConfig, runs: int = 50, margin: float = 1.2,
              workers: int | None = None, floor: float = 1e-6) -> Calibration:
    """Threshold from ``runs`` attack-free runs of ``base``: ``margin`` times
    the largest ``|o|`` seen, but never below ``floor``.

    Calibration seeds come from their own branch of the base seed, so they
    never coincide with the no-attack rows of a sweep.
    """
    if runs < 1:
        raise ConfigError("runs", "must be >= 1")
    if margin < 1:
        raise ConfigError("margin", "must be >= 1")
    workers = default_workers() if workers is None else int(workers)
    cfgs = [cell_config(base, None, None, cell_seed(base.seed, (2, j))) for j in range(runs)]

    def one(cfg):
        return run_scenario(cfg).max_abs_output

    if workers == 1:
        peaks = [one(c) for c in cfgs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            peaks = list(pool.map(one, cfgs))
    peaks = np.array(peaks)
    eps = margin * float(peaks.max())
    floored = eps < floor
    if floored:
        log.warning("calibrated threshold %.3g V is below the floor; using %.3g V", eps, floor)
        eps = floor
    return Calibration(eps, runs, margin, float(peaks.max()), float(peaks.mean()),
                       float(peaks.std()), bool(floored), config_hash(base))
