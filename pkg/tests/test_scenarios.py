import logging
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from emshield import scenarios
from emshield.detector import DetectorConfig
from emshield.devices import DiffAmpModel
from emshield.errors import ConfigError, DegenerateError
from emshield.scenarios import (
    AttackConfig,
    SweepGrid,
    block_average,
    calibrate,
    cell_config,
    cell_seed,
    config_hash,
    motor_preset,
    rate_for,
    run_scenario,
    run_sweep,
    speaker_preset,
    validate,
)
from emshield.waveform import Pwm, Sine, Waveform, peak_amplitude


def test_presets_validate():
    sp, mo = speaker_preset(), motor_preset()
    validate(sp)
    validate(mo)
    assert sp.legit == Sine(5e3, 0.2)
    assert sp.detection_amp.gain == 150.0 and sp.coupling.k == 10.0
    assert mo.detection_amp.gain == 1.0
    assert isinstance(mo.legit, Pwm) and mo.legit.duty == 0.7
    assert min(scenarios.MOTOR_FREQS) == 30e6 and max(scenarios.MOTOR_FREQS) == 90e6
    assert sorted(scenarios.DEVICE_PRESETS) == ["ad623-like", "ad629-like", "drv8833-like", "lm386-like"]


def test_motor_gates_cover_last_fifth_of_high_time():
    gates = scenarios.motor_gates()
    assert len(gates) == 20
    a, b = gates[3]
    period = 1 / scenarios.MOTOR_PWM_F
    assert (b - a) == pytest.approx(0.2 * 0.7 * period)
    assert b - 3 * period == pytest.approx(0.7 * period)
    assert scenarios.expected_attacked_duty() == pytest.approx(0.56)


@pytest.mark.parametrize("freq,duration,floor,expected", [
    (1e6, 4e-3, 0.0, 10e6),
    (300.006e6, 4e-3, 2e6, 3001e6),
    (5e3, 4e-3, 2e6, 2e6),
    (1e3, 1e-2, 0.0, 10e3),
])
def test_rate_for(freq, duration, floor, expected):
    r = rate_for(freq, duration, floor)
    assert r == expected
    assert abs(r * duration - round(r * duration)) < 1e-6


@given(st.floats(1.0, 2e9), st.sampled_from([1e-3, 4e-3, 2.5e-3]))
def test_rate_for_invariants(freq, duration):
    r = rate_for(freq, duration)
    assert r >= 10 * freq * (1 - 1e-12)
    assert abs(r * duration - round(r * duration)) <= 1e-6 * max(1.0, r * duration)


@given(st.integers(1, 400), st.floats(1.0, 50.0))
def test_block_average_preserves_mean(n, ratio):
    x = np.random.default_rng(n).standard_normal(n * 6)
    w = Waveform(x, 1e6)
    low = block_average(w, 1e6 / ratio)
    assert low.samples.mean() == pytest.approx(x.mean(), abs=1e-12)
    assert low.sample_rate * low.duration == pytest.approx(len(low))
    assert low.duration == pytest.approx(w.duration)


# --- single runs -------------------------------------------------------------------------------

def _quiet(base, j=0):
    return cell_config(base, None, None, cell_seed(base.seed, (1, j)))


def test_speaker_without_attack():
    # one run reads a noise band about two bins wide, so the baseline is a seed average
    runs = [run_scenario(_quiet(speaker_preset(), j)) for j in range(20)]
    assert not any(r.outcome.detected for r in runs)
    assert np.mean([r.impact_db for r in runs]) == pytest.approx(-52.7, abs=3.0)
    assert max(r.max_abs_output for r in runs) < 2.4e-3


def test_speaker_strongest_attack():
    res, waves = run_scenario(speaker_preset(), keep_waveforms=True)
    base = run_scenario(_quiet(speaker_preset())).impact_db
    assert res.outcome.detected
    assert res.outcome.latency is not None and res.outcome.latency < 1e-3
    assert res.impact_db > base + 6
    assert res.tone_snr_db > 20
    assert set(waves) == {"drive", "diffamp", "v_plus", "v_minus"}


def test_motor_attack_cuts_duty():
    res = run_scenario(motor_preset())
    assert res.outcome.detected
    assert res.duty_cycle == pytest.approx(0.56, abs=0.028)


def test_motor_without_attack_keeps_duty():
    res = run_scenario(_quiet(motor_preset()))
    assert not res.outcome.detected
    assert res.duty_cycle == pytest.approx(0.7, abs=1e-3)


def test_run_is_deterministic():
    cfg = cell_config(speaker_preset(), 2e6, 0.5, 11)
    a, b = run_scenario(cfg), run_scenario(cfg)
    assert a == b
    c = run_scenario(replace(cfg, seed=12))
    assert c.max_abs_output != a.max_abs_output


def test_attack_onset_respected():
    cfg = cell_config(speaker_preset(), 2e6, 0.7, 3)
    cfg = replace(cfg, attack=AttackConfig(cfg.attack.spec, 2e-3))
    res = run_scenario(cfg)
    assert res.outcome.detected
    assert all(s >= 2e-3 for s, _ in res.outcome.events)


# --- validation ---------------------------------------------------------------------------------

@pytest.mark.parametrize("change,path", [
    (dict(system="drone"), "system"),
    (dict(conditioner=scenarios.MOTOR_DRIVER), "conditioner"),
    (dict(sample_rate=1e6), "sample_rate"),
    (dict(duration=1e-3), "duration"),
    (dict(duration=4.00005e-3), "duration"),
    (dict(attack=AttackConfig(Sine(1e6, 0.1), 5e-3)), "attack.onset"),
    (dict(detection_amp=DiffAmpModel(gain=150.0, f_max=5e6, a2=1.0)), "sample_rate"),
])
def test_validate_names_the_field(change, path):
    cfg = replace(cell_config(speaker_preset(), 1e6, 0.3, 0), **change)
    with pytest.raises(ConfigError) as info:
        validate(cfg)
    assert info.value.path == path


def test_motor_needs_twenty_pwm_periods():
    with pytest.raises(ConfigError) as info:
        validate(replace(motor_preset(), duration=0.5e-3, attack=None))
    assert info.value.path == "duration"


# --- sweeps ---------------------------------------------------------------------------------------

SMALL = SweepGrid((1e6, 3e6), (0.3, 0.7), repeats=2, include_no_attack=3)


def test_sweep_rows_and_rates():
    rep = run_sweep(speaker_preset(), SMALL, workers=1)
    assert len(rep.rows) == 2 * 2 * 2 + 3
    assert [r.f for r in rep.rows[:4]] == [1e6] * 4
    assert rep.rows[-1].f is None and not rep.rows[-1].attack
    assert rep.tpr == 1.0 and rep.fpr == 0.0
    assert rep.metadata["sample_rates_hz"] == [2e6, 11e6, 31e6]
    seeds = [r.seed for r in rep.rows]
    assert len(set(seeds)) == len(seeds)


def test_sweep_independent_of_workers():
    a = run_sweep(speaker_preset(), SMALL, workers=1)
    b = run_sweep(speaker_preset(), SMALL, workers=3)
    assert a.csv_text() == b.csv_text()
    assert a.json_text() == b.json_text()


def test_sweep_report_formats():
    rep = run_sweep(speaker_preset(), SweepGrid((1e6,), (0.7,)), workers=1)
    lines = rep.csv_text().splitlines()
    assert lines[0] == f"# config_hash={rep.metadata['config_hash']}"
    assert lines[1] == "f_hz,amp_v,seed,detected,latency_s,peak_v,dc_v,impact_db,error"
    assert lines[2].startswith("1000000.0,0.7,")
    mot = run_sweep(motor_preset(), SweepGrid((), (), include_no_attack=1), workers=1)
    assert mot.csv_text().splitlines()[1].endswith(",duty,error")
    assert mot.tpr is None and mot.fpr == 0.0


def test_sweep_error_rows(monkeypatch):
    real = scenarios.run_scenario

    def flaky(cfg, keep_waveforms=False):
        if cfg.attack is not None and cfg.attack.spec.carrier_f == 3e6:
            raise DegenerateError("boom")
        return real(cfg)

    monkeypatch.setattr(scenarios, "run_scenario", flaky)
    rep = run_sweep(speaker_preset(), SweepGrid((1e6, 3e6), (0.7,)), workers=2)
    assert rep.n_errors == 1
    bad = rep.rows[1]
    assert bad.result is None and bad.error == "DegenerateError: boom"
    assert rep.csv_text().splitlines()[3].endswith(",,,,,DegenerateError: boom")
    assert rep.tpr == 1.0


def test_sweep_snaps_to_whole_cycles():
    rep = run_sweep(speaker_preset(), SweepGrid((1.0002e6,), (0.7,)), workers=1)
    assert rep.metadata["requested_freqs_hz"] == [1.0002e6]
    assert rep.metadata["snapped_freqs_hz"] == [1.00025e6]


def test_config_hash_tracks_config():
    sp = speaker_preset()
    h = config_hash(sp, SMALL)
    assert h == config_hash(speaker_preset(), SMALL) and len(h) == 16
    assert h != config_hash(replace(sp, seed=2), SMALL)
    assert h != config_hash(sp, replace(SMALL, repeats=3))
    assert h != config_hash(replace(sp, detector=DetectorConfig(2.5e-3)), SMALL)


def test_cell_seed_branches():
    keys = [(0, 0, 0, 0), (0, 0, 0, 1), (1, 0), (2, 0)]
    seeds = {cell_seed(1, k) for k in keys}
    assert len(seeds) == 4
    assert cell_seed(1, (1, 0)) == cell_seed(1, (1, 0))
    assert cell_seed(1, (1, 0)) != cell_seed(2, (1, 0))


def test_grid_validation():
    with pytest.raises(ConfigError):
        SweepGrid((), ())
    with pytest.raises(ConfigError):
        SweepGrid((1e6,), (0.1,), repeats=0)


def test_workers_from_environment(monkeypatch):
    monkeypatch.setenv("EMSHIELD_THREADS", "4")
    assert scenarios.default_workers() == 4
    monkeypatch.setenv("EMSHIELD_THREADS", "zero")
    with pytest.raises(ConfigError):
        scenarios.default_workers()
    monkeypatch.setenv("EMSHIELD_THREADS", "0")
    with pytest.raises(ConfigError):
        scenarios.default_workers()
    monkeypatch.delenv("EMSHIELD_THREADS")
    assert scenarios.default_workers() == 1


# --- calibration ------------------------------------------------------------------------------------

def test_calibration_margin_over_worst_peak():
    cal = calibrate(speaker_preset(), runs=4, margin=1.2, workers=1)
    assert cal.epsilon == pytest.approx(1.2 * cal.worst_peak)
    assert cal.worst_peak >= cal.mean_peak > 0
    assert 1.2e-3 < cal.epsilon < 2.6e-3
    assert not cal.floor_applied


def test_calibration_floor_warns(caplog):
    silent = replace(speaker_preset(), detection_amp=replace(scenarios.SPEAKER_DIFFAMP, noise_sigma=0.0))
    with caplog.at_level(logging.WARNING, logger="emshield.scenarios"):
        cal = calibrate(silent, runs=2, workers=1, floor=1e-6)
    assert cal.epsilon == 1e-6 and cal.floor_applied
    assert any("floor" in r.message for r in caplog.records)


def test_calibration_rejects_bad_arguments():
    with pytest.raises(ConfigError):
        calibrate(speaker_preset(), runs=0)
    with pytest.raises(ConfigError):
        calibrate(speaker_preset(), margin=0.9)
