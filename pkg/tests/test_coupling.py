import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from emshield.coupling import (
    SPEED_OF_LIGHT,
    CouplingPair,
    Mode,
    TransferFunction,
    apply,
    apply_to_spec,
    couple_pair,
    injected_amplitude_from_power,
    lorentzian,
    wire_resonant_frequency,
)
from emshield.errors import DegenerateK, EmptyWaveform, InvalidLength, InvalidSpec, NegativeInput
from emshield.waveform import Am, Gated, Pwm, Sine, Waveform, peak_amplitude, synthesize

ULP = np.finfo(float).eps


def _noise(n=4096, seed=0):
    return Waveform(np.random.default_rng(seed).standard_normal(n), 1e6)


def test_identity_is_bit_exact():
    w = _noise()
    out = apply(TransferFunction(), w)
    assert out.samples.tobytes() == w.samples.tobytes()


def test_scalar_half_gain():
    w = _noise()
    assert np.array_equal(apply(TransferFunction(0.5), w).samples, w.samples * 0.5)


def test_single_mode_magnitude():
    tf = TransferFunction(1.0, (Mode(100e6, 10.0, 5.0),))
    assert tf.magnitude(100e6) == pytest.approx(6.0, rel=1e-12)
    assert tf.magnitude(200e6) < 1.5
    # oracle: 1 + 5 / (1 + 100 (2 - 1/2)^2)
    assert tf.magnitude(200e6) == pytest.approx(1 + 5 / 226, rel=1e-12)


def test_single_mode_applied_to_tones():
    tf = TransferFunction(1.0, (Mode(100e6, 10.0, 5.0),))
    fs, dur = 2e9, 2e-6
    for f, gain in ((100e6, 6.0), (200e6, 1 + 5 / 226)):
        out = apply(tf, synthesize(Sine(f, 2.0, np.pi / 2), fs, dur))
        mid = out.samples[len(out) // 4: 3 * len(out) // 4]
        assert np.abs(mid).max() == pytest.approx(gain, rel=0.01)


def test_lorentzian_shape():
    assert lorentzian(0.0, 10.0, 3.0) == 0.0
    assert lorentzian(10.0, 10.0, 3.0) == 1.0
    assert lorentzian(5.0, 10.0, 3.0) == pytest.approx(lorentzian(20.0, 10.0, 3.0))


def test_apply_keeps_length_and_rejects_empty():
    tf = TransferFunction(1.0, (Mode(1e5, 2.0, 1.0),), 1e-6)
    w = _noise(1001)
    assert len(apply(tf, w)) == 1001
    with pytest.raises(EmptyWaveform):
        apply(tf, Waveform(np.zeros(0), 1.0))


def test_delay_shifts_samples():
    w = Waveform(np.r_[np.zeros(10), 1.0, np.zeros(53)], 1.0)
    out = apply(TransferFunction(1.0, (), 5.0), w)
    assert np.argmax(out.samples) == 15
    assert out.samples[15] == pytest.approx(1.0, abs=1e-12)


def test_zero_padding_prevents_wraparound():
    # a delayed trace must not wrap its tail to the start
    w = Waveform(np.r_[np.zeros(50), np.ones(14)], 1.0)
    out = apply(TransferFunction(1.0, (), 20.0), w)
    assert np.abs(out.samples[:60]).max() < 1e-12


@given(a=st.floats(-5, 5), b=st.floats(-5, 5), seed=st.integers(0, 1000))
def test_linearity(a, b, seed):
    tf = TransferFunction(0.3, (Mode(2e5, 3.0, 2.0), Mode(4e4, 1.0, 0.5)), 3e-6)
    w1, w2 = _noise(512, seed), _noise(512, seed + 1)
    lhs = apply(tf, w1.with_samples(a * w1.samples + b * w2.samples)).samples
    rhs = a * apply(tf, w1).samples + b * apply(tf, w2).samples
    scale = max(np.abs(lhs).max(), np.abs(rhs).max(), 1e-300)
    assert np.abs(lhs - rhs).max() <= 1e-9 * scale


@given(f_res=st.floats(1e3, 1e9), q=st.floats(0.5, 50), bb=st.floats(0, 1),
       ratio=st.floats(10, 1000), x=st.floats(0.5, 2.0))
def test_resonance_selectivity(f_res, q, bb, ratio, x):
    tf = TransferFunction(bb, (Mode(f_res, q, max(ratio * bb, 1e-3)),))
    assert tf.magnitude(f_res) >= tf.magnitude(x * f_res)


# --- couple_pair ---------------------------------------------------------------

def test_pair_k2_halves_difference():
    w = synthesize(Sine(1e3, 2.0), 1e5, 10e-3)
    p, r = couple_pair(w, CouplingPair(TransferFunction(), 2.0))
    assert peak_amplitude(p.with_samples(p.samples - r.samples)) == pytest.approx(0.5, rel=1e-12)


def test_pair_large_k_difference_is_primary():
    w = _noise()
    p, r = couple_pair(w, CouplingPair(TransferFunction(), 1e9))
    d = p.samples - r.samples
    assert np.abs(d - p.samples).max() <= 1e-8 * np.abs(p.samples).max()


def test_pair_reference_scaling_k10():
    tf = TransferFunction(0.7, (Mode(2e5, 3.0, 2.0),))
    p, r = couple_pair(_noise(), CouplingPair(tf, 10.0))
    # zero up to rounding of one multiply and one divide
    assert np.all(np.abs(p.samples - 10 * r.samples) <= 4 * ULP * np.abs(p.samples))


@given(k=st.floats(1.001, 1e6), seed=st.integers(0, 1000))
def test_pair_difference_identity(k, seed):
    p, r = couple_pair(_noise(256, seed), CouplingPair(TransferFunction(1.3), k))
    lhs = p.samples - r.samples
    rhs = (k - 1) / k * p.samples
    assert np.all(np.abs(lhs - rhs) <= 8 * ULP * np.abs(p.samples))


def test_pair_skew_delays_reference():
    w = Waveform(np.r_[np.zeros(10), 1.0, np.zeros(53)], 1.0)
    p, r = couple_pair(w, CouplingPair(TransferFunction(), 4.0, skew=3.0))
    assert np.argmax(r.samples) == 13
    assert r.samples[13] == pytest.approx(0.25, abs=1e-12)


@pytest.mark.parametrize("k", [1.0, 0.5, -2.0])
def test_pair_rejects_degenerate_k(k):
    with pytest.raises(DegenerateK):
        CouplingPair(TransferFunction(), k)


# --- tone-domain coupling -------------------------------------------------------

def test_apply_to_spec_matches_fft_apply_in_steady_state():
    tf = TransferFunction(0.25, (Mode(1e6, 0.5, 0.5), Mode(12e6, 0.7, 0.35)), 2e-7)
    spec = Am(5e6, 0.6, 0.25e6, 0.5)
    fs, dur = 100e6, 40e-6
    ref = apply(tf, synthesize(spec, fs, dur)).samples
    fast = synthesize(apply_to_spec(tf, spec), fs, dur).samples
    n = ref.size
    mid = slice(n // 4, 3 * n // 4)
    assert np.abs(ref[mid] - fast[mid]).max() < 1e-3 * np.abs(ref[mid]).max()


def test_apply_to_spec_scales_sine():
    tf = TransferFunction(1.0, (Mode(100e6, 10.0, 5.0),))
    out = apply_to_spec(tf, Sine(100e6, 1.0))
    assert out.amplitude_pp == pytest.approx(6.0)


def test_apply_to_spec_moves_gates_by_delay():
    g = apply_to_spec(TransferFunction(2.0, (), 1e-6), Gated(Sine(1e6, 1.0), ((0.0, 1e-5),)))
    assert g.windows == ((1e-6, 1e-5 + 1e-6),)
    assert g.inner.amplitude_pp == 2.0


def test_apply_to_spec_rejects_pwm():
    with pytest.raises(InvalidSpec):
        apply_to_spec(TransferFunction(), Pwm(1e3, 0.5))


def test_transfer_function_dict_round_trip():
    tf = TransferFunction(0.4, (Mode(1e6, 2.0, 0.3),), 1e-9)
    d = tf.to_dict()
    assert set(d) == {"gain", "modes", "delay_s"}
    assert TransferFunction.from_dict(d) == tf


# --- antenna arithmetic ------------------------------------------------------------

def test_wire_resonance_examples():
    assert wire_resonant_frequency(0.15) == pytest.approx(999.3e6, rel=1e-4)
    assert wire_resonant_frequency(1.0) == pytest.approx(149.9e6, rel=1e-3)
    assert wire_resonant_frequency(1.0) == SPEED_OF_LIGHT / 2


@given(length=st.floats(1e-3, 1e3))
def test_wire_resonance_inverse_proportional(length):
    assert wire_resonant_frequency(2 * length) == pytest.approx(wire_resonant_frequency(length) / 2)


@pytest.mark.parametrize("length", [0.0, -1.0])
def test_wire_resonance_rejects_nonpositive(length):
    with pytest.raises(InvalidLength):
        wire_resonant_frequency(length)


def test_injected_amplitude_examples():
    assert injected_amplitude_from_power(0.0, 0.3) == 0.0
    assert injected_amplitude_from_power(4.0, 0.1) == pytest.approx(0.2)
    assert injected_amplitude_from_power(8.0, 0.1) == pytest.approx(2 * injected_amplitude_from_power(2.0, 0.1))
    with pytest.raises(NegativeInput):
        injected_amplitude_from_power(-1.0, 0.1)
    with pytest.raises(NegativeInput):
        injected_amplitude_from_power(1.0, -0.1)


@given(p1=st.floats(0, 1e3), p2=st.floats(0, 1e3))
def test_injected_amplitude_monotone(p1, p2):
    lo, hi = sorted((p1, p2))
    assert injected_amplitude_from_power(lo, 0.2) <= injected_amplitude_from_power(hi, 0.2)
