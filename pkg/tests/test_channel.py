import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cdpnn.channel import (FiberSpec, NoiseSpec, add_noise, cd_penalty_analytic, cd_penalty_measured,
                           fiber_transfer, notch_omega, propagate)
from cdpnn.detection import ElectricalTrace
from cdpnn.waveform import ComplexEnvelope

F125 = FiberSpec(125e3)


def _random_env(n=4096, fs=160e9, seed=0):
    rng = np.random.default_rng(seed)
    return ComplexEnvelope(rng.standard_normal(n) + 1j * rng.standard_normal(n), fs)


def test_transfer_at_dc_is_attenuation():
    h = fiber_transfer(np.array([0.0]), F125)
    assert h[0].imag == 0 and h[0].real == pytest.approx(10 ** (-25 / 20))


def test_transfer_phase_at_10ghz():
    h = fiber_transfer(np.array([2 * np.pi * 10e9]), F125.lossless())
    assert np.angle(h[0]) == pytest.approx(-5.1816 + 2 * np.pi, abs=1e-4)
    # unwrapped value from the mask definition
    assert 0.5 * F125.beta2_l * (2 * np.pi * 10e9) ** 2 == pytest.approx(-5.1816, abs=1e-4)


def test_lossless_transfer_unit_modulus():
    w = 2 * np.pi * np.fft.fftfreq(8192, 1 / 160e9)
    assert np.max(np.abs(np.abs(fiber_transfer(w, F125.lossless())) - 1)) < 1e-12


def test_zero_length_is_identity():
    env = _random_env()
    assert np.array_equal(propagate(env, FiberSpec(0.0)).samples, env.samples)


@given(st.floats(1e3, 300e3), st.floats(-0.05, 0.05))
@settings(max_examples=25, deadline=None)
def test_inverse_channel_and_energy(length, beta2):
    env = _random_env(2048, seed=7)
    fib = FiberSpec(length, beta2, 0.0)
    fwd = propagate(env, fib)
    back = propagate(fwd, fib.reversed_dispersion())
    x = env.samples
    assert np.sqrt(np.mean(np.abs(back.samples - x) ** 2) / np.mean(np.abs(x) ** 2)) < 1e-9
    assert np.sum(np.abs(fwd.samples) ** 2) == pytest.approx(np.sum(np.abs(x) ** 2), rel=1e-9)


def test_gaussian_broadening_matches_closed_form():
    fs, n, t0 = 640e9, 2**15, 30e-12
    t = (np.arange(n) - n / 2) / fs
    env = ComplexEnvelope(np.exp(-t**2 / (2 * t0**2)).astype(complex), fs)
    out = propagate(env, F125.lossless())

    def rms(p):
        p = p / p.sum()
        mu = np.sum(t * p)
        return np.sqrt(np.sum((t - mu) ** 2 * p))

    expected = (t0 / np.sqrt(2)) * np.sqrt(1 + (F125.beta2_l / t0**2) ** 2)
    assert rms(np.abs(out.samples) ** 2) == pytest.approx(expected, rel=0.01)


def test_propagate_rejects_nonfinite():
    env = _random_env(16)
    object.__setattr__(env, "samples", np.array([np.inf] * 16, complex))
    with pytest.raises(ValueError):
        propagate(env, F125)


def test_vanishing_noise():
    env = _random_env()
    out = add_noise(env, NoiseSpec(300.0), 1)
    assert np.max(np.abs(out.samples - env.samples)) < 1e-10 * np.max(np.abs(env.samples))


def test_osnr_periodogram():
    n, fs = 2**18, 160e9
    env = ComplexEnvelope(np.ones(n, complex), fs)
    noise = add_noise(env, NoiseSpec(20.0), 11).samples - env.samples
    spec = np.abs(np.fft.fft(noise)) ** 2 / n**2
    f = np.fft.fftfreq(n, 1 / fs)
    in_band = spec[np.abs(f) < 12.5e9 / 2].sum()
    assert 10 * np.log10(in_band) == pytest.approx(-20.0, abs=0.2)


def test_noise_is_seeded():
    env = _random_env()
    a = add_noise(env, NoiseSpec(20.0), 5).samples
    b = add_noise(env, NoiseSpec(20.0), 5).samples
    c = add_noise(env, NoiseSpec(20.0), 6).samples
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_electrical_noise_and_type_checks():
    tr = ElectricalTrace(np.full(2**16, 2.0), 80e9, 8)
    spec = NoiseSpec(20.0, "electrical_awgn", 16e9)
    out = add_noise(tr, spec, 3)
    var = np.var(out.samples - tr.samples)
    assert var == pytest.approx(4.0 * 80e9 / (2 * 16e9 * 100), rel=0.03)
    with pytest.raises(TypeError):
        add_noise(tr, NoiseSpec(20.0), 3)
    with pytest.raises(ValueError):
        NoiseSpec(-1.0)
    with pytest.raises(ValueError):
        NoiseSpec(20.0, "thermal")


def test_analytic_penalty_notches():
    assert cd_penalty_analytic(F125, 2 * np.pi * 1e6) == pytest.approx(0.0, abs=1e-6)
    assert notch_omega(F125) / (2 * np.pi) / 1e9 == pytest.approx(5.51, abs=0.005)
    assert notch_omega(FiberSpec(25e3)) / (2 * np.pi) / 1e9 == pytest.approx(12.31, abs=0.005)
    # cos is zero at the notch up to rounding, so the penalty is huge or inf
    assert cd_penalty_analytic(F125, notch_omega(F125)) > 200
    w = np.linspace(1e9, 1e11, 50)
    assert np.allclose(cd_penalty_analytic(F125, w), cd_penalty_analytic(F125.reversed_dispersion(), w))
    with pytest.raises(ValueError):
        cd_penalty_analytic(F125, 0.0)


def test_measured_penalty_identity_and_fiber():
    f = np.arange(1, 301) * 50e6
    w = 2 * np.pi * f
    ident = cd_penalty_measured(lambda e: e, w)
    assert np.max(np.abs(ident)) < 0.1
    meas = cd_penalty_measured(lambda e: propagate(e, F125), w)
    ana = cd_penalty_analytic(F125, w)
    ok = ana < 20
    assert np.max(np.abs(meas[ok] - ana[ok])) < 0.5
    assert f[np.argmax(np.where(f < 8e9, meas, 0))] == pytest.approx(5.51e9, abs=0.1e9)


def test_measured_penalty_rejects_off_grid_tone():
    with pytest.raises(ValueError):
        cd_penalty_measured(lambda e: e, 2 * np.pi * 1.234567e9)
