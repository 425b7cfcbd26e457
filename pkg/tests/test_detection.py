import numpy as np
import pytest

from cdpnn.channel import NoiseSpec, add_noise
from cdpnn.detection import ElectricalTrace, align, find_alignment, photodetect, receiver_chain
from cdpnn.filters import bessel_magnitude_db
from cdpnn.waveform import ComplexEnvelope, generate_prbs, map_pam, modulate


@pytest.fixture(scope="module")
def btb():
    sym = map_pam(generate_prbs(10, 1, 2048), 4, "gray", 10e9)
    env = modulate(sym, 16, 20e9)
    return sym, env


def _scope(env):
    return receiver_chain(photodetect(env), 10e9)


def test_photodetect_basics():
    z = ComplexEnvelope(np.zeros(32, complex), 1e9)
    assert np.all(photodetect(z).samples == 0)
    c = ComplexEnvelope(np.full(32, 2.0 + 0j), 1e9)
    assert np.allclose(photodetect(c).samples, 4.0)
    rng = np.random.default_rng(0)
    x = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    e = ComplexEnvelope(x, 1e9)
    base = photodetect(e).samples
    assert np.allclose(photodetect(e.replace(x * np.exp(0.7j))).samples, base, rtol=1e-14)
    k = 1.3 - 0.4j
    assert np.allclose(photodetect(e.replace(k * x)).samples, abs(k) ** 2 * base, rtol=1e-13)


def test_receiver_wideband_is_transparent(btb):
    _, env = btb
    tr = photodetect(env)
    out = receiver_chain(tr, 10e9, 1e15, 1e15, 160e9)
    assert np.max(np.abs(out.samples - tr.samples)) < 1e-6


def test_receiver_dc_and_length(btb):
    sym, env = btb
    dc = ElectricalTrace(np.full(len(env.samples), 0.7), 160e9, 16)
    out = receiver_chain(dc, 10e9)
    assert np.allclose(out.samples, 0.7)
    assert len(out.samples) == len(sym) * 8 and out.samples_per_symbol == 8


def test_receiver_tone_matches_bessel_magnitude():
    n, fs = 1600, 160e9
    t = np.arange(n) / fs
    tone = ElectricalTrace(np.cos(2 * np.pi * 10e9 * t), fs, 16)
    out = receiver_chain(tone, 10e9, None, 16e9, 160e9)
    gain_db = 20 * np.log10(np.sqrt(2 * np.mean(out.samples**2)))
    assert gain_db == pytest.approx(bessel_magnitude_db(10e9, 16e9), abs=0.1)


def test_receiver_rejects_bad_rates(btb):
    _, env = btb
    tr = photodetect(env)
    with pytest.raises(ValueError):
        receiver_chain(tr, 10e9, scope_rate=75e9)
    with pytest.raises(ValueError):
        receiver_chain(tr, 10e9, scope_rate=320e9)


def test_alignment_zero_and_rolled(btb):
    sym, env = btb
    tr = _scope(env)
    assert find_alignment(tr, sym) == 0
    rolled = tr.replace(np.roll(tr.samples, 17 * 8))
    s = find_alignment(rolled, sym)
    assert s == 17 * 8  # the correction rolls the trace back by -17 symbols
    fixed = align(rolled, sym)
    assert np.array_equal(fixed.samples, tr.samples)
    # idempotent once corrected
    assert find_alignment(fixed, sym) == 0


def test_alignment_negative_shift_and_constant(btb):
    sym, env = btb
    tr = _scope(env)
    assert find_alignment(tr.replace(np.roll(tr.samples, -5 * 8)), sym) == -40
    with pytest.raises(ValueError):
        find_alignment(tr.replace(np.ones(len(tr.samples))), sym)
    with pytest.raises(ValueError):
        find_alignment(tr, sym, resolution="half")


def test_sample_resolution_search(btb):
    sym, env = btb
    tr = _scope(env)
    base = find_alignment(tr, sym, resolution="sample")
    assert abs(base) <= 1  # the filtered pulse peaks within one sample of k
    assert find_alignment(tr.replace(np.roll(tr.samples, 3)), sym, resolution="sample") == base + 3


def test_alignment_monte_carlo(btb):
    sym, env = btb
    rng = np.random.default_rng(2024)
    hits = 0
    n_sym = len(sym)
    for trial in range(100):
        shift = int(rng.integers(-n_sym // 2 + 1, n_sym // 2))  # whole symbols
        noisy = add_noise(env.replace(np.roll(env.samples, shift * 16)), NoiseSpec(25.0), trial)
        hits += find_alignment(_scope(noisy), sym) == shift * 8
    assert hits >= 99
