import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cdpnn.filters import bessel_response
from cdpnn.waveform import (PRBS_TAPS, ComplexEnvelope, SymbolSequence, demap_pam, generate_prbs, map_pam,
                            modulate, resample)


def lfsr_oracle(order, seed, n):
    """Plain list-based Fibonacci register; stage i holds bit i-1 of the seed."""
    reg = [(seed >> i) & 1 for i in range(order)]  # reg[0] is stage 1
    out = []
    for _ in range(n):
        out.append(reg[-1])
        fb = 0
        for t in PRBS_TAPS[order]:
            fb ^= reg[t - 1]
        reg = [fb] + reg[:-1]
    return out


def test_order3_visits_every_nonzero_state_once():
    seq = generate_prbs(3, 0b001).bits
    assert len(seq) == 7
    windows = {tuple(np.roll(seq, -m)[:3]) for m in range(7)}
    assert len(windows) == 7 and (0, 0, 0) not in windows


@pytest.mark.parametrize("order", [7, 9, 10, 11, 15])
def test_prbs_period_and_balance(order):
    bits = generate_prbs(order).bits
    period = 2**order - 1
    assert len(bits) == period
    assert bits.sum() == 2 ** (order - 1)
    # maximal length: no shorter period divides the sequence
    ext = np.concatenate([bits, bits])
    for d in (1, 3, 7, 31):
        if period % d == 0 and d < period:
            assert not np.array_equal(ext[d:d + period], bits)


def test_prbs11_matches_oracle():
    got = generate_prbs(11, 1, 32).bits.tolist()
    assert got == lfsr_oracle(11, 1, 32)


def test_prbs_recurrence():
    order = 10
    o = generate_prbs(order, 0x2F).bits.astype(int)
    taps = PRBS_TAPS[order]
    for m in range(order, 300):
        acc = 0
        for t in taps:
            acc ^= o[m - t]
        assert o[m] == acc


def test_prbs_extension_and_errors():
    b = generate_prbs(10, 5, 2048)
    assert len(b.bits) == 2048 and b.period == 1023
    assert np.array_equal(b.bits[1023:2046], b.bits[:1023])
    with pytest.raises(ValueError):
        generate_prbs(10, 0)
    with pytest.raises(ValueError):
        generate_prbs(2)


def test_gray_and_natural_maps():
    bits = [0, 0, 0, 1, 1, 1, 1, 0]
    assert map_pam(bits, 4, "gray").symbols.tolist() == [0, 1, 2, 3]
    assert map_pam([0, 0, 0, 1, 1, 0, 1, 1], 4, "natural").symbols.tolist() == [0, 1, 2, 3]
    with pytest.raises(ValueError):
        map_pam([0, 1, 1], 4)
    with pytest.raises(ValueError):
        map_pam([0, 1], 3)


@pytest.mark.parametrize("bit_map", ["gray", "natural"])
@pytest.mark.parametrize("n_levels", [2, 4, 8])
def test_map_demap_roundtrip(bit_map, n_levels):
    rng = np.random.default_rng(1)
    m = int(np.log2(n_levels))
    bits = rng.integers(0, 2, 10_000 - 10_000 % m)
    sym = map_pam(bits, n_levels, bit_map)
    assert np.array_equal(demap_pam(sym, n_levels, bit_map), bits)


def test_gray_neighbours_differ_by_one_bit():
    b = demap_pam(np.arange(4), 4, "gray").reshape(4, 2)
    assert all(np.sum(b[i] != b[i + 1]) == 1 for i in range(3))


def _syms(values, baud=10e9):
    return SymbolSequence(np.asarray(values), baud)


def test_modulate_zero_and_constant():
    z = modulate(_syms(np.zeros(64, int)))
    assert np.allclose(z.samples, 0)
    c = modulate(_syms(np.full(64, 3)))
    assert np.allclose(np.abs(c.samples), 1.0, atol=1e-12)
    assert c.sample_rate == 160e9 and c.samples_per_symbol == 16


def test_modulate_matches_fft_filter_oracle():
    sym = _syms(np.tile([0, 3], 64))
    env = modulate(sym, 16, 20e9)
    rect = np.repeat(np.sqrt([0.0, 1 / 3, 2 / 3, 1.0])[sym.symbols], 16)
    f = np.fft.fftfreq(len(rect), 1 / 160e9)
    ref = np.fft.ifft(np.fft.fft(rect) * bessel_response(f, 20e9))
    assert np.allclose(env.samples, ref, atol=1e-12)
    # symbol-centre swing is reduced relative to the rectangular train (1.0)
    swing = np.ptp(np.abs(env.samples[8::16]) ** 2)
    assert 0.99 < swing < 1.0


@given(st.floats(0.1, 10.0))
@settings(max_examples=20, deadline=None)
def test_modulate_homogeneous(c):
    rng = np.random.default_rng(3)
    sym = _syms(rng.integers(0, 4, 64))
    amps = np.sqrt([0.0, 1 / 3, 2 / 3, 1.0])
    a = modulate(sym, 16, 20e9, amps).samples
    b = modulate(sym, 16, 20e9, c * amps).samples
    # exact up to FFT round-off
    assert np.max(np.abs(b - c * a)) <= 1e-13 * c * np.max(np.abs(a))


def test_modulate_rejects_bad_levels():
    sym = _syms([0, 1, 2, 3])
    with pytest.raises(ValueError):
        modulate(sym, 16, 20e9, [0, 0.5, 0.4, 1])
    with pytest.raises(ValueError):
        modulate(sym, 2)


def test_envelope_rejects_nonfinite():
    with pytest.raises(ValueError):
        ComplexEnvelope(np.array([1, np.nan], complex), 1e9)


def _band_limited(n=4096, fs=160e9, band=10e9, seed=0):
    rng = np.random.default_rng(seed)
    spec = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    spec[np.abs(np.fft.fftfreq(n, 1 / fs)) > band] = 0
    return ComplexEnvelope(np.fft.ifft(spec), fs)


def test_resample_identity_and_roundtrip():
    env = _band_limited()
    assert resample(env, env.sample_rate) is env
    up = resample(env, 2 * env.sample_rate)
    back = resample(up, env.sample_rate)
    err = np.sqrt(np.mean(np.abs(back.samples - env.samples) ** 2) / np.mean(np.abs(env.samples) ** 2))
    assert err < 1e-9


def test_resample_preserves_in_band_spectrum():
    env = _band_limited()
    down = resample(env, 80e9)
    n_old, n_new = len(env.samples), len(down.samples)
    s_old = np.fft.fft(env.samples) / n_old
    s_new = np.fft.fft(down.samples) / n_new
    f_new = np.fft.fftfreq(n_new, 1 / 80e9)
    keep = np.abs(f_new) < 40e9 - 1e9
    idx = np.round(f_new[keep] / (160e9 / n_old)).astype(int) % n_old
    assert np.max(np.abs(s_new[keep] - s_old[idx])) < 1e-6 * np.max(np.abs(s_old))


def test_resample_detects_aliasing():
    env = _band_limited(band=30e9)
    with pytest.raises(ValueError, match="alias"):
        resample(env, 40e9)
