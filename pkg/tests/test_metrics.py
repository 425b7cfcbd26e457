import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from cdpnn import metrics, oracles
from cdpnn.detection import ElectricalTrace
from cdpnn.metrics import LevelStats, ber, eye_diagram, level_stats, loss_l1, loss_l2, subsample, thresholds
from cdpnn.waveform import SymbolSequence


def _labels(n_levels=4, per=50, seed=0):
    lab = np.repeat(np.arange(n_levels), per)
    np.random.default_rng(seed).shuffle(lab)
    return lab


def _stats(e_left, e_right):
    n = len(e_left)
    z = np.zeros(n)
    return LevelStats(np.full(n, 10), z, z, np.asarray(e_left, float), np.asarray(e_right, float))


def test_subsample_indexing():
    tr = ElectricalTrace(np.arange(64.0), 80e9, 8)
    assert subsample(tr, 4).tolist() == list(range(4, 64, 8))
    assert np.array_equal(subsample(tr), subsample(tr, 4))
    assert np.all(subsample(ElectricalTrace(np.full(64, 2.5), 80e9, 8), 3) == 2.5)
    with pytest.raises(ValueError):
        subsample(tr, 8)


def test_tail_means_examples():
    st_ = level_stats(np.full(10, 0.7), np.zeros(10, int), 1)
    assert st_.e_left[0] == pytest.approx(0.7) and st_.e_right[0] == pytest.approx(0.7)
    g = np.random.default_rng(0).permutation(np.arange(1, 101) / 100)
    st_ = level_stats(g, np.zeros(100, int), 1)
    assert st_.e_left[0] == pytest.approx(0.055) and st_.e_right[0] == pytest.approx(0.955)


def test_gaussian_lower_decile():
    y = np.random.default_rng(1).normal(1.0, 0.1, 100_000)
    st_ = level_stats(y, np.zeros(len(y), int), 1)
    assert st_.e_left[0] == pytest.approx(1 - 1.755 * 0.1, rel=0.02)
    sig = level_stats(y, np.zeros(len(y), int), 1, method="sigma")
    assert sig.e_left[0] == pytest.approx(1 - 1.755 * 0.1, rel=0.02)


def test_level_stats_errors_and_invariants():
    lab = _labels()
    y = lab + 0.1 * np.random.default_rng(2).standard_normal(len(lab))
    st_ = level_stats(y, lab, 4)
    assert st_.counts.sum() == len(lab)
    assert np.all(st_.e_left[1:] <= st_.means[1:]) and np.all(st_.means <= st_.e_right + 1e-12)
    with pytest.raises(ValueError, match="level 2"):
        level_stats(y[lab != 2], lab[lab != 2], 4)
    with pytest.raises(ValueError):
        level_stats(y, lab, 4, method="median")


def test_loss_l1_examples():
    pts = np.arange(4.0)
    assert loss_l1(level_stats(np.repeat(pts, 10), np.repeat(np.arange(4), 10), 4)) == pytest.approx(-1.0)
    st_ = _stats([0.0, 0.5, 1.0, 2.0], [0.0, 1.2, 1.5, 2.5])
    assert loss_l1(st_) == pytest.approx(0.2)


@given(st.integers(0, 10_000), st.sampled_from([2, 4, 8]), st.floats(0.05, 1.0))
@settings(max_examples=30, deadline=None)
def test_loss_and_thresholds_match_bruteforce(seed, n_levels, sigma):
    lab = _labels(n_levels, 30, seed)
    y = lab + sigma * np.random.default_rng(seed + 1).standard_normal(len(lab))
    st_ = level_stats(y, lab, n_levels)
    assert loss_l1(st_) == pytest.approx(oracles.loss_l1_bruteforce(y, lab, n_levels), abs=1e-12)
    assert np.allclose(thresholds(st_).values, oracles.thresholds_bruteforce(y, lab, n_levels), atol=1e-12)
    # negative loss and increasing thresholds go together
    if loss_l1(st_) < 0:
        assert thresholds(st_).increasing


def test_loss_l2_constant_within_symbol():
    lab = _labels()
    y = lab + 0.1 * np.random.default_rng(3).standard_normal(len(lab))
    tr = ElectricalTrace(np.repeat(y, 8), 80e9, 8)
    assert loss_l2(tr, lab) == pytest.approx(2 * loss_l1(level_stats(y, lab, 4)))
    with pytest.raises(ValueError):
        loss_l2(tr, lab, k=7)


def test_threshold_examples():
    assert thresholds(_stats([0.0, 0.4], [0.2, 1.0])).values[0] == pytest.approx(0.3)
    st_ = level_stats(np.repeat(np.arange(4.0), 10), np.repeat(np.arange(4), 10), 4)
    assert np.allclose(thresholds(st_).values, [0.5, 1.5, 2.5])


def test_ber_floor_and_single_error():
    sym = SymbolSequence(np.tile(np.arange(4), 2250), 10e9, 4, "gray")
    y = sym.symbols.astype(float)
    res = ber(y, sym)
    assert res.errors == 0 and res.n_bits == 18_000 and res.at_floor
    assert res.value == pytest.approx(5.5e-5, rel=0.02)
    y2 = y.copy()
    y2[5] += 1.0  # level 1 read as level 2
    st_ = level_stats(y, sym)
    assert ber(y2, sym, st_).errors == 1


def test_ber_matches_loop_oracle():
    rng = np.random.default_rng(4)
    lab = _labels(4, 500, 4)
    y = lab + 0.3 * rng.standard_normal(len(lab))
    res = ber(y, lab, n_levels=4, bit_map="gray")
    assert (res.errors, res.n_bits) == oracles.ber_bruteforce(y, lab, 4)


def test_ber_overlap_handling():
    rng = np.random.default_rng(5)
    lab = _labels(4, 100, 5)
    # a wide level 1 pushes its right tail past the tight level 2
    y = np.where(lab == 1, rng.uniform(0.8, 3.8, len(lab)), lab + rng.uniform(-0.02, 0.02, len(lab)))
    st_ = level_stats(y, lab, 4)
    assert not thresholds(st_).increasing
    with pytest.raises(ValueError):
        ber(y, lab, st_, n_levels=4)
    fallback = ber(y, lab, st_, n_levels=4, on_overlap="means")
    mid = sorted(0.5 * (st_.means[:-1] + st_.means[1:]))
    ref = 0
    for v, s in zip(y, lab):
        decided = sum(v > t for t in mid)
        ref += sum(a != b for a, b in zip(oracles._gray_bits(int(s), 2), oracles._gray_bits(decided, 2)))
    assert fallback.errors == ref > 0
    with pytest.raises(ValueError):
        ber(y, lab, st_, n_levels=4, on_overlap="ignore")


def test_scale_equivariance():
    lab = _labels(4, 200, 6)
    y = lab + 0.2 * np.random.default_rng(6).standard_normal(len(lab))
    c = 3.7
    a, b = level_stats(y, lab, 4), level_stats(c * y, lab, 4)
    assert np.allclose(b.e_left, c * a.e_left) and np.allclose(b.e_right, c * a.e_right)
    assert np.allclose(thresholds(b).values, c * thresholds(a).values)
    assert loss_l1(b) == pytest.approx(c * loss_l1(a))
    assert ber(c * y, lab, b, n_levels=4).errors == ber(y, lab, a, n_levels=4).errors


def test_ber_matches_q_function():
    sigma = 0.225
    lab = _labels(4, 100_000, 7)
    y = lab + sigma * np.random.default_rng(7).standard_normal(len(lab))
    res = ber(y, lab, n_levels=4, bit_map="gray")
    # inner levels err on both sides; gray neighbours differ by one of two bits
    expected = 0.75 * norm.sf(0.5 / sigma)
    se = np.sqrt(expected / res.n_bits)
    assert expected >= 1e-3
    assert abs(res.value - expected) < 3 * se


def test_eye_diagram_shapes():
    const = eye_diagram(np.full(80, 1.5), 8)
    assert const.shape == (10, 12) and np.all(const == 1.5)
    per = np.tile(np.arange(8.0), 10)
    rows = eye_diagram(per, 8)
    assert np.all(rows == rows[0])
    assert rows[0, :2].tolist() == [6.0, 7.0]
    with pytest.raises(ValueError):
        eye_diagram(np.zeros(81), 8)


def test_export_and_histograms(tmp_path):
    lab = _labels()
    y = lab + 0.1 * np.random.default_rng(8).standard_normal(len(lab))
    h = metrics.level_histograms(y, lab, 16)
    assert h.shape == (16, 5) and h[:, 1:].sum() == len(lab)
    metrics.export_grid(tmp_path / "h.csv", h, "hist")
    assert np.allclose(np.loadtxt(tmp_path / "h.csv", delimiter=","), h)
