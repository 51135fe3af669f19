import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tactile_transfer.exceptions import (
    ConstantChannelError,
    CorruptFileError,
    EmptyInputError,
    InsufficientNonContactError,
    ShapeMismatchError,
    StatsMismatchError,
)
from tactile_transfer.signals import (
    ChannelStats,
    DriftCorrector,
    DriftModel,
    SignalFrame,
    SignalNormalizer,
    balance_dataset,
    compute_channel_stats,
    correct_drift,
    correct_drift_values,
    fit_drift,
    frames_to_table,
    infer_contact_flags,
    load_channel_stats,
    normalize_frame,
    normalize_values,
    read_signal_csv,
    save_channel_stats,
    table_to_frames,
    write_signal_csv,
)


def drifting_recording(seed=0, n=400, contact_every=4, noise=0.5):
    rng = np.random.default_rng(seed)
    default = rng.uniform(1500, 3500, 19)
    slope = rng.uniform(0.05, 0.2, 19) * rng.choice([-1, 1], 19)
    t = np.arange(n, dtype=float)
    contact = (np.arange(n) % contact_every) == contact_every - 1
    v = default + np.multiply.outer(t, slope) + noise * rng.standard_normal((n, 19))
    v[contact] += rng.uniform(100, 300, (contact.sum(), 19))
    return np.column_stack([t, contact.astype(float), v]), default


def stats_19(lo=0.0, hi=100.0, default=50.0):
    return ChannelStats(np.full(19, lo), np.full(19, hi), np.full(19, default))


def test_frame_requires_19_electrodes():
    with pytest.raises(ShapeMismatchError):
        SignalFrame(np.zeros(18))
    with pytest.raises(ValueError):
        SignalFrame(np.zeros(19), timestamp_index=-1)


def test_channel_stats_extrema_and_default():
    frames = [SignalFrame(np.full(19, 10.0) + np.arange(19), 0, False),
              SignalFrame(np.full(19, 20.0) + np.arange(19), 1, True),
              SignalFrame(np.full(19, 30.0) + np.arange(19), 2, True)]
    s = compute_channel_stats(frames)
    assert s.min[0] == 10 and s.max[0] == 30
    assert s.default_value[0] == 10


def test_default_is_mean_of_rest_frames():
    base = np.linspace(1, 2, 19)
    a, b, c = base.copy(), base.copy(), base.copy() + 50
    a[3], b[3] = 100, 102
    s = compute_channel_stats([SignalFrame(a, 0, False), SignalFrame(b, 1, False), SignalFrame(c, 2, True)])
    assert s.default_value[3] == 101


def test_channel_stats_errors():
    with pytest.raises(EmptyInputError):
        compute_channel_stats([SignalFrame(np.ones(19), 0, False)])
    same = [SignalFrame(np.ones(19), i, False) for i in range(3)]
    with pytest.raises(ConstantChannelError) as err:
        compute_channel_stats(same)
    assert err.value.channel == 0
    with pytest.raises(InsufficientNonContactError):
        compute_channel_stats([SignalFrame(np.arange(19.0) * k, k, True) for k in (1, 2)])


def test_normalization_anchor_values():
    s = stats_19(0, 100)
    assert np.all(normalize_values(np.zeros(19), s) == -1)
    assert np.all(normalize_values(np.full(19, 50.0), s) == 0)
    assert np.all(normalize_values(np.full(19, 75.0), s) == 0.5)


@pytest.mark.parametrize("seed", range(5))
def test_normalization_matches_brute_rescale(seed):
    rng = np.random.default_rng(seed)
    lo = rng.uniform(0, 100, 19)
    hi = lo + rng.uniform(1, 100, 19)
    s = ChannelStats(lo, hi, (lo + hi) / 2)
    v = lo + rng.uniform(0, 1, 19) * (hi - lo)
    expected = [2 * (v[i] - lo[i]) / (hi[i] - lo[i]) - 1 for i in range(19)]
    np.testing.assert_allclose(normalize_frame(SignalFrame(v), s).electrodes, expected, atol=1e-12)


def test_normalization_clamps_and_checks_channels():
    s = stats_19(0, 100)
    out = normalize_values(np.full(19, 500.0), s)
    assert np.all(out == 1)
    assert np.all(normalize_values(np.full(19, -500.0), s) == -1)
    with pytest.raises(StatsMismatchError):
        normalize_values(np.zeros(18), s)


@given(st.floats(-1e4, 1e4), st.floats(-1e4, 1e4))
@settings(max_examples=60, deadline=None)
def test_normalization_order_preserving(a, b):
    s = stats_19(-100, 100)
    lo, hi = min(a, b), max(a, b)
    assert np.all(normalize_values(np.full(19, lo), s) <= normalize_values(np.full(19, hi), s))
    assert np.all(np.abs(normalize_values(np.full(19, a), s)) <= 1)


def test_fit_drift_exact_line():
    t = np.arange(10.0)
    table = np.column_stack([t, np.zeros(10), np.tile((2 * t + 5)[:, None], (1, 19))])
    m = fit_drift(table)
    np.testing.assert_allclose(m.slope, 2, atol=1e-10)
    np.testing.assert_allclose(m.intercept, 5, atol=1e-9)


def test_fit_drift_flat_series():
    t = np.arange(6.0)
    table = np.column_stack([t, np.zeros(6), np.full((6, 19), 42.0)])
    m = fit_drift(table)
    np.testing.assert_allclose(m.slope, 0, atol=1e-12)
    np.testing.assert_allclose(m.intercept, 42, atol=1e-9)


@pytest.mark.parametrize("method", ["lstsq", "gd"])
def test_fit_drift_matches_normal_equations(method):
    table, _ = drifting_recording(seed=2, noise=5.0)
    rest = table[table[:, 1] == 0]
    A = np.column_stack([rest[:, 0], np.ones(len(rest))])
    coef = np.linalg.solve(A.T @ A, A.T @ rest[:, 2:])
    m = fit_drift(table, method=method)
    np.testing.assert_allclose(m.slope, coef[0], rtol=1e-6)
    np.testing.assert_allclose(m.intercept, coef[1], rtol=1e-6)


def test_fit_drift_needs_two_distinct_rest_frames():
    t = np.column_stack([[0.0, 0.0, 1.0], [0, 0, 1], np.ones((3, 19))])
    with pytest.raises(InsufficientNonContactError):
        fit_drift(t)
    with pytest.raises(ValueError):
        fit_drift(drifting_recording()[0], method="adam")


def test_correct_drift_cancels_the_line():
    s = stats_19(0, 1000, 300)
    m = DriftModel(np.full(19, 0.5), np.full(19, 10.0))
    f = SignalFrame(np.full(19, 0.5 * 7 + 10), 7, False)
    np.testing.assert_allclose(correct_drift(f, m, s).electrodes, 300, atol=1e-12)
    ident = DriftModel(np.zeros(19), np.full(19, 300.0))
    g = SignalFrame(np.arange(19.0), 3, True)
    np.testing.assert_array_equal(correct_drift(g, ident, s).electrodes, g.electrodes)


@pytest.mark.parametrize("seed", range(3))
def test_drift_correction_reduces_rest_deviation(seed):
    table, default = drifting_recording(seed)
    dc = DriftCorrector().fit(table)
    out = dc.transform(table)
    rest = table[:, 1] == 0
    before = np.abs(table[rest, 2:] - dc.stats_.default_value).mean()
    after = np.abs(out[rest, 2:] - dc.stats_.default_value).mean()
    assert after <= 0.1 * before
    assert np.abs(fit_drift(out).slope).max() <= 1e-6


def test_balance_dataset_counts():
    n = 1100
    table = np.column_stack([np.arange(n), (np.arange(n) >= 1000).astype(float), np.ones((n, 19))])
    assert len(balance_dataset(table, 0.1, seed=4)) == 100 + 100
    np.testing.assert_array_equal(balance_dataset(table, 1.0), table)
    only = balance_dataset(table, 0.0)
    assert len(only) == 100 and np.all(only[:, 1] == 1)
    frames = table_to_frames(table[995:1005])
    kept = balance_dataset(frames, 0.0)
    assert [f.timestamp_index for f in kept] == list(range(1000, 1005))
    with pytest.raises(ValueError):
        balance_dataset(table, 1.5)


@given(st.floats(0, 1), st.integers(0, 1000))
@settings(max_examples=40, deadline=None)
def test_balance_never_drops_contact_and_keeps_order(frac, seed):
    rng = np.random.default_rng(seed)
    n = 50
    table = np.column_stack([np.arange(n), rng.random(n) < 0.3, np.ones((n, 19))]).astype(float)
    out = balance_dataset(table, frac, seed)
    assert (out[:, 1] == 1).sum() == (table[:, 1] == 1).sum()
    assert np.all(np.diff(out[:, 0]) > 0)


def test_balance_is_seeded():
    table, _ = drifting_recording()
    np.testing.assert_array_equal(balance_dataset(table, 0.3, 9), balance_dataset(table, 0.3, 9))


def test_infer_contact_flags():
    s = stats_19(0, 100, 50)
    v = np.full((3, 19), 50.0)
    v[1, 4] += 0.5  # within 1% of range
    v[2, 4] += 5.0
    assert infer_contact_flags(v, s).tolist() == [False, False, True]


def test_normalizer_estimator_round_trip():
    table, _ = drifting_recording()
    nz = SignalNormalizer().fit(table)
    x = nz.transform(table)
    assert x.shape == (len(table), 19) and np.abs(x).max() <= 1
    np.testing.assert_allclose(nz.inverse_transform(x), table[:, 2:], rtol=1e-10)
    assert nz.get_params() == {}


def test_signal_csv_round_trip(tmp_path):
    table, _ = drifting_recording(n=20)
    write_signal_csv(tmp_path / "s.csv", table)
    text = (tmp_path / "s.csv").read_text()
    assert text.startswith("t,c,e00,") and "\r" not in text
    np.testing.assert_array_equal(read_signal_csv(tmp_path / "s.csv"), table)


def test_signal_csv_rejects_bad_header(tmp_path):
    (tmp_path / "bad.csv").write_text("a,b\n1,2\n")
    with pytest.raises(CorruptFileError):
        read_signal_csv(tmp_path / "bad.csv")


def test_channel_stats_file_round_trip(tmp_path):
    table, _ = drifting_recording()
    dc = DriftCorrector().fit(table)
    save_channel_stats(tmp_path / "st.csv", dc.stats_, dc.drift_)
    s, d = load_channel_stats(tmp_path / "st.csv")
    np.testing.assert_array_equal(s.min, dc.stats_.min)
    np.testing.assert_array_equal(s.default_value, dc.stats_.default_value)
    np.testing.assert_array_equal(d.slope, dc.drift_.slope)


def test_frames_table_round_trip():
    frames = [SignalFrame(np.arange(19.0) + i, i, bool(i % 2)) for i in range(4)]
    back = table_to_frames(frames_to_table(frames))
    assert [(f.timestamp_index, f.contact_flag) for f in back] == [(0, False), (1, True), (2, False), (3, True)]
    np.testing.assert_array_equal(correct_drift_values(np.ones(19), 0, DriftModel(np.zeros(19), np.ones(19)),
                                                       stats_19(0, 2, 1)), np.ones(19))
