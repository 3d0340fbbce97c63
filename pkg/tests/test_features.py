import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from eegattn.features import (
    BinningParams,
    FeatureError,
    FeatureMatrix,
    FeatureParams,
    SmoothingParams,
    apply_scaler,
    bin_frequencies,
    fit_scaler,
    flatten,
    read_feature_matrix,
    running_average,
    to_decibels,
    write_feature_matrix,
)
from eegattn.spectral import Spectrogram, StftParams


def _spec(power, spacing=0.25, step=1.0, channels=None):
    power = np.asarray(power, dtype=float)
    frames, bins, ch = power.shape
    return Spectrogram(
        power=power,
        frame_times=np.arange(1, frames + 1) * step,
        freq_axis=np.arange(bins) * spacing,
        labels=np.zeros(frames, dtype=np.int8),
        channel_labels=tuple(channels or [f"c{i}" for i in range(ch)]),
        frame_step_s=step,
        subject_id="s1",
        trial_index=3,
    )


def loop_bins(power, spacing, size, lo, hi):
    """Average raw bins whose centre f satisfies a < f <= b for each band (a, b]."""
    freqs = np.arange(power.shape[1]) * spacing
    out = []
    a = lo
    while a < hi - 1e-12:
        b = a + size
        sel = [i for i, f in enumerate(freqs) if a + 1e-9 < f <= b + 1e-9]
        out.append(power[:, sel, :].mean(axis=1))
        a = b
    return np.stack(out, axis=1)


def test_36_bins_at_half_hz_spacing():
    spec = _spec(np.random.default_rng(0).random((3, 129, 7)), spacing=0.5)
    binned = bin_frequencies(spec, BinningParams())
    assert binned.power.shape == (3, 36, 7)
    assert flatten(binned).num_features == 252
    np.testing.assert_array_equal(binned.power, spec.power[:, 1:37, :])


def test_two_raw_bins_per_band_at_quarter_hz():
    power = np.random.default_rng(1).random((4, 257, 2))
    binned = bin_frequencies(_spec(power), BinningParams())
    assert binned.power.shape == (4, 36, 2)
    np.testing.assert_allclose(binned.power, loop_bins(power, 0.25, 0.5, 0.0, 18.0), rtol=1e-15)
    np.testing.assert_allclose(binned.power[:, 0, :], power[:, 1:3, :].mean(axis=1))
    assert binned.band_edges[0].tolist() == [0.0, 0.5]
    assert binned.band_edges[-1].tolist() == [17.5, 18.0]


def test_constant_power_binning():
    binned = bin_frequencies(_spec(np.full((2, 257, 1), 3.5)), BinningParams())
    assert np.all(binned.power == 3.5)


def test_incompatible_spacing():
    # w_L = 3 s gives 1/3 Hz raw spacing
    with pytest.raises(FeatureError, match="incompatible binning"):
        bin_frequencies(_spec(np.ones((1, 193, 1)), spacing=1 / 3), BinningParams())


def test_f_hi_beyond_nyquist():
    with pytest.raises(FeatureError, match="Nyquist"):
        bin_frequencies(_spec(np.ones((1, 33, 1)), spacing=0.5), BinningParams(f_range=(0, 18)))


def test_running_average_warmup_and_window():
    rng = np.random.default_rng(2)
    power = rng.random((40, 3, 2))
    out = running_average(_spec(power), SmoothingParams(15.0)).power
    assert SmoothingParams(15.0).window_frames(1.0) == 15
    np.testing.assert_allclose(out[4], power[0:5].mean(axis=0), rtol=1e-12)
    for i in range(40):
        np.testing.assert_allclose(out[i], power[max(0, i - 14) : i + 1].mean(axis=0), rtol=1e-12)


def test_running_average_constant_unchanged():
    out = running_average(_spec(np.full((20, 2, 1), 7.25)), SmoothingParams(15.0)).power
    np.testing.assert_allclose(out, 7.25, rtol=1e-15)


def test_window_frames_rounding():
    assert SmoothingParams(15.0).window_frames(10.0) == 2  # 1.5 rounds up
    assert SmoothingParams(15.0).window_frames(40.0) == 1


def test_decibels():
    spec = _spec(np.array([1.0, 100.0, 0.0]).reshape(1, 3, 1))
    db = to_decibels(spec).power.ravel()
    assert abs(db[0]) < 5e-12
    assert db[1] == pytest.approx(20.0, abs=1e-9)
    assert db[2] == 10.0 * np.log10(1e-12)


def test_flatten_layout():
    power = np.arange(2 * 3 * 2, dtype=float).reshape(2, 3, 2)
    spec = bin_frequencies(_spec(power, spacing=0.5), BinningParams(0.5, (0, 1.0)))
    fm = flatten(spec)
    assert fm.feature_names == [
        "ch:c0|band:0.0-0.5Hz",
        "ch:c0|band:0.5-1.0Hz",
        "ch:c1|band:0.0-0.5Hz",
        "ch:c1|band:0.5-1.0Hz",
    ]
    # channel-major: row = [c0 bins..., c1 bins...]
    assert fm.rows[0].tolist() == [power[0, 1, 0], power[0, 2, 0], power[0, 1, 1], power[0, 2, 1]]


def test_single_frame_single_channel_row():
    v = np.random.default_rng(3).random((1, 73, 1))
    spec = bin_frequencies(_spec(v, spacing=0.5), BinningParams())
    fm = flatten(spec)
    assert np.array_equal(fm.rows[0], spec.power[0, :, 0])


def test_featurized_corpus_width(small_features):
    assert small_features.num_features == 252
    assert set(np.unique(small_features.labels)) == {0, 1, 2}
    assert small_features.feature_names[0] == "ch:F3|band:0.0-0.5Hz"
    assert small_features.feature_names[-1] == "ch:Pz|band:17.5-18.0Hz"


def test_feature_params_dict():
    d = FeatureParams().as_dict()
    assert d["w_l"] == 4.0 and d["w_s"] == 128 and d["f_range"] == [0.0, 18.0]
    assert FeatureParams(stft=StftParams(w_l=2)).as_dict()["w_l"] == 2


def _fm(rows):
    n = len(rows)
    return FeatureMatrix(rows, np.zeros(n, int), np.array(["s1"] * n), np.ones(n, int), np.arange(n, dtype=float))


@settings(max_examples=50, deadline=None)
@given(
    arrays(np.float64, st.tuples(st.integers(2, 40), st.integers(1, 6)), elements=st.floats(-1e3, 1e3)),
    st.floats(0.1, 10),
)
def test_scaler_standardizes_training_columns(rows, spread):
    rows = rows * spread
    m = _fm(rows)
    s = fit_scaler(m)
    z = apply_scaler(s, m).rows
    live = ~s.degenerate
    assert np.all(np.abs(z.mean(axis=0)) < 1e-9)
    if live.any():
        assert np.all(np.abs(z[:, live].std(axis=0) - 1) < 1e-9)
    assert np.all(z[:, ~live] == 0.0)


def test_scaler_uses_training_statistics_only():
    rng = np.random.default_rng(4)
    train, test = rng.normal(5, 2, (100, 3)), rng.normal(-1, 7, (30, 3))
    s = fit_scaler(_fm(train))
    want = (test - train.mean(axis=0)) / train.std(axis=0)
    np.testing.assert_allclose(apply_scaler(s, _fm(test)).rows, want, rtol=1e-12)


def test_constant_column_flagged():
    rows = np.column_stack([np.arange(10.0), np.full(10, 4.0)])
    s = fit_scaler(_fm(rows))
    assert s.degenerate.tolist() == [False, True]
    assert np.all(apply_scaler(s, _fm(rows)).rows[:, 1] == 0.0)


def test_scaler_width_mismatch():
    s = fit_scaler(_fm(np.ones((3, 2)) * [[1], [2], [3]]))
    with pytest.raises(FeatureError, match="scaler fitted on 2"):
        apply_scaler(s, _fm(np.ones((3, 3))))


def test_feature_file_round_trip(tmp_path, small_features):
    sub = small_features.take(np.arange(0, small_features.num_rows, 97))
    write_feature_matrix(sub, tmp_path / "f.csv", {"config": {"w_l": 4.0}})
    back, prov = read_feature_matrix(tmp_path / "f.csv")
    assert prov == {"config": {"w_l": 4.0}}
    assert back.fingerprint() == sub.fingerprint()
    assert np.array_equal(back.rows, sub.rows)


def test_concat_and_take():
    a, b = _fm(np.ones((2, 2))), _fm(np.zeros((3, 2)))
    c = FeatureMatrix.concat([a, b])
    assert c.num_rows == 5
    assert c.take([4]).rows.tolist() == [[0.0, 0.0]]
    with pytest.raises(FeatureError):
        FeatureMatrix.concat([])
