import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eegattn.formation import FormationParams, assign_labels
from eegattn.ingest import RawRecording
from eegattn.spectral import SpectralError, StftParams, blackman_window, num_frames, spectrogram, stft_power

FS = 128.0


def naive_power(x, n, shift, fs):
    """Direct O(N^2) DFT of every Blackman-windowed frame, one-sided density."""
    k = np.arange(n)
    w = 0.42 - 0.5 * np.cos(2 * np.pi * k / (n - 1)) + 0.08 * np.cos(4 * np.pi * k / (n - 1))
    m = np.arange(n // 2 + 1)
    angle = 2 * np.pi * np.outer(m, k) / n
    C, S = np.cos(angle), np.sin(angle)
    out = []
    for start in range(0, len(x) - n + 1, shift):
        seg = x[start : start + n] * w
        re, im = C @ seg, -(S @ seg)
        p = (re**2 + im**2) / (fs * np.sum(w**2))
        p[1 : (n + 1) // 2] *= 2.0  # DC and an even-length Nyquist bin appear once
        out.append(p)
    return np.array(out)


def test_blackman_small_cases():
    for n in (65, 255):
        w = blackman_window(n)
        assert w[(n - 1) // 2] == pytest.approx(1.0, abs=1e-15)
    w = blackman_window(64)
    assert abs(w[0]) < 1e-15 and abs(w[-1]) < 1e-15
    # scipy.signal.windows.blackman(64, sym=True)[1]
    assert w[1] == pytest.approx(0.0008984113451827869, rel=1e-12)
    assert np.array_equal(w, w[::-1])
    with pytest.raises(SpectralError):
        blackman_window(1)


def test_frame_count_example():
    p, ends = stft_power(np.zeros(1280), StftParams(w_l=4, w_s=128))
    assert p.shape == (7, 257)
    assert num_frames(1280, 512, 128) == 7
    assert ends[0] == 4.0 and ends[-1] == 10.0


def test_on_grid_tone_peak():
    t = np.arange(1280) / FS
    x = 2.0 * np.sin(2 * np.pi * 10.0 * t)
    p, _ = stft_power(x, StftParams(w_l=2, w_s=128))
    freqs = np.fft.rfftfreq(256, 1 / FS)
    assert freqs[np.argmax(p.mean(axis=0))] == 10.0
    # scipy.signal.spectrogram(density, sym Blackman, detrend off), first frame
    assert p[0, 20] == pytest.approx(2.3074277687300357, rel=1e-9)
    assert p[0, 19] == pytest.approx(0.8244139025002395, rel=1e-9)


def test_params_validation():
    with pytest.raises(SpectralError, match="integer"):
        StftParams(w_l=2.001)
    with pytest.raises(SpectralError, match="exceeds"):
        StftParams(w_l=2, w_s=1300)
    assert StftParams(w_l=2, w_s=1300 - 20).shift_ratio == 5.0
    assert StftParams(w_l=12, w_s=1300).w_s == 1300
    p = StftParams(w_l=4, w_s=128)
    assert (p.window_samples, p.bin_spacing_hz, p.frame_step_s, p.shift_ratio) == (512, 0.25, 1.0, 0.25)
    assert p.in_sweep_range()
    assert not StftParams(w_l=1, w_s=2).in_sweep_range()


def test_short_signal_errors():
    with pytest.raises(SpectralError, match="shorter"):
        stft_power(np.zeros(100), StftParams(w_l=2))


@settings(max_examples=25, deadline=None)
@given(
    length=st.integers(300, 900),
    n=st.integers(16, 300),
    shift=st.integers(1, 64),
    seed=st.integers(0, 2**32 - 1),
)
def test_matches_naive_dft(length, n, shift, seed):
    n = min(n, length)
    shift = min(shift, n)
    x = np.random.default_rng(seed).standard_normal(length)
    got, _ = stft_power(x, StftParams(w_l=n / FS, w_s=shift, fs=FS))
    want = naive_power(x, n, shift, FS)
    np.testing.assert_allclose(got, want, rtol=1e-9, atol=0)


def _labeled(minutes, n_ch=7, seed=0):
    n = int(round(minutes * 60 * FS))
    samples = np.random.default_rng(seed).standard_normal((n, n_ch))
    labels = ("F3", "F4", "Fz", "C3", "C4", "Cz", "Pz")[:n_ch]
    rec = RawRecording("s1", 3, FS, labels, samples, full_trial=False)
    return assign_labels(rec, FormationParams(channels=labels))


def test_spectrogram_shape_40_min():
    rec = _labeled(45)
    spec = spectrogram(rec, StftParams())
    assert spec.power.shape == (2397, 257, 7)
    assert spec.freq_axis[1] == 0.25


def test_single_channel_matches_stft_power():
    rec = _labeled(20.5, n_ch=1)
    spec = spectrogram(rec, StftParams())
    p, ends = stft_power(rec.samples[:, 0], StftParams())
    assert np.array_equal(spec.power[:, :, 0], p)
    assert np.array_equal(spec.frame_times, ends)


def test_boundary_frame_takes_end_sample_label():
    rec = _labeled(21)
    spec = spectrogram(rec, StftParams(w_l=4, w_s=128))
    b1 = 76800
    # frame i covers samples [128 i, 128 i + 512)
    straddle = next(i for i in range(spec.num_frames) if 128 * i < b1 <= 128 * i + 511)
    assert spec.labels[straddle] == 1
    assert spec.labels[straddle - 1] == 0
    last = np.arange(spec.num_frames) * 128 + 511
    assert np.array_equal(spec.labels, rec.labels[last])


def test_fs_mismatch():
    rec = _labeled(20.5, n_ch=1)
    with pytest.raises(SpectralError, match="sampled"):
        spectrogram(rec, StftParams(fs=256.0))
