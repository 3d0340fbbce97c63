"""Blackman-windowed short-time power spectra."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .formation import LabeledRecording

W_L_RANGE = (2.0, 60.0)
W_S_RANGE = (4, 1280)


class SpectralError(ValueError):
    pass


class WindowFunction(enum.Enum):
    BLACKMAN = "blackman"


def blackman_value(k, n: int):
    """Blackman taper at (possibly fractional) position ``k`` of an ``n``-point window.

    Peaks at 1 for k = (n - 1) / 2, which is a sample only when n is odd.
    """
    x = 2.0 * np.pi * np.asarray(k, dtype=np.float64) / (n - 1)
    return 0.42 - 0.5 * np.cos(x) + 0.08 * np.cos(2.0 * x)


def blackman_window(n: int) -> np.ndarray:
    """Symmetric Blackman window of length ``n``."""
    if n < 2:
        raise SpectralError(f"window length must be >= 2, got {n}")
    # evaluate the first half and mirror it so the window is exactly symmetric
    half = blackman_value(np.arange((n + 1) // 2), n)
    return np.concatenate([half, half[: n // 2][::-1]])


_WINDOWS = {WindowFunction.BLACKMAN: blackman_window}


@dataclass(frozen=True)
class StftParams:
    w_l: float = 4.0  # seconds
    w_s: int = 128  # samples
    fs: float = 128.0
    window_fn: WindowFunction = WindowFunction.BLACKMAN

    def __post_init__(self):
        n = self.w_l * self.fs
        if abs(n - round(n)) > 1e-9 or round(n) < 2:
            raise SpectralError(f"w_L * fs = {n:g} must be an integer >= 2")
        if int(self.w_s) != self.w_s or self.w_s < 1:
            raise SpectralError(f"w_S must be a positive integer number of samples, got {self.w_s}")
        object.__setattr__(self, "w_s", int(self.w_s))
        # sample-sliding: a shift may leave gaps between frames, up to the sweep cap
        if self.w_s > max(self.window_samples, W_S_RANGE[1]):
            raise SpectralError(
                f"w_S = {self.w_s} exceeds both the window length of {self.window_samples} samples "
                f"and the {W_S_RANGE[1]}-sample shift cap"
            )

    @property
    def window_samples(self) -> int:
        return int(round(self.w_l * self.fs))

    @property
    def frame_step_s(self) -> float:
        return self.w_s / self.fs

    @property
    def bin_spacing_hz(self) -> float:
        return self.fs / self.window_samples

    @property
    def shift_ratio(self) -> float:
        """Shift as a fraction of the window, w_S / (w_L * fs)."""
        return self.w_s / self.window_samples

    def window(self) -> np.ndarray:
        return _WINDOWS[self.window_fn](self.window_samples)

    def in_sweep_range(self) -> bool:
        return W_L_RANGE[0] <= self.w_l <= W_L_RANGE[1] and W_S_RANGE[0] <= self.w_s <= W_S_RANGE[1]


@dataclass(frozen=True)
class Spectrogram:
    power: np.ndarray  # (frames, bins, channels)
    frame_times: np.ndarray  # seconds, frame end relative to trial start
    freq_axis: np.ndarray  # Hz
    labels: np.ndarray  # per-frame StateLabel code
    channel_labels: tuple[str, ...]
    frame_step_s: float
    subject_id: str = ""
    trial_index: int = 0
    band_edges: np.ndarray | None = None  # (bins, 2) once binned

    @property
    def num_frames(self) -> int:
        return self.power.shape[0]


def num_frames(length: int, window: int, shift: int) -> int:
    if length < window:
        return 0
    return (length - window) // shift + 1


def _density_scale(window: np.ndarray, fs: float) -> np.ndarray:
    n = len(window)
    scale = np.full(n // 2 + 1, 2.0 / (fs * np.sum(window**2)))
    scale[0] /= 2.0
    if n % 2 == 0:
        scale[-1] /= 2.0
    return scale


def stft_power(signal, params: StftParams) -> tuple[np.ndarray, np.ndarray]:
    """One-sided periodogram density of each frame.

    Returns ``(power, frame_end_times)`` with power shaped (frames, bins).
    Frames start every ``w_s`` samples and are not zero-padded or detrended.
    """
    x = np.asarray(signal, dtype=np.float64)
    win = params.window()
    n = len(win)
    if x.ndim != 1:
        raise SpectralError("stft_power expects a 1-D signal")
    if len(x) < n:
        raise SpectralError(f"signal of {len(x)} samples is shorter than one {n}-sample window")
    frames = sliding_window_view(x, n)[:: params.w_s]
    spectrum = np.fft.rfft(frames * win, axis=1)
    power = (spectrum.real**2 + spectrum.imag**2) * _density_scale(win, params.fs)
    ends = (np.arange(len(frames)) * params.w_s + n) / params.fs
    return power, ends


def spectrogram(rec: LabeledRecording, params: StftParams) -> Spectrogram:
    if not math.isclose(rec.sample_rate_hz, params.fs):
        raise SpectralError(f"recording is sampled at {rec.sample_rate_hz:g} Hz, params expect {params.fs:g}")
    win = params.window()
    n = len(win)
    if rec.num_samples < n:
        raise SpectralError(
            f"{rec.subject_id} trial {rec.trial_index}: {rec.num_samples} samples, need {n} for one frame"
        )
    scale = _density_scale(win, params.fs)
    # (channels, frames, n) view; transform channel by channel to bound memory
    views = sliding_window_view(rec.samples.T, n, axis=1)[:, :: params.w_s]
    n_frames = views.shape[1]
    power = np.empty((n_frames, n // 2 + 1, rec.samples.shape[1]))
    for c in range(rec.samples.shape[1]):
        spec = np.fft.rfft(views[c] * win, axis=1)
        power[:, :, c] = (spec.real**2 + spec.imag**2) * scale
    last = np.arange(n_frames) * params.w_s + n - 1
    return Spectrogram(
        power=power,
        frame_times=(last + 1) / params.fs,
        freq_axis=np.fft.rfftfreq(n, d=1.0 / params.fs),
        labels=rec.labels[last].copy(),
        channel_labels=rec.channel_labels,
        frame_step_s=params.frame_step_s,
        subject_id=rec.subject_id,
        trial_index=rec.trial_index,
    )
