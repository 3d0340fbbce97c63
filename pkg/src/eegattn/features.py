"""Spectrogram post-processing into standardized feature rows.

Order of stages per trial: bin frequencies -> trailing running average ->
decibels -> flatten. Standardization is fitted later, on training rows only.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .formation import LabeledRecording
from .spectral import Spectrogram, StftParams, spectrogram

DB_FLOOR = 1e-12
DEGENERATE_STD = 1e-12
PROVENANCE_COLUMNS = ("label", "subject", "trial", "frame_time")


class FeatureError(ValueError):
    pass


def _as_int(x: float, what: str) -> int:
    r = round(x)
    if abs(x - r) > 1e-9 * max(1.0, abs(x)):
        raise FeatureError(f"{what} = {x:g} is not an integer")
    return int(r)


@dataclass(frozen=True)
class BinningParams:
    bin_size: float = 0.5
    f_range: tuple[float, float] = (0.0, 18.0)  # half-open (lo, hi]

    def __post_init__(self):
        lo, hi = self.f_range
        object.__setattr__(self, "f_range", (float(lo), float(hi)))
        if not self.bin_size > 0:
            raise FeatureError("bin_size must be positive")
        if not hi > lo >= 0:
            raise FeatureError(f"f_range {self.f_range} must satisfy hi > lo >= 0")
        _as_int((hi - lo) / self.bin_size, "(f_hi - f_lo) / bin_size")

    @property
    def num_bins(self) -> int:
        lo, hi = self.f_range
        return _as_int((hi - lo) / self.bin_size, "(f_hi - f_lo) / bin_size")


@dataclass(frozen=True)
class SmoothingParams:
    span_seconds: float = 15.0

    def __post_init__(self):
        if not self.span_seconds > 0:
            raise FeatureError("span_seconds must be positive")

    def window_frames(self, frame_step_s: float) -> int:
        return max(1, int(math.floor(self.span_seconds / frame_step_s + 0.5)))


def bin_frequencies(spec: Spectrogram, params: BinningParams) -> Spectrogram:
    """Average raw bins into fixed-width bands over the half-open range (lo, hi]."""
    spacing = spec.freq_axis[1] - spec.freq_axis[0]
    nyquist = spec.freq_axis[-1]
    lo, hi = params.f_range
    if hi > nyquist + 1e-9:
        raise FeatureError(f"f_hi = {hi:g} Hz exceeds the Nyquist frequency {nyquist:g} Hz")
    ratio = params.bin_size / spacing
    k = round(ratio)
    if k < 1 or abs(ratio - k) > 1e-9:
        raise FeatureError(
            f"incompatible binning: bin_size {params.bin_size:g} Hz is not an integer multiple "
            f"of the raw bin spacing {spacing:.6g} Hz"
        )
    start = _as_int(lo / spacing, "f_lo / raw spacing") + 1
    nb = params.num_bins
    raw = spec.power[:, start : start + nb * k, :]
    frames, _, ch = raw.shape
    binned = raw.reshape(frames, nb, k, ch).mean(axis=2)
    edges = lo + params.bin_size * np.stack([np.arange(nb), np.arange(1, nb + 1)], axis=1)
    return replace(spec, power=binned, freq_axis=edges.mean(axis=1), band_edges=edges)


def running_average(spec: Spectrogram, params: SmoothingParams) -> Spectrogram:
    """Trailing mean over the last ``k`` frames of one trial; warm-up frames use what exists."""
    k = params.window_frames(spec.frame_step_s)
    p = spec.power
    if k == 1 or p.shape[0] == 0:
        return replace(spec, power=p.copy())
    padded = np.concatenate([np.zeros((k - 1,) + p.shape[1:]), p], axis=0)
    sums = sliding_window_view(padded, k, axis=0).sum(axis=-1)
    counts = np.minimum(np.arange(1, p.shape[0] + 1), k).astype(np.float64)
    return replace(spec, power=sums / counts[:, None, None])


def to_decibels(spec: Spectrogram, floor_eps: float = DB_FLOOR) -> Spectrogram:
    return replace(spec, power=10.0 * np.log10(spec.power + floor_eps))


def _fmt_hz(x: float) -> str:
    return str(round(float(x), 6))


@dataclass
class FeatureMatrix:
    rows: np.ndarray  # (n, features)
    labels: np.ndarray  # int codes
    subjects: np.ndarray  # str
    trials: np.ndarray  # int
    frame_times: np.ndarray  # seconds
    feature_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.float64)
        if self.rows.ndim != 2:
            raise FeatureError("feature rows must be a 2-D matrix")
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.subjects = np.asarray(self.subjects, dtype=str)
        self.trials = np.asarray(self.trials, dtype=np.int64)
        self.frame_times = np.asarray(self.frame_times, dtype=np.float64)
        n = self.rows.shape[0]
        if not (len(self.labels) == len(self.subjects) == len(self.trials) == len(self.frame_times) == n):
            raise FeatureError("row, label and provenance counts differ")
        if self.feature_names and len(self.feature_names) != self.rows.shape[1]:
            raise FeatureError("feature_names length differs from feature count")

    @property
    def num_rows(self) -> int:
        return self.rows.shape[0]

    @property
    def num_features(self) -> int:
        return self.rows.shape[1]

    def __len__(self):
        return self.num_rows

    def take(self, idx) -> "FeatureMatrix":
        idx = np.asarray(idx)
        return FeatureMatrix(
            self.rows[idx], self.labels[idx], self.subjects[idx], self.trials[idx],
            self.frame_times[idx], list(self.feature_names),
        )

    def with_rows(self, rows) -> "FeatureMatrix":
        return FeatureMatrix(rows, self.labels, self.subjects, self.trials, self.frame_times, list(self.feature_names))

    @classmethod
    def concat(cls, parts) -> "FeatureMatrix":
        parts = list(parts)
        if not parts:
            raise FeatureError("nothing to concatenate")
        names = parts[0].feature_names
        for p in parts[1:]:
            if p.feature_names != names:
                raise FeatureError("feature layouts differ between parts")
        return cls(
            np.concatenate([p.rows for p in parts]),
            np.concatenate([p.labels for p in parts]),
            np.concatenate([p.subjects for p in parts]),
            np.concatenate([p.trials for p in parts]),
            np.concatenate([p.frame_times for p in parts]),
            list(names),
        )

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for a in (self.rows, self.labels, self.trials, self.frame_times):
            h.update(np.ascontiguousarray(a).tobytes())
        h.update("\x00".join(self.subjects.tolist()).encode())
        h.update("\x00".join(self.feature_names).encode())
        return h.hexdigest()


def flatten(spec: Spectrogram) -> FeatureMatrix:
    """One row per frame: channel-major, ascending frequency within a channel."""
    frames, nb, ch = spec.power.shape
    rows = spec.power.transpose(0, 2, 1).reshape(frames, ch * nb)
    edges = spec.band_edges
    if edges is None:
        edges = np.stack([spec.freq_axis, spec.freq_axis], axis=1)
    names = [
        f"ch:{c}|band:{_fmt_hz(lo)}-{_fmt_hz(hi)}Hz" for c in spec.channel_labels for lo, hi in edges
    ]
    return FeatureMatrix(
        rows=np.ascontiguousarray(rows),
        labels=spec.labels.astype(np.int64),
        subjects=np.full(frames, spec.subject_id),
        trials=np.full(frames, spec.trial_index),
        frame_times=spec.frame_times,
        feature_names=names,
    )


@dataclass(frozen=True)
class FeatureParams:
    """Everything that determines feature rows for one labeled recording."""

    stft: StftParams = StftParams()
    binning: BinningParams = BinningParams()
    smoothing: SmoothingParams = SmoothingParams()
    db_floor: float = DB_FLOOR

    def as_dict(self) -> dict:
        return {
            "w_l": self.stft.w_l,
            "w_s": self.stft.w_s,
            "fs": self.stft.fs,
            "window_fn": self.stft.window_fn.value,
            "bin_size": self.binning.bin_size,
            "f_range": list(self.binning.f_range),
            "smoothing_s": self.smoothing.span_seconds,
            "db_floor": self.db_floor,
        }


def featurize_recording(rec: LabeledRecording, params: FeatureParams) -> FeatureMatrix:
    spec = spectrogram(rec, params.stft)
    spec = bin_frequencies(spec, params.binning)
    spec = running_average(spec, params.smoothing)
    spec = to_decibels(spec, params.db_floor)
    return flatten(spec)


def featurize_corpus(recordings, params: FeatureParams) -> FeatureMatrix:
    return FeatureMatrix.concat(featurize_recording(r, params) for r in recordings)


# ----------------------------------------------------------------------------
# Standardization
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class Scaler:
    mean: np.ndarray
    std: np.ndarray
    degenerate: np.ndarray  # bool mask of columns whose std was replaced by 1
    fitted_on: str

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "degenerate": self.degenerate.tolist(),
            "fitted_on": self.fitted_on,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scaler":
        return cls(np.array(d["mean"]), np.array(d["std"]), np.array(d["degenerate"], dtype=bool), d["fitted_on"])


def fit_scaler(train: FeatureMatrix) -> Scaler:
    if train.num_rows == 0:
        raise FeatureError("cannot fit a scaler on an empty training matrix")
    mean = train.rows.mean(axis=0)
    std = train.rows.std(axis=0)
    # relative threshold: the mean of a constant column is itself only accurate to a few ulps
    degenerate = (np.ptp(train.rows, axis=0) == 0) | (std < DEGENERATE_STD * np.maximum(1.0, np.abs(mean)))
    std = np.where(degenerate, 1.0, std)
    return Scaler(mean, std, degenerate, train.fingerprint())


def apply_scaler(scaler: Scaler, m: FeatureMatrix) -> FeatureMatrix:
    if m.num_features != len(scaler.mean):
        raise FeatureError(f"scaler fitted on {len(scaler.mean)} features, matrix has {m.num_features}")
    z = (m.rows - scaler.mean) / scaler.std
    # a constant training column carries no information; roundoff in its mean must not leak through
    z[:, scaler.degenerate] = 0.0
    return m.with_rows(z)


# ----------------------------------------------------------------------------
# File interchange
# ----------------------------------------------------------------------------


def write_feature_matrix(m: FeatureMatrix, path, provenance: dict | None = None) -> None:
    """CSV with ``#``-prefixed provenance lines, a header row, one row per frame."""
    buf = io.StringIO()
    if provenance:
        for key in sorted(provenance):
            buf.write(f"# {key}={json.dumps(provenance[key], sort_keys=True)}\n")
    buf.write(",".join(list(m.feature_names) + list(PROVENANCE_COLUMNS)) + "\n")
    fmt = ",".join(["%.17g"] * m.num_features)
    for i in range(m.num_rows):
        buf.write(fmt % tuple(m.rows[i]))
        buf.write(f",{m.labels[i]},{m.subjects[i]},{m.trials[i]},{float(m.frame_times[i])!r}\n")
    Path(path).write_text(buf.getvalue())


def read_feature_matrix(path) -> tuple[FeatureMatrix, dict]:
    provenance = {}
    with open(path) as f:
        line = f.readline()
        while line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            provenance[key] = json.loads(value)
            line = f.readline()
        header = line.rstrip("\n").split(",")
        if header[-len(PROVENANCE_COLUMNS):] != list(PROVENANCE_COLUMNS):
            raise FeatureError(f"{path}: header must end with {','.join(PROVENANCE_COLUMNS)}")
        names = header[: -len(PROVENANCE_COLUMNS)]
        body = f.read()
    lines = [ln for ln in body.split("\n") if ln]
    n_feat = len(names)
    rows = np.empty((len(lines), n_feat))
    labels = np.empty(len(lines), dtype=np.int64)
    subjects, trials, times = [], np.empty(len(lines), dtype=np.int64), np.empty(len(lines))
    for i, ln in enumerate(lines):
        parts = ln.split(",")
        if len(parts) != n_feat + len(PROVENANCE_COLUMNS):
            raise FeatureError(f"{path}: row {i + 1} has {len(parts)} fields, expected {len(header)}")
        rows[i] = np.array(parts[:n_feat], dtype=np.float64)
        labels[i] = int(parts[n_feat])
        subjects.append(parts[n_feat + 1])
        trials[i] = int(parts[n_feat + 2])
        times[i] = float(parts[n_feat + 3])
    if not np.all(np.isfinite(rows)):
        raise FeatureError(f"{path}: non-finite feature values")
    return FeatureMatrix(rows, labels, np.array(subjects, dtype=str), trials, times, names), provenance
