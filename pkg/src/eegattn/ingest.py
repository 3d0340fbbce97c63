"""Recording and manifest I/O, plus a synthetic EEG corpus generator.

Recording files are plain text::

    # subject=s1 trial=3 fs=128 channels=F3,F4,Fz,C3,C4,Cz,Pz
    1.25,0.5,...

one comma-separated row per sample, time ascending. A manifest lists one
``subject_id,trial_index,relative_path[,duration_minutes]`` entry per line.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .states import StateLabel, timeline_boundaries

log = logging.getLogger(__name__)

CANONICAL_CHANNELS = ("F3", "F4", "Fz", "C3", "C4", "Cz", "Pz")
CANONICAL_FS = 128.0
MIN_FULL_TRIAL_MIN = 30.0
MIN_SYNTH_TRIAL_MIN = 20.0


class IngestError(ValueError):
    pass


class ManifestError(IngestError):
    pass


class RecordingFormatError(IngestError):
    pass


@dataclass(frozen=True)
class RawRecording:
    subject_id: str
    trial_index: int
    sample_rate_hz: float
    channel_labels: tuple[str, ...]
    samples: np.ndarray  # (num_samples, num_channels), microvolts
    full_trial: bool = True

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "channel_labels", tuple(self.channel_labels))
        if self.trial_index < 1:
            raise IngestError(f"trial_index must be >= 1, got {self.trial_index}")
        if not self.sample_rate_hz > 0:
            raise IngestError(f"sample rate must be positive, got {self.sample_rate_hz}")
        if len(set(self.channel_labels)) != len(self.channel_labels):
            raise IngestError(f"duplicate channel labels: {self.channel_labels}")
        if samples.ndim != 2 or samples.shape[1] != len(self.channel_labels):
            raise IngestError(
                f"sample matrix shape {samples.shape} does not match "
                f"{len(self.channel_labels)} channel labels"
            )
        bad = np.argwhere(~np.isfinite(samples))
        if len(bad):
            row, col = bad[0]
            raise IngestError(
                f"non-finite value at row {row}, channel {self.channel_labels[col]!r}"
            )
        if self.full_trial and self.duration_min < MIN_FULL_TRIAL_MIN:
            raise IngestError(
                f"{self.subject_id} trial {self.trial_index}: {self.duration_min:.2f} min "
                f"is shorter than the {MIN_FULL_TRIAL_MIN:g}-min full-trial minimum"
            )

    @property
    def num_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def duration_min(self) -> float:
        return self.num_samples / self.sample_rate_hz / 60.0


@dataclass(frozen=True)
class ManifestEntry:
    subject_id: str
    trial_index: int
    path: Path
    duration_min: float | None = None


@dataclass(frozen=True)
class Manifest:
    entries: tuple[ManifestEntry, ...]

    def __post_init__(self):
        entries = tuple(sorted(self.entries, key=lambda e: (e.subject_id, e.trial_index)))
        object.__setattr__(self, "entries", entries)
        seen = set()
        for e in entries:
            key = (e.subject_id, e.trial_index)
            if key in seen:
                raise ManifestError(f"duplicate entry for subject {e.subject_id!r} trial {e.trial_index}")
            seen.add(key)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def subjects(self) -> list[str]:
        return sorted({e.subject_id for e in self.entries})

    def check_contiguous(self) -> None:
        for s in self.subjects:
            trials = [e.trial_index for e in self.entries if e.subject_id == s]
            if trials != list(range(1, len(trials) + 1)):
                raise ManifestError(
                    f"subject {s!r} trial indices {trials} are not a contiguous run starting at 1"
                )


def load_manifest(path) -> Manifest:
    path = Path(path)
    base = path.parent
    entries = []
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) not in (3, 4) or not all(parts):
                raise ManifestError(f"{path}:{lineno}: expected subject_id,trial_index,path[,minutes]")
            try:
                trial = int(parts[1])
                duration = float(parts[3]) if len(parts) == 4 else None
            except ValueError as exc:
                raise ManifestError(f"{path}:{lineno}: {exc}") from None
            if trial < 1:
                raise ManifestError(f"{path}:{lineno}: trial index must be >= 1")
            if duration is not None and not duration > 0:
                raise ManifestError(f"{path}:{lineno}: duration override must be positive")
            entries.append(ManifestEntry(parts[0], trial, base / parts[2], duration))
    if not entries:
        raise ManifestError("empty manifest")
    manifest = Manifest(tuple(entries))
    manifest.check_contiguous()
    return manifest


def write_manifest(manifest: Manifest, path) -> None:
    path = Path(path)
    lines = []
    for e in manifest.entries:
        try:
            rel = Path(e.path).relative_to(path.parent)
        except ValueError:
            rel = Path(e.path)
        row = f"{e.subject_id},{e.trial_index},{rel.as_posix()}"
        if e.duration_min is not None:
            row += f",{e.duration_min:g}"
        lines.append(row)
    path.write_text("\n".join(lines) + "\n")


def _parse_header(line: str, path) -> dict:
    if not line.startswith("#"):
        raise RecordingFormatError(f"{path}: missing '# subject=... trial=... fs=... channels=...' header")
    fields = {}
    for tok in line[1:].split():
        key, sep, value = tok.partition("=")
        if not sep:
            raise RecordingFormatError(f"{path}: malformed header token {tok!r}")
        fields[key] = value
    missing = {"subject", "trial", "fs", "channels"} - set(fields)
    if missing:
        raise RecordingFormatError(f"{path}: header lacks {sorted(missing)}")
    return fields


def read_recording(path, full_trial: bool = True) -> RawRecording:
    """Read a recording file without any manifest expectations."""
    path = Path(path)
    with open(path) as f:
        header = _parse_header(f.readline().strip(), path)
        channels = tuple(c for c in header["channels"].split(",") if c)
        try:
            samples = np.loadtxt(f, delimiter=",", ndmin=2, dtype=np.float64)
        except ValueError as exc:
            raise RecordingFormatError(f"{path}: {exc}") from None
    if samples.size == 0:
        raise RecordingFormatError(f"{path}: no samples")
    if samples.shape[1] != len(channels):
        raise RecordingFormatError(
            f"{path}: missing channel column: header lists {len(channels)} channels, "
            f"rows have {samples.shape[1]} values"
        )
    bad = np.argwhere(~np.isfinite(samples))
    if len(bad):
        row, col = bad[0]
        raise RecordingFormatError(f"{path}: non-finite value at ({row}, {channels[col]!r})")
    return RawRecording(
        subject_id=header["subject"],
        trial_index=int(header["trial"]),
        sample_rate_hz=float(header["fs"]),
        channel_labels=channels,
        samples=samples,
        full_trial=full_trial,
    )


def load_recording(
    entry: ManifestEntry,
    expected_channels=None,
    expected_fs: float | None = None,
) -> RawRecording:
    """Load the recording behind a manifest entry and check it against expectations.

    A duration override marks the recording as a fixture: it is cut to the
    declared length and a short trial only warns instead of failing.
    """
    rec = read_recording(entry.path, full_trial=False)
    if (rec.subject_id, rec.trial_index) != (entry.subject_id, entry.trial_index):
        raise RecordingFormatError(
            f"{entry.path}: header identifies {rec.subject_id} trial {rec.trial_index}, "
            f"manifest says {entry.subject_id} trial {entry.trial_index}"
        )
    if expected_fs is not None and not math.isclose(rec.sample_rate_hz, expected_fs):
        raise RecordingFormatError(
            f"{entry.path}: sample rate {rec.sample_rate_hz:g} Hz, expected {expected_fs:g} Hz"
        )
    if expected_channels is not None:
        expected_channels = tuple(expected_channels)
        if len(rec.channel_labels) != len(expected_channels):
            raise RecordingFormatError(
                f"{entry.path}: channel mismatch: {len(rec.channel_labels)} channels, "
                f"expected {len(expected_channels)}"
            )
        missing = [c for c in expected_channels if c not in rec.channel_labels]
        if missing:
            raise RecordingFormatError(f"{entry.path}: missing channel column(s) {missing}")

    samples = rec.samples
    if entry.duration_min is None:
        full_trial = True
    else:
        full_trial = False
        n_declared = int(round(entry.duration_min * 60 * rec.sample_rate_hz))
        if rec.num_samples < n_declared:
            raise RecordingFormatError(
                f"{entry.path}: {rec.num_samples} samples, shorter than the declared "
                f"{entry.duration_min:g} min"
            )
        samples = samples[:n_declared]
        if entry.duration_min < MIN_FULL_TRIAL_MIN:
            warnings.warn(
                f"{entry.subject_id} trial {entry.trial_index}: {entry.duration_min:g} min is below "
                f"the {MIN_FULL_TRIAL_MIN:g}-min full-trial minimum",
                stacklevel=2,
            )
    return RawRecording(
        rec.subject_id, rec.trial_index, rec.sample_rate_hz, rec.channel_labels, samples, full_trial
    )


def write_recording(rec: RawRecording, path) -> None:
    header = (
        f"subject={rec.subject_id} trial={rec.trial_index} fs={rec.sample_rate_hz:g} "
        f"channels={','.join(rec.channel_labels)}"
    )
    # %.17g round-trips every float64 exactly
    np.savetxt(path, rec.samples, fmt="%.17g", delimiter=",", header=header, comments="# ")


# ----------------------------------------------------------------------------
# Synthetic corpus
# ----------------------------------------------------------------------------

DEFAULT_PROFILE = {
    StateLabel.FOCUSED: ((12.0, 18.0), 4.0),
    StateLabel.UNFOCUSED: ((8.0, 12.0), 4.0),
    StateLabel.DROWSY: ((1.0, 7.0), 4.0),
}


@dataclass(frozen=True)
class SynthSpec:
    num_subjects: int = 5
    trials_per_subject: int = 5
    trial_duration_min: float = 45.0
    profile: dict = field(default_factory=lambda: dict(DEFAULT_PROFILE))
    subject_variability: float = 0.0
    noise_exponent: float = 1.0
    seed: int = 0
    sample_rate_hz: float = CANONICAL_FS
    channel_labels: tuple[str, ...] = CANONICAL_CHANNELS
    noise_amplitude_uv: float = 10.0

    def __post_init__(self):
        if self.num_subjects < 1 or self.trials_per_subject < 1:
            raise IngestError("need at least one subject and one trial")
        if self.trial_duration_min < MIN_SYNTH_TRIAL_MIN:
            raise IngestError(
                f"trial duration {self.trial_duration_min:g} min is below the "
                f"{MIN_SYNTH_TRIAL_MIN:g}-min focused + unfocused timeline"
            )
        if self.trial_duration_min < MIN_FULL_TRIAL_MIN:
            warnings.warn(
                f"synthetic trials of {self.trial_duration_min:g} min are shorter than a full "
                f"{MIN_FULL_TRIAL_MIN:g}-min trial",
                stacklevel=3,
            )
        if self.subject_variability < 0:
            raise IngestError("subject_variability must be non-negative")
        for state, ((lo, hi), gain) in self.profile.items():
            if not gain > 0:
                raise IngestError(f"gain for {StateLabel(state).name} must be > 0")
            if not 0 <= lo < hi <= self.sample_rate_hz / 2:
                raise IngestError(f"band ({lo}, {hi}) for {StateLabel(state).name} is invalid")
        if set(map(StateLabel, self.profile)) != set(StateLabel):
            raise IngestError("profile must define every state")

    def subject_ids(self) -> list[str]:
        return [f"s{i + 1}" for i in range(self.num_subjects)]


def subject_profile(spec: SynthSpec, subject_index: int) -> dict:
    """Per-subject band/gain profile plus per-channel and broadband scales.

    With zero variability every subject gets the configured profile verbatim.
    """
    v = spec.subject_variability
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, subject_index, 0x5B]))
    n_ch = len(spec.channel_labels)
    z_bands = rng.standard_normal((len(StateLabel), 3))
    z_channels = rng.standard_normal((len(StateLabel), n_ch))
    z_scale = rng.standard_normal(n_ch + 1)
    nyquist = spec.sample_rate_hz / 2
    states = {}
    for s in StateLabel:
        (lo, hi), gain = spec.profile[s]
        shift = v * z_bands[s, 0]
        lo_p = float(np.clip(lo + shift, 0.25, nyquist - 0.5))
        hi_p = float(np.clip(hi + shift + 0.5 * v * z_bands[s, 1], lo_p + 0.5, nyquist))
        gain_p = float(gain * np.exp(0.5 * v * z_bands[s, 2]))
        # frontal channels carry slightly more of the state rhythm by default
        base_w = np.linspace(1.0, 0.6, n_ch)
        weights = base_w * np.exp(0.5 * v * z_channels[s])
        states[s] = ((lo_p, hi_p), gain_p, weights)
    broadband = float(np.exp(0.5 * v * z_scale[0]))
    channel_scale = np.exp(0.25 * v * z_scale[1:])
    return {"states": states, "broadband": broadband, "channel_scale": channel_scale}


def _spectral_shape(n: int, fs: float, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    freqs = np.fft.rfftfreq(n, d=1.0 / fs)
    shape = np.zeros_like(freqs)
    shape[1:] = freqs[1:] ** (-alpha / 2.0)
    return freqs, shape


def _synth_trial(spec: SynthSpec, profile: dict, subject_index: int, trial_index: int) -> np.ndarray:
    fs = spec.sample_rate_hz
    n = int(round(spec.trial_duration_min * 60 * fs))
    n_ch = len(spec.channel_labels)
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, subject_index, trial_index]))

    freqs, shape = _spectral_shape(n, fs, spec.noise_exponent)
    white = rng.standard_normal((n_ch, n))
    background = np.fft.irfft(np.fft.rfft(white, axis=1) * shape, n=n, axis=1)
    background /= background.std(axis=1, keepdims=True)

    # unit-variance background: one-sided density 2 * shape(f)**2 / (sigma2 * fs)
    sigma2 = 2.0 * np.sum(shape[1:] ** 2) / n
    b1, b2 = timeline_boundaries(n, fs)
    segments = {StateLabel.FOCUSED: (0, b1), StateLabel.UNFOCUSED: (b1, b2), StateLabel.DROWSY: (b2, n)}
    signal = background
    for state, (start, stop) in segments.items():
        m = stop - start
        if m < 2:
            continue
        (lo, hi), gain, weights = profile["states"][state]
        seg_freqs, seg_shape = _spectral_shape(m, fs, spec.noise_exponent)
        band = (seg_freqs > lo) & (seg_freqs <= hi)
        # band-limited random-phase burst carrying (gain - 1) x the background density
        gain_filter = np.sqrt(max(gain - 1.0, 0.0) / sigma2) * seg_shape * band
        u = rng.standard_normal((n_ch, m))
        burst = np.fft.irfft(np.fft.rfft(u, axis=1) * gain_filter, n=m, axis=1)
        signal[:, start:stop] += burst * weights[:, None]
    signal *= spec.noise_amplitude_uv * profile["broadband"] * profile["channel_scale"][:, None]
    return np.ascontiguousarray(signal.T)


def generate_synthetic(spec: SynthSpec) -> list[RawRecording]:
    """Deterministic corpus of labeled-timeline recordings, ordered by (subject, trial)."""
    full = spec.trial_duration_min >= MIN_FULL_TRIAL_MIN
    out = []
    for si, subject in enumerate(spec.subject_ids()):
        profile = subject_profile(spec, si)
        for trial in range(1, spec.trials_per_subject + 1):
            samples = _synth_trial(spec, profile, si, trial)
            out.append(
                RawRecording(subject, trial, spec.sample_rate_hz, spec.channel_labels, samples, full)
            )
    return out
