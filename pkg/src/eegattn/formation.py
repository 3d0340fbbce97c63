"""Trial selection, timeline labeling with drowsy-length truncation, channel selection."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .ingest import CANONICAL_CHANNELS, Manifest, RawRecording
from .states import UNFOCUSED_END_MIN, StateLabel, minutes_to_samples, timeline_boundaries

__all__ = [
    "DrowsyLength",
    "FormationError",
    "FormationParams",
    "LabeledRecording",
    "StateLabel",
    "assign_labels",
    "select_channels",
    "select_trials",
]


class FormationError(ValueError):
    pass


@dataclass(frozen=True)
class DrowsyLength:
    """Retained drowsy duration: ``minutes`` or None for everything to the end."""

    minutes: float | None = 20.0

    def __post_init__(self):
        if self.minutes is not None and not self.minutes > 0:
            raise FormationError(f"d_L must be positive, got {self.minutes}")

    @classmethod
    def parse(cls, text) -> "DrowsyLength":
        if isinstance(text, DrowsyLength):
            return text
        s = str(text).strip().lower()
        if s == "max":
            return cls(None)
        return cls(float(s))

    @property
    def is_max(self) -> bool:
        return self.minutes is None

    def __str__(self):
        return "max" if self.minutes is None else f"{self.minutes:g}"


@dataclass(frozen=True)
class FormationParams:
    d_l: DrowsyLength = DrowsyLength(20.0)
    channels: tuple[str, ...] = CANONICAL_CHANNELS
    drop_first_trials: int = 2

    def __post_init__(self):
        object.__setattr__(self, "d_l", DrowsyLength.parse(self.d_l))
        object.__setattr__(self, "channels", tuple(self.channels))
        if not self.channels:
            raise FormationError("channel selection must be non-empty")
        if self.drop_first_trials < 0:
            raise FormationError("drop_first_trials must be >= 0")


@dataclass(frozen=True)
class LabeledRecording:
    subject_id: str
    trial_index: int
    sample_rate_hz: float
    channel_labels: tuple[str, ...]
    samples: np.ndarray
    labels: np.ndarray  # int8 StateLabel code per retained sample
    segments: dict  # StateLabel -> (start, stop) sample indices, stop exclusive

    def __post_init__(self):
        if len(self.labels) != self.samples.shape[0]:
            raise FormationError("label array length differs from sample count")

    @property
    def num_samples(self) -> int:
        return self.samples.shape[0]

    def state_counts(self) -> dict:
        return {s: int(np.count_nonzero(self.labels == s)) for s in StateLabel}


def select_trials(manifest: Manifest, drop_first: int) -> Manifest:
    if drop_first < 0:
        raise FormationError("drop_first must be >= 0")
    kept = tuple(e for e in manifest.entries if e.trial_index > drop_first)
    for s in manifest.subjects:
        if not any(e.subject_id == s for e in kept):
            raise FormationError(f"subject {s!r} has no trials left after dropping the first {drop_first}")
    return Manifest(kept)


def assign_labels(rec: RawRecording, params: FormationParams) -> LabeledRecording:
    fs = rec.sample_rate_hz
    n = rec.num_samples
    b1, b2 = timeline_boundaries(n, fs)
    if n < minutes_to_samples(UNFOCUSED_END_MIN, fs):
        raise FormationError(
            f"{rec.subject_id} trial {rec.trial_index}: {rec.duration_min:.2f} min is shorter than "
            f"the {UNFOCUSED_END_MIN:g}-min focused + unfocused timeline"
        )
    if params.d_l.is_max:
        end = n
    else:
        end = min(n, minutes_to_samples(UNFOCUSED_END_MIN + params.d_l.minutes, fs))
    if end == b2:
        warnings.warn(
            f"{rec.subject_id} trial {rec.trial_index}: no drowsy samples retained", stacklevel=2
        )
    labels = np.empty(end, dtype=np.int8)
    labels[:b1] = StateLabel.FOCUSED
    labels[b1:b2] = StateLabel.UNFOCUSED
    labels[b2:end] = StateLabel.DROWSY
    segments = {
        StateLabel.FOCUSED: (0, b1),
        StateLabel.UNFOCUSED: (b1, b2),
        StateLabel.DROWSY: (b2, end),
    }
    labeled = LabeledRecording(
        rec.subject_id, rec.trial_index, fs, rec.channel_labels, rec.samples[:end], labels, segments
    )
    return select_channels(labeled, params.channels)


def select_channels(rec: LabeledRecording, channels) -> LabeledRecording:
    channels = tuple(channels)
    unknown = [c for c in channels if c not in rec.channel_labels]
    if unknown:
        raise FormationError(f"unknown channel(s) {unknown}; recording has {list(rec.channel_labels)}")
    if channels == rec.channel_labels:
        return rec
    cols = [rec.channel_labels.index(c) for c in channels]
    return replace(rec, channel_labels=channels, samples=np.ascontiguousarray(rec.samples[:, cols]))


def form_corpus(recordings, params: FormationParams) -> list[LabeledRecording]:
    """Drop the first trials of each subject, then label and channel-select the rest."""
    kept = [r for r in recordings if r.trial_index > params.drop_first_trials]
    subjects = {r.subject_id for r in recordings}
    for s in sorted(subjects):
        if not any(r.subject_id == s for r in kept):
            raise FormationError(
                f"subject {s!r} has no trials left after dropping the first {params.drop_first_trials}"
            )
    return [assign_labels(r, params) for r in kept]

