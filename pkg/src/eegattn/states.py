"""Attention states and the elapsed-time timeline that defines them."""

from __future__ import annotations

import enum
import math

FOCUSED_END_MIN = 10.0
UNFOCUSED_END_MIN = 20.0


class StateLabel(enum.IntEnum):
    FOCUSED = 0
    UNFOCUSED = 1
    DROWSY = 2

    @property
    def title(self) -> str:
        return self.name.capitalize()


NUM_STATES = len(StateLabel)


def minutes_to_samples(minutes: float, fs: float) -> int:
    """Exact sample index of a timestamp, rounded half-up."""
    return int(math.floor(minutes * 60.0 * fs + 0.5))


def timeline_boundaries(num_samples: int, fs: float) -> tuple[int, int]:
    """Sample indices where Unfocused and Drowsy begin, clipped to the recording."""
    b1 = min(minutes_to_samples(FOCUSED_END_MIN, fs), num_samples)
    b2 = min(minutes_to_samples(UNFOCUSED_END_MIN, fs), num_samples)
    return b1, b2
