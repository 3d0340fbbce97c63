"""Train/test partitions: Subject-Specific, Common-Subject and Leave-One-Out."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .features import FeatureMatrix
from .states import StateLabel


class SplitError(ValueError):
    pass


class Paradigm(enum.Enum):
    SUBJECT_SPECIFIC = "subject-specific"
    COMMON_SUBJECT = "common-subject"
    LEAVE_ONE_OUT = "leave-one-out"

    @property
    def needs_subject(self) -> bool:
        return self is not Paradigm.COMMON_SUBJECT


@dataclass(frozen=True)
class SplitSpec:
    paradigm: Paradigm
    subject: str | None = None
    test_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "paradigm", Paradigm(self.paradigm))
        if self.paradigm.needs_subject and not self.subject:
            raise SplitError(f"{self.paradigm.value} needs a subject")
        if not 0.0 < self.test_fraction < 1.0:
            raise SplitError(f"test_fraction must be in (0, 1), got {self.test_fraction}")
        if self.seed < 0:
            raise SplitError("seed must be non-negative")

    def describe(self) -> str:
        if self.paradigm is Paradigm.COMMON_SUBJECT:
            return f"{self.paradigm.value}(seed={self.seed})"
        if self.paradigm is Paradigm.LEAVE_ONE_OUT:
            return f"{self.paradigm.value}({self.subject})"
        return f"{self.paradigm.value}({self.subject},seed={self.seed})"


@dataclass(frozen=True)
class DatasetSplit:
    train_indices: np.ndarray
    test_indices: np.ndarray


def stratified_split(indices, labels, test_fraction: float, seed: int) -> DatasetSplit:
    """Per-class shuffle with a class-specific stream (seed XOR class code)."""
    indices = np.asarray(indices)
    labels = np.asarray(labels)
    train, test = [], []
    for code in StateLabel:
        members = indices[labels == code]
        if len(members) == 0:
            raise SplitError(f"class {code.title} has no rows; stratification impossible")
        if len(members) < 2:
            raise SplitError(f"class {code.title} has a single row; cannot place it on both sides")
        rng = np.random.default_rng(seed ^ int(code))
        perm = rng.permutation(members)
        n_test = int(np.floor(len(members) * test_fraction + 0.5))
        n_test = min(max(n_test, 1), len(members) - 1)
        test.append(perm[:n_test])
        train.append(perm[n_test:])
    return DatasetSplit(np.sort(np.concatenate(train)), np.sort(np.concatenate(test)))


def make_split(m: FeatureMatrix, spec: SplitSpec) -> DatasetSplit:
    subjects = set(m.subjects.tolist())
    if spec.paradigm.needs_subject and spec.subject not in subjects:
        raise SplitError(f"unknown subject {spec.subject!r}; dataset has {sorted(subjects)}")
    all_idx = np.arange(m.num_rows)
    if spec.paradigm is Paradigm.LEAVE_ONE_OUT:
        if len(subjects) < 2:
            raise SplitError("leave-one-out needs at least two subjects")
        mask = m.subjects == spec.subject
        return DatasetSplit(all_idx[~mask], all_idx[mask])
    if spec.paradigm is Paradigm.SUBJECT_SPECIFIC:
        mask = m.subjects == spec.subject
        return stratified_split(all_idx[mask], m.labels[mask], spec.test_fraction, spec.seed)
    return stratified_split(all_idx, m.labels, spec.test_fraction, spec.seed)
