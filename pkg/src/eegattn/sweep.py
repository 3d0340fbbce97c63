"""Experiment sweeps over formation, STFT, channel, classifier and paradigm axes.

A grid point fixes one value per axis. Each point is evaluated for every seed
and, for the per-subject paradigms, every subject; features are computed once
per (d_L, w_L, w_S, channels) and shared by the points that need them.

Grid files are flat ``key = comma-list`` lines::

    # drowsy-length study
    d_l = 10, 20, max
    classifiers = rf, svm, dnn4, dnn6
    paradigms = leave-one-out
    seeds = 1..6
    channels = F3 F4 Fz C3 C4 Cz Pz, Fz F3 Pz   # space-separated within a subset
    rf.num_trees = 50                           # per-classifier config override
    tables = d_l classifier, w_l w_s            # grouped tables to emit
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .features import (
    BinningParams,
    FeatureMatrix,
    FeatureParams,
    SmoothingParams,
    apply_scaler,
    featurize_corpus,
    fit_scaler,
)
from .formation import DrowsyLength, FormationParams, form_corpus
from .ingest import CANONICAL_CHANNELS
from .metrics import EvalReport, MetricsError
from .models import CLASSIFIERS, make_config, predict, train
from .spectral import W_L_RANGE, W_S_RANGE, StftParams
from .split import Paradigm, SplitSpec, make_split

log = logging.getLogger(__name__)

AXES = ("d_l", "w_l", "w_s", "channels", "classifier", "paradigm")
RECORD_AXES = AXES + ("n_channels", "shift_ratio", "seed", "subject")
METRIC_COLUMNS = (
    "balanced_accuracy",
    "plain_accuracy",
    "drowsy_recall",
    "recall_focused",
    "recall_unfocused",
    "recall_drowsy",
)
RESULT_COLUMNS = (
    ("point_key",) + RECORD_AXES + METRIC_COLUMNS + ("confusion", "n_train", "n_test", "model_seed", "error")
)


class SweepError(ValueError):
    pass


class GridParseError(SweepError):
    pass


@dataclass(frozen=True)
class SweepGrid:
    d_l: tuple[str, ...] = ("20",)
    w_l: tuple[float, ...] = (4.0,)
    w_s: tuple[int, ...] = (128,)
    channels: tuple[tuple[str, ...], ...] = (CANONICAL_CHANNELS,)
    classifiers: tuple[str, ...] = ("svm",)
    paradigms: tuple[str, ...] = ("leave-one-out",)
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5, 6)
    test_fraction: float = 0.2
    drop_first_trials: int = 2
    bin_size: float = 0.5
    f_range: tuple[float, float] = (0.0, 18.0)
    smoothing_s: float = 15.0
    fs: float = 128.0
    model_overrides: dict = field(default_factory=dict)  # classifier -> {field: value}
    tables: tuple[tuple[str, ...], ...] = ()

    def __post_init__(self):
        norm = {
            "d_l": tuple(str(DrowsyLength.parse(v)) for v in self.d_l),
            "w_l": tuple(float(v) for v in self.w_l),
            "w_s": tuple(int(v) for v in self.w_s),
            "channels": tuple(tuple(c) for c in self.channels),
            "classifiers": tuple(c.lower() for c in self.classifiers),
            "paradigms": tuple(Paradigm(p).value for p in self.paradigms),
            "seeds": tuple(int(s) for s in self.seeds),
            "tables": tuple(tuple(t) for t in self.tables),
            "f_range": tuple(float(f) for f in self.f_range),
        }
        for k, v in norm.items():
            object.__setattr__(self, k, v)
        for name in ("d_l", "w_l", "w_s", "channels", "classifiers", "paradigms", "seeds"):
            if not getattr(self, name):
                raise SweepError(f"grid axis {name!r} is empty")
        for w in self.w_l:
            if not W_L_RANGE[0] <= w <= W_L_RANGE[1]:
                raise SweepError(f"w_l = {w:g} outside [{W_L_RANGE[0]:g}, {W_L_RANGE[1]:g}] s")
        for w in self.w_s:
            if not W_S_RANGE[0] <= w <= W_S_RANGE[1]:
                raise SweepError(f"w_s = {w} outside [{W_S_RANGE[0]}, {W_S_RANGE[1]}] samples")
        for c in self.classifiers:
            if c not in CLASSIFIERS:
                raise SweepError(f"unknown classifier {c!r}")
        for key in self.model_overrides:
            if key not in CLASSIFIERS + ("mlp",):
                raise SweepError(f"override for unknown classifier {key!r}")
        for t in self.tables:
            for axis in t:
                if axis not in RECORD_AXES:
                    raise SweepError(f"unknown table axis {axis!r}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["model_overrides"] = {k: dict(sorted(v.items())) for k, v in sorted(self.model_overrides.items())}
        return d

    def fingerprint(self, corpus_id: str = "") -> str:
        payload = json.dumps({"grid": self.to_dict(), "corpus": corpus_id}, sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def points(self) -> list["GridPoint"]:
        out = []
        for d_l in self.d_l:
            for w_l in self.w_l:
                for w_s in self.w_s:
                    for ch in self.channels:
                        for clf in self.classifiers:
                            for para in self.paradigms:
                                out.append(GridPoint(d_l, w_l, w_s, ch, clf, para))
        return sorted(out, key=lambda p: p.key)

    def overrides_for(self, classifier: str) -> dict:
        merged = {}
        if classifier in ("dnn4", "dnn6"):
            merged.update(self.model_overrides.get("mlp", {}))
        merged.update(self.model_overrides.get(classifier, {}))
        return merged

    def feature_params(self, point: "GridPoint") -> FeatureParams:
        return FeatureParams(
            stft=StftParams(w_l=point.w_l, w_s=point.w_s, fs=self.fs),
            binning=BinningParams(self.bin_size, self.f_range),
            smoothing=SmoothingParams(self.smoothing_s),
        )

    def formation_params(self, point: "GridPoint") -> FormationParams:
        return FormationParams(d_l=point.d_l, channels=point.channels, drop_first_trials=self.drop_first_trials)


@dataclass(frozen=True)
class GridPoint:
    d_l: str
    w_l: float
    w_s: int
    channels: tuple[str, ...]
    classifier: str
    paradigm: str

    @property
    def feature_key(self) -> str:
        return f"dl={self.d_l}|wl={self.w_l:g}|ws={self.w_s}|ch={'+'.join(self.channels)}"

    @property
    def key(self) -> str:
        return f"{self.feature_key}|clf={self.classifier}|para={self.paradigm}"

    def axis_values(self, fs: float = 128.0) -> dict:
        return {
            "d_l": self.d_l,
            "w_l": f"{self.w_l:g}",
            "w_s": str(self.w_s),
            "channels": "+".join(self.channels),
            "classifier": self.classifier,
            "paradigm": self.paradigm,
            "n_channels": str(len(self.channels)),
            "shift_ratio": f"{self.w_s / (self.w_l * fs):.6g}",
        }


def derive_seed(fingerprint: str, point_key: str, seed: int) -> int:
    h = hashlib.sha256(f"{fingerprint}|{point_key}|{seed}".encode()).digest()
    return int.from_bytes(h[:4], "little") & 0x7FFFFFFF


# ----------------------------------------------------------------------------
# Grid files
# ----------------------------------------------------------------------------

_LIST_KEYS = {"d_l", "w_l", "w_s", "channels", "classifiers", "paradigms", "seeds", "tables"}
_SCALAR_KEYS = {
    "test_fraction": float,
    "drop_first_trials": int,
    "bin_size": float,
    "smoothing_s": float,
    "fs": float,
}


def _parse_value(text: str):
    t = text.strip()
    low = t.lower()
    if low in ("none", "null"):
        return None
    if low in ("true", "false"):
        return low == "true"
    for conv in (int, float):
        try:
            return conv(t)
        except ValueError:
            pass
    return t


def _parse_seeds(items, lineno):
    seeds = []
    for it in items:
        if ".." in it:
            a, _, b = it.partition("..")
            try:
                seeds.extend(range(int(a), int(b) + 1))
            except ValueError:
                raise GridParseError(f"line {lineno}: bad seed range {it!r}") from None
        else:
            try:
                seeds.append(int(it))
            except ValueError:
                raise GridParseError(f"line {lineno}: bad seed {it!r}") from None
    return seeds


def parse_grid(text: str) -> SweepGrid:
    kwargs: dict = {}
    overrides: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().lower()
        if not sep or not key or not value.strip():
            raise GridParseError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        items = [v.strip() for v in value.split(",")]
        if any(not v for v in items):
            raise GridParseError(f"line {lineno}: empty list item in {raw.strip()!r}")
        try:
            if "." in key:
                clf, _, fld = key.partition(".")
                overrides.setdefault(clf, {})[fld] = _parse_value(value)
            elif key == "f_range":
                if len(items) != 2:
                    raise GridParseError(f"line {lineno}: f_range needs two values")
                kwargs["f_range"] = (float(items[0]), float(items[1]))
            elif key in _SCALAR_KEYS:
                kwargs[key] = _SCALAR_KEYS[key](value.strip())
            elif key in _LIST_KEYS:
                if key == "seeds":
                    kwargs[key] = tuple(_parse_seeds(items, lineno))
                elif key in ("channels", "tables"):
                    kwargs[key] = tuple(tuple(it.split()) for it in items)
                elif key == "w_l":
                    kwargs[key] = tuple(float(it) for it in items)
                elif key == "w_s":
                    kwargs[key] = tuple(int(it) for it in items)
                else:
                    kwargs[key] = tuple(items)
            else:
                raise GridParseError(f"line {lineno}: unknown key {key!r}")
        except ValueError as exc:
            if isinstance(exc, GridParseError):
                raise
            raise GridParseError(f"line {lineno}: {exc}") from None
    try:
        return SweepGrid(model_overrides=overrides, **kwargs)
    except (SweepError, ValueError) as exc:
        raise GridParseError(str(exc)) from None


def load_grid(path) -> SweepGrid:
    return parse_grid(Path(path).read_text())


# ----------------------------------------------------------------------------
# Running
# ----------------------------------------------------------------------------


def corpus_id(recordings) -> str:
    h = hashlib.sha256()
    for r in recordings:
        h.update(f"{r.subject_id}|{r.trial_index}|{r.sample_rate_hz}|{','.join(r.channel_labels)}".encode())
        h.update(np.ascontiguousarray(r.samples).tobytes())
    return h.hexdigest()[:16]


def evaluate(features: FeatureMatrix, split_spec: SplitSpec, model_config, **metadata) -> tuple[EvalReport, int, int]:
    """Split, standardize on the training rows, train, and score the test rows."""
    split = make_split(features, split_spec)
    train_m = features.take(split.train_indices)
    test_m = features.take(split.test_indices)
    scaler = fit_scaler(train_m)
    model = train(model_config, apply_scaler(scaler, train_m))
    y_pred = predict(model, apply_scaler(scaler, test_m))
    report = EvalReport.from_predictions(test_m.labels, y_pred, **metadata)
    return report, len(split.train_indices), len(split.test_indices)


@dataclass
class SweepResult:
    records: list[dict]
    fingerprint: str
    durations: dict = field(default_factory=dict)  # point_key -> seconds

    def sorted_records(self) -> list[dict]:
        return sorted(self.records, key=_record_sort_key)

    def errors(self) -> list[dict]:
        return [r for r in self.records if r.get("error")]


def _record_sort_key(r: dict):
    return (r["point_key"], int(r["seed"]), r["subject"])


class _FeatureCache:
    """Shared per-feature-key matrices; disk-backed when a directory is given."""

    def __init__(self, recordings, grid: SweepGrid, directory: Path | None, users: dict):
        self.recordings = recordings
        self.grid = grid
        self.directory = directory
        self.users = dict(users)  # feature_key -> remaining grid points
        self.mem: dict = {}
        self.locks: dict = {}
        self.guard = threading.Lock()

    def _path(self, key: str) -> Path | None:
        if self.directory is None:
            return None
        safe = hashlib.sha256(key.encode()).hexdigest()[:16]
        return self.directory / f"{safe}.features"

    def get(self, point: GridPoint) -> FeatureMatrix:
        key = point.feature_key
        with self.guard:
            lock = self.locks.setdefault(key, threading.Lock())
        with lock:
            if key in self.mem:
                return self.mem[key]
            path = self._path(key)
            if path is not None and path.exists():
                fm = _load_features(path)
            else:
                corpus = form_corpus(self.recordings, self.grid.formation_params(point))
                fm = featurize_corpus(corpus, self.grid.feature_params(point))
                if path is not None:
                    path.parent.mkdir(parents=True, exist_ok=True)
                    _save_features(fm, path)
            self.mem[key] = fm
            return fm

    def release(self, point: GridPoint) -> None:
        with self.guard:
            self.users[point.feature_key] -= 1
            if self.users[point.feature_key] <= 0:
                self.mem.pop(point.feature_key, None)


def _save_features(fm: FeatureMatrix, path: Path) -> None:
    with open(path, "wb") as f:
        np.savez(
            f, rows=fm.rows, labels=fm.labels, subjects=fm.subjects, trials=fm.trials,
            frame_times=fm.frame_times, feature_names=np.array(fm.feature_names),
        )


def _load_features(path: Path) -> FeatureMatrix:
    with np.load(path) as z:
        return FeatureMatrix(
            z["rows"], z["labels"], z["subjects"], z["trials"], z["frame_times"], z["feature_names"].tolist()
        )


def _test_subjects(paradigm: str, subjects: list[str]) -> list[str]:
    if Paradigm(paradigm).needs_subject:
        return subjects
    return [""]


def _run_point(point: GridPoint, grid: SweepGrid, fingerprint: str, cache: _FeatureCache, subjects, fail_fast,
               skip=frozenset()):
    records = []
    try:
        features = cache.get(point)
    except Exception as exc:
        if fail_fast:
            raise
        features = None
        stage_error = f"featurize: {type(exc).__name__}: {exc}"
    for seed in grid.seeds:
        for subject in _test_subjects(point.paradigm, subjects):
            if (str(seed), subject) in skip:
                continue
            rec = {"point_key": point.key, **point.axis_values(grid.fs), "seed": str(seed), "subject": subject}
            model_seed = derive_seed(fingerprint, point.key, seed)
            rec["model_seed"] = str(model_seed)
            for col in METRIC_COLUMNS + ("confusion", "n_train", "n_test"):
                rec[col] = ""
            rec["error"] = ""
            if features is None:
                rec["error"] = stage_error
                records.append(rec)
                continue
            try:
                spec = SplitSpec(point.paradigm, subject or None, grid.test_fraction, seed)
                config = make_config(point.classifier, seed=model_seed, **grid.overrides_for(point.classifier))
                report, n_train, n_test = evaluate(features, spec, config)
            except Exception as exc:
                if fail_fast:
                    raise
                rec["error"] = f"{type(exc).__name__}: {exc}"
                records.append(rec)
                continue
            rec.update(_report_columns(report))
            rec["n_train"] = str(n_train)
            rec["n_test"] = str(n_test)
            records.append(rec)
    cache.release(point)
    return records


def _report_columns(report: EvalReport) -> dict:
    try:
        drowsy = repr(report.drowsy_recall)
    except MetricsError:
        drowsy = ""
    recalls = [("" if math.isnan(v) else repr(float(v))) for v in report.per_class_recall]
    return {
        "balanced_accuracy": repr(report.balanced_accuracy),
        "plain_accuracy": repr(report.plain_accuracy),
        "drowsy_recall": drowsy,
        "recall_focused": recalls[0],
        "recall_unfocused": recalls[1],
        "recall_drowsy": recalls[2],
        "confusion": " ".join(str(int(v)) for v in report.confusion.ravel()),
    }


def run_sweep(
    recordings,
    grid: SweepGrid,
    workers: int = 1,
    out_dir=None,
    fail_fast: bool = False,
) -> SweepResult:
    """Evaluate every grid point; with ``out_dir`` records are appended to
    ``records.jsonl`` as points finish and a rerun skips completed points."""
    recordings = list(recordings)
    cid = corpus_id(recordings)
    fingerprint = grid.fingerprint(cid)
    subjects = sorted({r.subject_id for r in recordings})
    points = grid.points()

    out_dir = Path(out_dir) if out_dir is not None else None
    done: dict = {}
    journal = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        journal = out_dir / "records.jsonl"
        done = _read_journal(journal, fingerprint)
    expected = {p.key: len(grid.seeds) * len(_test_subjects(p.paradigm, subjects)) for p in points}
    todo = [p for p in points if len(done.get(p.key, {})) != expected[p.key]]
    log.info("sweep %s: %d points, %d to run", fingerprint, len(points), len(todo))

    users: dict = {}
    for p in todo:
        users[p.feature_key] = users.get(p.feature_key, 0) + 1
    cache_dir = out_dir / "cache" / fingerprint if out_dir is not None else None
    cache = _FeatureCache(recordings, grid, cache_dir, users)

    # journaled records are kept verbatim; only the missing (seed, subject) cells are computed
    records = [r for p in points for r in done.get(p.key, {}).values()]
    durations: dict = {}
    write_lock = threading.Lock()

    def job(point):
        t0 = time.perf_counter()
        skip = frozenset(done.get(point.key, {}))
        recs = _run_point(point, grid, fingerprint, cache, subjects, fail_fast, skip)
        elapsed = time.perf_counter() - t0
        with write_lock:
            records.extend(recs)
            durations[point.key] = elapsed
            if journal is not None:
                with open(journal, "a") as f:
                    for r in recs:
                        f.write(json.dumps({"fingerprint": fingerprint, **r}, sort_keys=True) + "\n")
        return point.key

    # group points by feature key so cached matrices are released early
    todo.sort(key=lambda p: (p.feature_key, p.key))
    if workers <= 1:
        for p in todo:
            job(p)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for _ in pool.map(job, todo):
                pass
    return SweepResult(sorted(records, key=_record_sort_key), fingerprint, durations)


def _read_journal(path: Path, fingerprint: str) -> dict:
    done: dict = {}
    if not path.exists():
        return done
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                continue  # torn final line from an interrupted run
            if rec.pop("fingerprint", None) != fingerprint:
                continue
            done.setdefault(rec["point_key"], {})[(rec["seed"], rec["subject"])] = rec
    return done


# ----------------------------------------------------------------------------
# Output tables
# ----------------------------------------------------------------------------


def write_results(result: SweepResult, path, provenance: dict | None = None) -> None:
    """Sorted per-record CSV; ``provenance`` goes in leading ``# key=json`` lines."""
    with open(path, "w", newline="") as f:
        for key in sorted(provenance or {}):
            f.write(f"# {key}={json.dumps(provenance[key], sort_keys=True)}\n")
        w = csv.DictWriter(f, fieldnames=RESULT_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in result.sorted_records():
            w.writerow({k: r.get(k, "") for k in RESULT_COLUMNS})


def write_timings(result: SweepResult, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["point_key", "seconds"])
        for key in sorted(result.durations):
            w.writerow([key, f"{result.durations[key]:.3f}"])


def read_results(path) -> SweepResult:
    with open(path, newline="") as f:
        lines = [line for line in f if not line.startswith("#")]
    records = list(csv.DictReader(lines))
    return SweepResult(records, fingerprint="")


def _axis_sort_key(value: str):
    try:
        return (0, float(value), value)
    except ValueError:
        return (1, 0.0, value)


def group_records(records, group_by, metric: str = "balanced_accuracy") -> list[tuple[tuple, np.ndarray]]:
    for axis in group_by:
        if axis not in RECORD_AXES:
            raise SweepError(f"unknown axis {axis!r}; choose from {', '.join(RECORD_AXES)}")
    groups: dict = {}
    for r in records:
        if r.get("error") or r.get(metric, "") == "":
            continue
        key = tuple(str(r[a]) for a in group_by)
        groups.setdefault(key, []).append(float(r[metric]))
    keys = sorted(groups, key=lambda k: tuple(_axis_sort_key(v) for v in k))
    return [(k, np.array(groups[k])) for k in keys]


def emit_table(result: SweepResult, group_by, path, drowsy_recall: bool = False) -> Path:
    """One CSV row per group with mean, best and std over seeds and subjects."""
    group_by = list(group_by)
    for axis in group_by:
        if axis not in RECORD_AXES:
            raise SweepError(f"unknown axis {axis!r}; choose from {', '.join(RECORD_AXES)}")
    header = group_by + ["n", "mean_accuracy", "best_accuracy", "std_accuracy"]
    if drowsy_recall:
        header += ["mean_drowsy_recall", "best_drowsy_recall", "std_drowsy_recall"]
    recall_groups = dict(group_records(result.records, group_by, "drowsy_recall")) if drowsy_recall else {}
    path = Path(path)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for key, acc in group_records(result.records, group_by):
            row = list(key) + [len(acc), f"{acc.mean():.6f}", f"{acc.max():.6f}", f"{acc.std():.6f}"]
            if drowsy_recall:
                rec = recall_groups.get(key, np.array([]))
                if len(rec):
                    row += [f"{rec.mean():.6f}", f"{rec.max():.6f}", f"{rec.std():.6f}"]
                else:
                    row += ["", "", ""]
            w.writerow(row)
    return path


def table_name(group_by) -> str:
    return "table_" + "_".join(group_by) + ".csv"
