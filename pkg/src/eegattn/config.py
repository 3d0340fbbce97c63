"""Resolved run configuration shared by the CLI stages.

Defaults are the pipeline's final choices: d_L = 20 min, w_L = 4 s,
w_S = 128 samples, 0.5 Hz bins over (0, 18] Hz, 15 s smoothing, all 7 channels.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .features import BinningParams, FeatureParams, SmoothingParams
from .formation import FormationParams
from .ingest import CANONICAL_CHANNELS, CANONICAL_FS
from .models import make_config
from .spectral import StftParams
from .split import SplitSpec


@dataclass
class RunConfig:
    # formation
    d_l: str = "20"
    channels: tuple[str, ...] = CANONICAL_CHANNELS
    drop_first_trials: int = 2
    # spectral / features
    fs: float = CANONICAL_FS
    w_l: float = 4.0
    w_s: int = 128
    bin_size: float = 0.5
    f_lo: float = 0.0
    f_hi: float = 18.0
    smoothing_s: float = 15.0
    # split
    paradigm: str = "common-subject"
    subject: str | None = None
    test_fraction: float = 0.2
    seed: int = 1
    # model
    model: str = "svm"
    rf_trees: int = 200
    rf_max_depth: int | None = None
    svm_c: float = 1.0
    svm_epochs: int = 50
    mlp_epochs: int = 30
    mlp_batch_size: int = 64
    mlp_lr: float = 1e-3
    mlp_dropout: float = 0.5
    # synthetic corpus
    subjects: int = 5
    trials: int = 5
    minutes: float = 45.0
    variability: float = 1.0
    noise_exponent: float = 1.0
    extra: dict = field(default_factory=dict)

    def formation(self) -> FormationParams:
        return FormationParams(self.d_l, tuple(self.channels), self.drop_first_trials)

    def features(self) -> FeatureParams:
        return FeatureParams(
            stft=StftParams(w_l=self.w_l, w_s=self.w_s, fs=self.fs),
            binning=BinningParams(self.bin_size, (self.f_lo, self.f_hi)),
            smoothing=SmoothingParams(self.smoothing_s),
        )

    def split(self) -> SplitSpec:
        return SplitSpec(self.paradigm, self.subject, self.test_fraction, self.seed)

    def model_config(self):
        name = self.model.lower()
        if name == "rf":
            return make_config("rf", self.seed, num_trees=self.rf_trees, max_depth=self.rf_max_depth)
        if name == "svm":
            return make_config("svm", self.seed, C=self.svm_c, epochs=self.svm_epochs)
        return make_config(
            name,
            self.seed,
            epochs=self.mlp_epochs,
            batch_size=self.mlp_batch_size,
            learning_rate=self.mlp_lr,
            dropout=self.mlp_dropout,
        )

    def validate(self) -> "RunConfig":
        self.formation()
        self.features()
        if self.paradigm != "common-subject" and not self.subject:
            raise ValueError(f"--paradigm {self.paradigm} needs --subject")
        self.split()
        self.model_config()
        return self

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["channels"] = list(self.channels)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


FIELD_NAMES = {f.name for f in dataclasses.fields(RunConfig)}


def load_config_file(path) -> dict:
    """JSON object or ``key = value`` lines; keys are RunConfig field names."""
    text = Path(path).read_text()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        data = json.loads(text)
    else:
        data = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            data[key.strip().replace("-", "_")] = value.strip()
    unknown = set(data) - FIELD_NAMES
    if unknown:
        raise ValueError(f"{path}: unknown config keys {sorted(unknown)}")
    return data


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_files(paths) -> str:
    h = hashlib.sha256()
    for p in paths:
        h.update(sha256_file(p).encode())
    return h.hexdigest()
