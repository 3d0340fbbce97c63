"""Classifier suite: random forest, linear SVM, DNN_4 and DNN_6.

``train`` dispatches on the config type; every trained model exposes
``predict``, ``kind``, ``config``, ``n_features`` and ``classes``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from pathlib import Path

import numpy as np

from .base import ModelError
from .forest import RandomForest, RfConfig
from .mlp import Mlp, MlpConfig, gradient_check
from .svm import LinearSvm, SvmConfig

__all__ = [
    "CLASSIFIERS",
    "LinearSvm",
    "Mlp",
    "MlpConfig",
    "ModelError",
    "ModelFileError",
    "RandomForest",
    "RfConfig",
    "SvmConfig",
    "gradient_check",
    "load_model",
    "make_config",
    "predict",
    "save_model",
    "train",
]

CLASSIFIERS = ("rf", "svm", "dnn4", "dnn6")
MAGIC = b"EEGATTN-MODEL\n"
FORMAT_VERSION = 1


class ModelFileError(ModelError):
    pass


def make_config(name: str, seed: int = 0, **overrides):
    """Config for a classifier name with the given seed and field overrides."""
    name = name.lower()
    if name == "rf":
        return RfConfig(seed=seed, **overrides)
    if name == "svm":
        return SvmConfig(seed=seed, **overrides)
    if name in ("dnn4", "dnn6"):
        return MlpConfig(architecture=name, seed=seed, **overrides)
    raise ModelError(f"unknown classifier {name!r}; choose from {', '.join(CLASSIFIERS)}")


def config_kind(config) -> str:
    if isinstance(config, MlpConfig):
        return config.architecture
    return config.kind


def _model_class(kind: str):
    return {"rf": RandomForest, "svm": LinearSvm, "dnn4": Mlp, "dnn6": Mlp}[kind]


def train(config, X, y=None):
    """Fit a model. ``X`` may be a FeatureMatrix, in which case ``y`` comes from it."""
    if y is None:
        X, y = X.rows, X.labels
    return _model_class(config_kind(config)).fit(config, X, y)


def predict(model, X) -> np.ndarray:
    rows = getattr(X, "rows", X)
    return model.predict(rows)


def _config_from_dict(kind: str, d: dict):
    d = dict(d)
    if kind in ("dnn4", "dnn6"):
        d["hidden"] = tuple(d["hidden"]) if d.get("hidden") is not None else None
        return MlpConfig(**d)
    return {"rf": RfConfig, "svm": SvmConfig}[kind](**d)


def _pack_arrays(arrays: dict) -> bytes:
    """Deterministic container: JSON index line, then raw little-endian buffers."""
    index, blobs = [], []
    for name in sorted(arrays):
        a = np.ascontiguousarray(arrays[name])
        a = a.astype(a.dtype.newbyteorder("<"), copy=False)
        index.append({"name": name, "dtype": a.dtype.str, "shape": list(a.shape)})
        blobs.append(a.tobytes())
    return json.dumps(index).encode() + b"\n" + b"".join(blobs)


def _unpack_arrays(payload: bytes) -> dict:
    nl = payload.find(b"\n")
    index = json.loads(payload[:nl])
    out, pos = {}, nl + 1
    for entry in index:
        dtype = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"], dtype=np.int64))
        nbytes = count * dtype.itemsize
        out[entry["name"]] = np.frombuffer(payload[pos : pos + nbytes], dtype=dtype).reshape(entry["shape"]).copy()
        pos += nbytes
    return out


def save_model(model, path, extra: dict | None = None) -> None:
    """Magic line, JSON header with a payload checksum, then an npz payload.

    ``extra`` is stored verbatim in the header (run config, fitted scaler).
    """
    payload = _pack_arrays(model.params())
    header = {
        "format_version": FORMAT_VERSION,
        "kind": model.kind,
        "config": dataclasses.asdict(model.config),
        "n_features": model.n_features,
        "classes": list(model.classes),
        "payload_bytes": len(payload),
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
        "extra": extra or {},
    }
    Path(path).write_bytes(MAGIC + json.dumps(header, sort_keys=True).encode() + b"\n" + payload)


def load_model(path):
    blob = Path(path).read_bytes()
    if not blob.startswith(MAGIC):
        raise ModelFileError(f"{path}: not a model file (bad magic)")
    rest = blob[len(MAGIC):]
    nl = rest.find(b"\n")
    if nl < 0:
        raise ModelFileError(f"{path}: checksum error: truncated header")
    try:
        header = json.loads(rest[:nl])
    except json.JSONDecodeError:
        raise ModelFileError(f"{path}: corrupt header") from None
    if header.get("format_version") != FORMAT_VERSION:
        raise ModelFileError(
            f"{path}: format version {header.get('format_version')} is not supported (expected {FORMAT_VERSION})"
        )
    payload = rest[nl + 1 :]
    if len(payload) != header["payload_bytes"] or hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
        raise ModelFileError(f"{path}: checksum error: payload is corrupt or truncated")
    params = _unpack_arrays(payload)
    kind = header["kind"]
    config = _config_from_dict(kind, header["config"])
    model = _model_class(kind).from_params(config, header["n_features"], params, tuple(header["classes"]))
    model.extra = header.get("extra", {})
    return model
