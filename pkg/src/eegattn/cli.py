"""Command-line entry point: synth, featurize, train, eval, sweep, report."""

from __future__ import annotations

import argparse
import contextlib
import hashlib
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .config import FIELD_NAMES, RunConfig, load_config_file, sha256_file, sha256_files
from .features import (
    FeatureMatrix,
    Scaler,
    apply_scaler,
    featurize_recording,
    fit_scaler,
    read_feature_matrix,
    write_feature_matrix,
)
from .formation import assign_labels, select_trials
from .ingest import (
    Manifest,
    ManifestEntry,
    SynthSpec,
    generate_synthetic,
    load_manifest,
    load_recording,
    write_manifest,
    write_recording,
)
from .metrics import EvalReport
from .models import CLASSIFIERS, load_model, predict, save_model, train
from .split import Paradigm, SplitSpec, make_split
from .sweep import (
    emit_table,
    load_grid,
    read_results,
    run_sweep,
    table_name,
    write_results,
    write_timings,
)

log = logging.getLogger("eegattn")


class CliError(Exception):
    pass


@contextlib.contextmanager
def stage(name: str):
    try:
        yield
    except CliError:
        raise
    except (ValueError, OSError, KeyError) as exc:
        raise CliError(f"{name}: {exc}") from exc


def _channels(text: str) -> tuple[str, ...]:
    return tuple(c.strip() for c in text.split(",") if c.strip())


def _d_l(text: str) -> str:
    if text.lower() == "max":
        return "max"
    float(text)
    return text


def _opt_int(text: str):
    return None if text.lower() in ("none", "unlimited") else int(text)


def _formation_args(p):
    g = p.add_argument_group("formation")
    g.add_argument("--d-l", dest="d_l", type=_d_l, help="retained drowsy minutes: 10, 20 or max")
    g.add_argument("--channels", type=_channels, help="comma-separated channel subset, in order")
    g.add_argument("--drop-first-trials", dest="drop_first_trials", type=int)


def _feature_args(p):
    g = p.add_argument_group("features")
    g.add_argument("--w-l", dest="w_l", type=float, help="STFT window length in seconds")
    g.add_argument("--w-s", dest="w_s", type=int, help="STFT window shift in samples")
    g.add_argument("--bin-size", dest="bin_size", type=float)
    g.add_argument("--f-lo", dest="f_lo", type=float)
    g.add_argument("--f-hi", dest="f_hi", type=float)
    g.add_argument("--smoothing", dest="smoothing_s", type=float, help="running-average span in seconds")


def _split_args(p):
    g = p.add_argument_group("split")
    g.add_argument("--paradigm", choices=[x.value for x in Paradigm])
    g.add_argument("--subject")
    g.add_argument("--test-fraction", dest="test_fraction", type=float)
    g.add_argument("--seed", type=int)


def _model_args(p):
    g = p.add_argument_group("model")
    g.add_argument("--model", choices=CLASSIFIERS)
    g.add_argument("--rf-trees", dest="rf_trees", type=int)
    g.add_argument("--rf-max-depth", dest="rf_max_depth", type=_opt_int)
    g.add_argument("--svm-c", dest="svm_c", type=float)
    g.add_argument("--svm-epochs", dest="svm_epochs", type=int)
    g.add_argument("--mlp-epochs", dest="mlp_epochs", type=int)
    g.add_argument("--mlp-batch-size", dest="mlp_batch_size", type=int)
    g.add_argument("--mlp-lr", dest="mlp_lr", type=float)
    g.add_argument("--mlp-dropout", dest="mlp_dropout", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eegattn", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_, description=help_)
        p.add_argument("--config", type=Path, help="JSON or key = value file; flags take precedence")
        return p

    p = add("synth", "write a synthetic corpus (recording files + manifest)")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--subjects", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--minutes", type=float)
    p.add_argument("--variability", type=float, help="per-subject profile perturbation scale")
    p.add_argument("--noise-exponent", dest="noise_exponent", type=float)
    p.add_argument("--seed", type=int)

    p = add("featurize", "form, label and featurize a corpus into a feature CSV")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    _formation_args(p)
    _feature_args(p)

    p = add("train", "split, standardize, train and evaluate one model")
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="model file; the report goes beside it")
    _split_args(p)
    _model_args(p)

    p = add("eval", "evaluate a saved model on a feature file")
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--model-file", dest="model_file", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="report path")
    _split_args(p)
    p.add_argument("--all-rows", action="store_true", help="score every row instead of the split's test rows")

    p = add("sweep", "run a grid of experiments")
    p.add_argument("--grid", type=Path, required=True)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--fail-fast", action="store_true")
    p.add_argument("--group-by", action="append", default=[], type=_channels, help="comma-separated axes; repeatable")
    p.add_argument("--drowsy-recall", action="store_true", help="add drowsy-recall columns to tables")

    p = add("report", "group sweep results into a table")
    p.add_argument("--results", type=Path, required=True)
    p.add_argument("--group-by", required=True, type=_channels)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--drowsy-recall", action="store_true")
    return parser


def resolve_config(args) -> RunConfig:
    """RunConfig defaults < --config file < explicit flags."""
    values = {}
    if getattr(args, "config", None) is not None:
        values.update(load_config_file(args.config))
    for key, value in vars(args).items():
        if key in FIELD_NAMES and value is not None:
            values[key] = value
    cfg = RunConfig()
    types = {f: type(getattr(cfg, f)) for f in FIELD_NAMES}
    for key, value in values.items():
        if key == "channels" and isinstance(value, str):
            value = _channels(value)
        elif key in ("subject", "rf_max_depth") and isinstance(value, str):
            value = None if value.lower() in ("none", "") else (value if key == "subject" else int(value))
        elif isinstance(value, str) and types[key] in (int, float):
            value = types[key](value)
        setattr(cfg, key, value)
    cfg.channels = tuple(cfg.channels)
    cfg.d_l = str(cfg.d_l)
    return cfg


# ----------------------------------------------------------------------------
# Subcommands
# ----------------------------------------------------------------------------


def cmd_synth(args, cfg: RunConfig) -> int:
    if cfg.minutes < 20:
        raise CliError(f"synth: --minutes {cfg.minutes:g} is below the 20-min labeling minimum")
    with stage("synth"), warnings.catch_warnings():
        warnings.simplefilter("ignore")
        spec = SynthSpec(
            num_subjects=cfg.subjects,
            trials_per_subject=cfg.trials,
            trial_duration_min=cfg.minutes,
            subject_variability=cfg.variability,
            noise_exponent=cfg.noise_exponent,
            seed=cfg.seed,
        )
    out = args.out
    with stage("synth"):
        (out / "recordings").mkdir(parents=True, exist_ok=True)
        entries = []
        override = cfg.minutes if cfg.minutes < 30 else None
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            recordings = generate_synthetic(spec)
        for rec in recordings:
            path = out / "recordings" / f"{rec.subject_id}_trial{rec.trial_index}.csv"
            write_recording(rec, path)
            entries.append(ManifestEntry(rec.subject_id, rec.trial_index, path, override))
        manifest_path = out / "manifest.csv"
        write_manifest(Manifest(tuple(entries)), manifest_path)
    print(f"wrote {len(entries)} recordings and {manifest_path}")
    return 0


def _load_formed(manifest_path: Path, cfg: RunConfig):
    with stage("ingest"):
        manifest = load_manifest(manifest_path)
    with stage("formation"):
        manifest = select_trials(manifest, cfg.drop_first_trials)
    formed = []
    for entry in manifest:
        with stage(f"ingest {entry.subject_id} trial {entry.trial_index}"):
            rec = load_recording(entry, expected_fs=cfg.fs)
        with stage("formation"):
            formed.append(assign_labels(rec, cfg.formation()))
    return manifest, formed


def cmd_featurize(args, cfg: RunConfig) -> int:
    manifest, formed = _load_formed(args.manifest, cfg)
    with stage("features"):
        params = cfg.features()
        fm = FeatureMatrix.concat(featurize_recording(r, params) for r in formed)
    inputs = [args.manifest] + [e.path for e in manifest]
    provenance = {"stage": "featurize", "config": cfg.to_dict(), "inputs_sha256": sha256_files(inputs)}
    with stage("write"):
        write_feature_matrix(fm, args.out, provenance)
    print(f"features: {fm.num_rows} rows x {fm.num_features} features "
          f"({len(cfg.channels)} channels x {fm.num_features // len(cfg.channels)} bins) -> {args.out}")
    return 0


def _report_meta(cfg: RunConfig, split_spec: SplitSpec, inputs_sha: str, **more) -> dict:
    meta = {
        "classifier": cfg.model,
        "split": split_spec.describe(),
        "seed": cfg.seed,
        "config": cfg.to_json(),
        "inputs_sha256": inputs_sha,
    }
    meta.update(more)
    return meta


def _index_digest(indices) -> str:
    return hashlib.sha256(np.asarray(indices, dtype="<i8").tobytes()).hexdigest()


def cmd_train(args, cfg: RunConfig) -> int:
    with stage("read features"):
        fm, provenance = read_feature_matrix(args.features)
    with stage("config"):
        split_spec = cfg.split()
        model_config = cfg.model_config()
    with stage("split"):
        split = make_split(fm, split_spec)
        train_m, test_m = fm.take(split.train_indices), fm.take(split.test_indices)
    with stage("scale"):
        scaler = fit_scaler(train_m)
    with stage("train"):
        model = train(model_config, apply_scaler(scaler, train_m))
    with stage("evaluate"):
        y_pred = predict(model, apply_scaler(scaler, test_m))
        inputs_sha = sha256_file(args.features)
        feature_cfg = provenance.get("config", {})
        report = EvalReport.from_predictions(
            test_m.labels,
            y_pred,
            **_report_meta(
                cfg, split_spec, inputs_sha,
                feature_config=json.dumps(feature_cfg, sort_keys=True),
                n_train=len(split.train_indices),
                n_test=len(split.test_indices),
                test_rows_sha256=_index_digest(split.test_indices),
                test_subjects=",".join(sorted(set(test_m.subjects.tolist()))),
            ),
        )
    with stage("write"):
        args.out.parent.mkdir(parents=True, exist_ok=True)
        save_model(model, args.out, extra={"run_config": cfg.to_dict(), "scaler": scaler.to_dict(),
                                           "inputs_sha256": inputs_sha})
        report_path = args.out.with_suffix(".report.txt")
        report_path.write_text(report.to_text())
    print(f"{cfg.model} {split_spec.describe()}: balanced accuracy {report.balanced_accuracy:.4f} "
          f"-> {args.out}, {report_path}")
    return 0


def cmd_eval(args, cfg: RunConfig) -> int:
    with stage("read features"):
        fm, _ = read_feature_matrix(args.features)
    with stage("load model"):
        model = load_model(args.model_file)
        scaler = Scaler.from_dict(model.extra["scaler"])
    trained_cfg = model.extra.get("run_config", {})
    cfg.model = trained_cfg.get("model", cfg.model)
    with stage("split"):
        if args.all_rows:
            rows = np.arange(fm.num_rows)
            split_desc = "all-rows"
            split_spec = None
        else:
            split_spec = cfg.split()
            rows = make_split(fm, split_spec).test_indices
            split_desc = split_spec.describe()
        test_m = fm.take(rows)
    with stage("evaluate"):
        y_pred = predict(model, apply_scaler(scaler, test_m))
        meta = {
            "classifier": model.kind,
            "split": split_desc,
            "seed": cfg.seed,
            "config": cfg.to_json(),
            "inputs_sha256": sha256_files([args.features, args.model_file]),
            "n_test": len(rows),
            "test_rows_sha256": _index_digest(rows),
            "test_subjects": ",".join(sorted(set(test_m.subjects.tolist()))),
        }
        report = EvalReport.from_predictions(test_m.labels, y_pred, **meta)
    with stage("write"):
        args.out.write_text(report.to_text())
    print(f"{model.kind} {split_desc}: balanced accuracy {report.balanced_accuracy:.4f} -> {args.out}")
    return 0


def cmd_sweep(args, cfg: RunConfig) -> int:
    with stage("grid"):
        grid = load_grid(args.grid)
    with stage("ingest"):
        manifest = load_manifest(args.manifest)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            recordings = [load_recording(e, expected_fs=grid.fs) for e in manifest]
    args.out.mkdir(parents=True, exist_ok=True)
    result = run_sweep(recordings, grid, workers=args.workers, out_dir=args.out, fail_fast=args.fail_fast)
    provenance = {
        "stage": "sweep",
        "grid": grid.to_dict(),
        "fingerprint": result.fingerprint,
        "inputs_sha256": sha256_files([args.grid, args.manifest] + [e.path for e in manifest]),
    }
    write_results(result, args.out / "results.csv", provenance)
    write_timings(result, args.out / "timings.csv")
    tables = list(grid.tables) + [tuple(g) for g in args.group_by]
    for group_by in tables:
        emit_table(result, group_by, args.out / table_name(group_by), drowsy_recall=args.drowsy_recall)
    n_err = len(result.errors())
    print(f"sweep {result.fingerprint}: {len(result.records)} records, {n_err} errors -> {args.out}")
    if n_err:
        for r in result.errors()[:5]:
            print(f"  {r['point_key']} seed={r['seed']} subject={r['subject']}: {r['error']}", file=sys.stderr)
    return 0


def cmd_report(args, cfg: RunConfig) -> int:
    with stage("report"):
        result = read_results(args.results)
        emit_table(result, list(args.group_by), args.out, drowsy_recall=args.drowsy_recall)
    print(f"wrote {args.out}")
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "featurize": cmd_featurize,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "report": cmd_report,
}


def _show_warning(message, category, filename, lineno, file=None, line=None):
    print(f"warning: {message}", file=sys.stderr)


def main(argv=None) -> int:
    warnings.showwarning = _show_warning
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        with stage("config"):
            cfg = resolve_config(args)
            if args.command in ("train",):
                cfg.validate()
        return COMMANDS[args.command](args, cfg)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # surfaced as a stage failure, never a traceback dump
        if args.verbose:
            raise
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
