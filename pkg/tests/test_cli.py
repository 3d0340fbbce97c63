import csv
import hashlib
import json
import subprocess
import sys
from pathlib import Path

import pytest

from eegattn.cli import main, resolve_config, build_parser
from eegattn.features import read_feature_matrix, write_feature_matrix
from eegattn.metrics import EvalReport

REPO = Path(__file__).resolve().parents[1]


def run(*argv):
    return main([str(a) for a in argv])


def digest(paths):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(paths)}


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    assert run("synth", "--out", out, "--subjects", 2, "--trials", 3, "--minutes", 21, "--seed", 5) == 0
    return out


@pytest.fixture(scope="module")
def features(corpus, tmp_path_factory):
    path = tmp_path_factory.mktemp("feat") / "features.csv"
    assert run("featurize", "--manifest", corpus / "manifest.csv", "--out", path) == 0
    return path


def test_synth_layout_and_rerun(corpus, tmp_path):
    files = sorted((corpus / "recordings").iterdir())
    assert len(files) == 6
    lines = (corpus / "manifest.csv").read_text().splitlines()
    assert lines[0] == "s1,1,recordings/s1_trial1.csv,21"
    assert run("synth", "--out", tmp_path, "--subjects", 2, "--trials", 3, "--minutes", 21, "--seed", 5) == 0
    assert digest((tmp_path / "recordings").iterdir()) == digest(files)


def test_synth_rejects_15_minutes(tmp_path, capsys):
    assert run("synth", "--out", tmp_path, "--minutes", 15) == 2
    assert "20-min" in capsys.readouterr().err


def test_featurize_default_width(features):
    fm, prov = read_feature_matrix(features)
    assert fm.num_features == 252
    assert set(fm.subjects.tolist()) == {"s1", "s2"}
    assert set(fm.trials.tolist()) == {3}
    assert prov["config"]["w_l"] == 4.0 and len(prov["inputs_sha256"]) == 64


def test_featurize_three_channels(corpus, tmp_path, capsys):
    out = tmp_path / "f3.csv"
    assert run("featurize", "--manifest", corpus / "manifest.csv", "--out", out, "--channels", "Fz,F3,Pz") == 0
    assert "108 features" in capsys.readouterr().out
    assert read_feature_matrix(out)[0].num_features == 108


def test_featurize_incompatible_window(corpus, tmp_path, capsys):
    rc = run("featurize", "--manifest", corpus / "manifest.csv", "--out", tmp_path / "x.csv", "--w-l", 3)
    assert rc == 2
    err = capsys.readouterr().err
    assert "features:" in err and "incompatible binning" in err


def test_train_leave_one_out_purity(features, tmp_path):
    model = tmp_path / "m.bin"
    rc = run("train", "--features", features, "--out", model, "--paradigm", "leave-one-out", "--subject", "s2",
             "--model", "dnn6", "--mlp-epochs", 2)
    assert rc == 0
    rep = EvalReport.from_text(model.with_suffix(".report.txt").read_text())
    assert rep.metadata["test_subjects"] == "s2"
    assert rep.metadata["split"] == "leave-one-out(s2)"
    assert json.loads(rep.metadata["config"])["model"] == "dnn6"


def test_train_seeds_give_distinct_test_sets(features, tmp_path):
    digests = set()
    for seed in range(1, 7):
        model = tmp_path / f"m{seed}.bin"
        assert run("train", "--features", features, "--out", model, "--seed", seed, "--svm-epochs", 1) == 0
        digests.add(EvalReport.from_text(model.with_suffix(".report.txt").read_text()).metadata["test_rows_sha256"])
    assert len(digests) == 6


def test_train_single_class_errors(features, tmp_path, capsys):
    fm, prov = read_feature_matrix(features)
    one = fm.take((fm.labels == 0).nonzero()[0])
    write_feature_matrix(one, tmp_path / "one.csv", prov)
    rc = run("train", "--features", tmp_path / "one.csv", "--out", tmp_path / "m.bin", "--model", "svm",
             "--paradigm", "leave-one-out", "--subject", "s1")
    assert rc == 2
    assert "single-class" in capsys.readouterr().err


def test_eval_matches_train_report(features, tmp_path):
    model = tmp_path / "m.bin"
    assert run("train", "--features", features, "--out", model, "--model", "rf", "--rf-trees", 5) == 0
    assert run("eval", "--features", features, "--model-file", model, "--out", tmp_path / "e.txt") == 0
    a = EvalReport.from_text(model.with_suffix(".report.txt").read_text())
    b = EvalReport.from_text((tmp_path / "e.txt").read_text())
    assert a.balanced_accuracy == b.balanced_accuracy
    assert a.metadata["test_rows_sha256"] == b.metadata["test_rows_sha256"]


def test_config_file_with_flag_precedence(tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("model = rf\nrf_trees = 9\nseed = 4\nchannels = Fz,F3\n")
    args = build_parser().parse_args(["train", "--features", "f", "--out", "m", "--config", str(cfg_file), "--seed", "2"])
    cfg = resolve_config(args)
    assert (cfg.model, cfg.rf_trees, cfg.seed, cfg.channels) == ("rf", 9, 2, ("Fz", "F3"))
    cfg_file.write_text(json.dumps({"model": "dnn4", "colour": 1}))
    with pytest.raises(ValueError, match="colour"):
        resolve_config(build_parser().parse_args(["train", "--features", "f", "--out", "m", "--config", str(cfg_file)]))


def test_sweep_bad_grid_reports_line(corpus, tmp_path, capsys):
    (tmp_path / "g.grid").write_text("seeds = 1\nd_l = 10\nthis is not valid\n")
    rc = run("sweep", "--grid", tmp_path / "g.grid", "--manifest", corpus / "manifest.csv", "--out", tmp_path / "o")
    assert rc == 2
    assert "line 3" in capsys.readouterr().err


def test_sweep_and_report(corpus, tmp_path):
    (tmp_path / "g.grid").write_text(
        "d_l = 10, 20\nclassifiers = svm\nseeds = 1..2\nsvm.epochs = 1\ntables = d_l classifier\n"
    )
    outs = []
    for workers in (1, 4):
        out = tmp_path / f"o{workers}"
        assert run("sweep", "--grid", tmp_path / "g.grid", "--manifest", corpus / "manifest.csv", "--out", out,
                   "--workers", workers, "--drowsy-recall") == 0
        outs.append(out)
    assert (outs[0] / "results.csv").read_bytes() == (outs[1] / "results.csv").read_bytes()
    table = list(csv.reader(open(outs[0] / "table_d_l_classifier.csv")))
    assert table[0][:3] == ["d_l", "classifier", "n"] and len(table) == 3
    assert run("report", "--results", outs[0] / "results.csv", "--group-by", "subject", "--out", tmp_path / "r.csv") == 0
    assert [r[0] for r in csv.reader(open(tmp_path / "r.csv"))] == ["subject", "s1", "s2"]


def test_shipped_defaults_grid(corpus, tmp_path):
    out = tmp_path / "o"
    rc = run("sweep", "--grid", REPO / "configs" / "defaults.grid", "--manifest", corpus / "manifest.csv",
             "--out", out, "--drowsy-recall")
    assert rc == 0
    for name, first in (
        ("table_d_l_classifier.csv", ["d_l", "classifier"]),
        ("table_w_l_w_s.csv", ["w_l", "w_s"]),
        ("table_n_channels_classifier.csv", ["n_channels", "classifier"]),
    ):
        rows = list(csv.reader(open(out / name)))
        assert rows[0][:2] == first and len(rows) > 1
        assert "mean_drowsy_recall" in rows[0]


def test_module_entry_point_help():
    proc = subprocess.run([sys.executable, "-m", "eegattn", "train", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "--paradigm" in proc.stdout and "--config" in proc.stdout
