import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from logquality import corpus, models
from logquality.cli import main
from support import instruction, separable_corpus, toy_ie_model

FIXTURES = Path(__file__).parent / "fixtures"
TOY_FLAGS = ["--max-len", "6", "--d", "4", "--heads", "1", "--layers", "1", "--batch-size", "2",
             "--epochs", "300", "--patience", "300", "--lr", "0.01", "--seed", "0"]
SMALL_FLAGS = ["--max-len", "8", "--d", "8", "--heads", "2", "--layers", "1", "--batch-size", "32",
               "--lr", "0.003", "--seed", "0"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def write(tmp_path, name, samples):
    path = tmp_path / name
    corpus.write_dataset(corpus.Dataset(list(samples)), path)
    return path


@pytest.fixture(scope="module")
def toy_checkpoint(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("toy")
    data = write(tmp, "toy.jsonl", [instruction("Connection established", "info", line=1),
                                    instruction("Connection refused", "error", line=2)])
    assert main(["train", "--data", str(data), "--task", "ie", "--out", str(tmp / "toy.ckpt"), *TOY_FLAGS]) == 0
    return tmp / "toy.ckpt"


@pytest.fixture(scope="module")
def separable_checkpoint(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("sep")
    data = write(tmp, "sep.jsonl", separable_corpus(200))
    argv = ["train", "--data", str(data), "--task", "iwe", "--epochs", "60", "--patience", "10", *SMALL_FLAGS]
    assert main([*argv, "--out", str(tmp / "a.ckpt")]) == 0
    return data, tmp / "a.ckpt", argv


def test_extract_fixture_tree(tmp_path, capsys):
    out, skips = tmp_path / "d.jsonl", tmp_path / "skips.json"
    code, _, _ = run(capsys, "extract", "--root", FIXTURES / "extraction_tree", "--lang", "python", "java",
                     "--out", out, "--system", "fixture", "--exclude", "vendored", "--skip-report", skips)
    assert code == 0
    manifest = json.loads((FIXTURES / "extraction_manifest.json").read_text())
    got = {(s.file_path, s.line, s.level, s.static_text, s.variable_count) for s in corpus.read_dataset(out)}
    assert got == {tuple(row) for row in manifest["instructions"]}
    report = json.loads(skips.read_text())
    assert report["format_version"] == 1
    assert [s["file_path"] for s in report["skipped_files"]] == manifest["skipped_files"]
    assert report["skipped_levels"] == manifest["skipped_levels"]


def test_extract_missing_root(tmp_path, capsys):
    missing = tmp_path / "nowhere"
    code, _, err = run(capsys, "extract", "--root", missing, "--lang", "python", "--out", tmp_path / "d.jsonl")
    assert code != 0 and str(missing) in err


def test_extract_debug_only_tree(tmp_path, capsys):
    (tmp_path / "src").mkdir()
    (tmp_path / "src" / "m.py").write_text('log.debug("a")\nlogger.debug("b %s", x)\n')
    code, _, err = run(capsys, "extract", "--root", tmp_path / "src", "--lang", "python", "--out", tmp_path / "d.jsonl")
    assert code == 0
    assert len(corpus.read_dataset(tmp_path / "d.jsonl")) == 0
    assert json.loads(err)["skipped_levels"] == {"debug": 2}


def test_train_fits_separable_data(separable_checkpoint, capsys):
    data, ckpt, _ = separable_checkpoint
    code, out, _ = run(capsys, "assess", "--model", ckpt, "--data", data)
    assert code == 0
    report = json.loads(out)
    assert report["summary"]["agreement_rate"] >= 0.98
    assert Path(str(ckpt) + ".log.csv").exists()


def test_train_same_seed_same_bytes(separable_checkpoint, tmp_path, capsys):
    _, ckpt, argv = separable_checkpoint
    assert run(capsys, *argv, "--out", tmp_path / "b.ckpt")[0] == 0
    assert (tmp_path / "b.ckpt").read_bytes() == ckpt.read_bytes()


def test_train_task_mismatch(tmp_path, capsys):
    data = write(tmp_path, "ie.jsonl", [instruction(f"node {w}", lvl, line=i)
                                        for i, (w, lvl) in enumerate([("up", "info"), ("down", "error")] * 4)])
    code, _, err = run(capsys, "train", "--data", data, "--task", "we", "--out", tmp_path / "m.ckpt")
    assert code != 0 and err.startswith("error:")


def test_assess_lists_disagreements_first(toy_checkpoint, tmp_path, capsys):
    data = write(tmp_path, "d.jsonl", [instruction("Connection refused", "info", line=1),
                                       instruction("Connection established", "info", line=2)])
    code, out, _ = run(capsys, "assess", "--model", toy_checkpoint, "--data", data)
    report = json.loads(out)
    assert code == 0 and report["format_version"] == 1
    [row] = report["disagreements"]
    assert (row["text"], row["label"], row["predicted"]) == ("Connection refused", "info", "error")
    assert row["scores"][1] > row["scores"][0]
    assert [r["text"] for r in report["others"]] == ["Connection established"]


def test_assess_full_agreement(toy_checkpoint, tmp_path, capsys):
    data = write(tmp_path, "d.jsonl", [instruction("Connection refused", "error", line=1)])
    report = json.loads(run(capsys, "assess", "--model", toy_checkpoint, "--data", data)[1])
    assert report["disagreements"] == [] and report["summary"]["agree"] == 1


def test_assess_invalid_checkpoint(tmp_path, capsys):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"not a checkpoint at all")
    data = write(tmp_path, "d.jsonl", [instruction("x y")])
    code, _, err = run(capsys, "assess", "--model", bad, "--data", data)
    assert code != 0 and "invalid checkpoint" in err


def test_explain_toy_model(toy_checkpoint, capsys):
    code, out, _ = run(capsys, "explain", "--model", toy_checkpoint, "--text", "Connection refused", "--class", "info")
    report = json.loads(out)
    assert code == 0 and report["format_version"] == 1
    first = report["tokens"][0]
    assert (first["token"], first["sign"], first["rank"]) == ("refused", "-", 1)


def test_explain_empty_text(toy_checkpoint, capsys):
    code, _, err = run(capsys, "explain", "--model", toy_checkpoint, "--text", "")
    assert code != 0 and "nothing to explain" in err


def test_explain_sampled_is_deterministic(toy_checkpoint, capsys):
    argv = ["explain", "--model", toy_checkpoint, "--text", "Connection refused", "--mode", "sampled",
            "--budget", "8", "--seed", "4"]
    assert run(capsys, *argv)[1] == run(capsys, *argv)[1]


def test_explain_unknown_class(toy_checkpoint, capsys):
    code, _, err = run(capsys, "explain", "--model", toy_checkpoint, "--text", "Connection refused", "--class", "warning")
    assert code != 0 and "unknown class" in err


def test_analyze(tmp_path, capsys, toy_checkpoint):
    data = write(tmp_path, "d.jsonl", [instruction("Disk slow", "warning", line=1),
                                       instruction("Connection refused", "error", line=2),
                                       instruction("Connection established", "info", line=3)])
    code, out, _ = run(capsys, "analyze", "--data", data, "--ns", "1", "--csv", tmp_path / "e.csv")
    report = json.loads(out)
    assert code == 0 and report["instructions"] == 3
    assert (tmp_path / "e.csv").read_text().startswith("n,ngram,entropy")
    code, out, _ = run(capsys, "analyze", "--data", data, "--model", toy_checkpoint)
    assert code == 0 and "contingency" in json.loads(out)


def test_eval_unknown_protocol(toy_checkpoint, tmp_path, capsys):
    data = write(tmp_path, "d.jsonl", [instruction("x")])
    code, _, err = run(capsys, "eval", "--model", toy_checkpoint, "--data", data, "--protocol", "bootstrap")
    assert code != 0 and "unknown protocol" in err


def _four_system_data(tmp_path):
    samples = [s for i, sys in enumerate(("s1", "s2", "s3", "s4"))
               for s in separable_corpus(24, seed=i, systems=(sys,))]
    samples = [s for s in samples if s.level != "warning"]
    return write(tmp_path, "four.jsonl", samples)


def test_eval_protocols(toy_checkpoint, tmp_path, capsys):
    data = _four_system_data(tmp_path)
    code, out, _ = run(capsys, "eval", "--model", toy_checkpoint, "--data", data, "--protocol", "leave-one-system-out")
    report = json.loads(out)
    assert code == 0 and [r["name"] for r in report["rows"]] == ["s1", "s2", "s3", "s4"]
    f1 = [r["metrics"]["f1"] for r in report["rows"]]
    assert report["mean"]["f1"] == pytest.approx(np.mean(f1))
    assert report["std"]["f1"] == pytest.approx(np.std(f1))
    argv = ["eval", "--model", toy_checkpoint, "--data", data, "--protocol", "repeated-splits", "--repeats", "2"]
    first = run(capsys, *argv)[1]
    assert len(json.loads(first)["rows"]) == 2
    assert run(capsys, *argv)[1] == first
    code, out, _ = run(capsys, "eval", "--model", toy_checkpoint, "--data", data, "--protocol", "holdout")
    assert code == 0 and json.loads(out)["protocol"] == "holdout"


def test_config_file(toy_checkpoint, tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"text": "Connection refused", "class_name": "info"}))
    code, out, _ = run(capsys, "explain", "--model", toy_checkpoint, "--text", "placeholder", "--config", cfg)
    # the flag wins over the config value
    assert code == 0 and [t["token"] for t in json.loads(out)["tokens"]] == ["placeholder"]
    cfg.write_text(json.dumps({"colour": "blue"}))
    code, _, err = run(capsys, "explain", "--model", toy_checkpoint, "--text", "x", "--config", cfg)
    assert code != 0 and "colour" in err


def test_seed_environment_variable(toy_checkpoint, capsys, monkeypatch):
    argv = ["explain", "--model", toy_checkpoint, "--text", "Connection refused", "--mode", "sampled", "--budget", "4"]
    monkeypatch.setenv("QULOG_SEED", "4")
    from_env = run(capsys, *argv)[1]
    monkeypatch.delenv("QULOG_SEED")
    assert from_env == run(capsys, *argv, "--seed", "4")[1]
    monkeypatch.setenv("QULOG_SEED", "four")
    code, _, err = run(capsys, *argv)
    assert code != 0 and "QULOG_SEED" in err


def test_cli_training_matches_library(toy_checkpoint, tmp_path):
    models.save_model(toy_ie_model(), tmp_path / "lib.ckpt")
    assert (tmp_path / "lib.ckpt").read_bytes() == toy_checkpoint.read_bytes()


def test_unknown_subcommand(capsys):
    assert run(capsys, "frobnicate")[0] != 0


def test_module_entry_point_exists():
    assert shutil.which("logquality") is not None
