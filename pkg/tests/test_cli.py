import os
import shutil

import pytest

from pcnnrank import cli
from pcnnrank.checkpoint import load_checkpoint


@pytest.fixture
def run(small_corpus, tmp_path):
    """A copy of the small corpus with a config that trains quickly."""
    src, manifest = small_corpus
    for name in ("schema.tsv", "train.jsonl", "test.jsonl", "embeddings.txt"):
        shutil.copy(os.path.join(src, name), tmp_path / name)
    cfg = tmp_path / "run.cfg"
    cfg.write_text("train = train.jsonl\ntest = test.jsonl\nschema = schema.tsv\nembeddings = embeddings.txt\n"
                   "min_count = 0\nbatch = 16\nkernels = 20\nout = out\n", encoding="utf-8")
    return str(cfg), tmp_path, manifest


def test_prepare_reports_manifest_counts(run, capsys):
    cfg, tmp, manifest = run
    assert cli.main(["prepare", "--config", cfg]) == 0
    text = capsys.readouterr().out
    for split in ("train", "test"):
        c = manifest[split]
        assert f"{c['mentions']}" in text and f"{c['nr_percent']:.2f}" in text
    assert (tmp / "out" / "dataset.pkl").exists()


def test_train_eval_round(run, capsys):
    cfg, tmp, _ = run
    assert cli.main(["prepare", "--config", cfg]) == 0
    assert cli.main(["train", "--config", cfg, "--epochs", "2", "--seed", "3"]) == 0
    out = tmp / "out"
    assert sorted(os.listdir(out / "checkpoints")) == ["epoch_001.ckpt", "epoch_002.ckpt", "model.ckpt"]
    lines = (out / "epochs.csv").read_text().splitlines()
    assert lines[0] == "epoch,mean_loss,pos_term,neg_term,reg_term,wall_seconds,val_F"
    assert [ln.split(",")[0] for ln in lines[1:]] == ["1", "2"]
    assert (out / "timing.log").read_text().startswith("# epoch 1 wall_seconds=")
    _, header = load_checkpoint(out / "checkpoints" / "model.ckpt")
    assert header["config"]["seed"] == "3" and header["config"]["variant"] == "cost_att"
    capsys.readouterr()
    assert cli.main(["eval", "--config", cfg]) == 0
    assert "P@100=" in capsys.readouterr().out
    assert (out / "pr.csv").read_text().startswith("rank,precision,recall,score\n")
    assert (out / "pn.txt").read_text().startswith("P@100 P@200 P@300 P@400 P@500 mean\n")


def test_train_is_byte_identical(run):
    cfg, tmp, _ = run
    assert cli.main(["prepare", "--config", cfg]) == 0
    results = []
    for _ in range(2):
        assert cli.main(["train", "--config", cfg, "--epochs", "2"]) == 0
        log = (tmp / "out" / "epochs.csv").read_bytes()
        results.append((log, (tmp / "out" / "checkpoints" / "model.ckpt").read_bytes()))
    assert results[0] == results[1]


def test_epochs_zero_writes_initial_checkpoint(run):
    cfg, tmp, _ = run
    cli.main(["prepare", "--config", cfg])
    assert cli.main(["train", "--config", cfg, "--epochs", "0"]) == 0
    assert os.listdir(tmp / "out" / "checkpoints") == ["model.ckpt"]


def test_usage_errors(run, capsys):
    cfg, tmp, _ = run
    assert cli.main(["train", "--config", cfg]) == 1  # epochs required
    assert cli.main(["train", "--config", cfg, "--variant", "att", "--lambda", "0.5", "--epochs", "1"]) == 1
    assert cli.main(["prepare", "--config", str(tmp / "missing.cfg")]) == 1
    with pytest.raises(SystemExit) as exc:
        cli.main(["train", "--variant", "softmax"])
    assert exc.value.code == 1
    (tmp / "bad.cfg").write_text("colour = blue\n")
    assert cli.main(["prepare", "--config", str(tmp / "bad.cfg")]) == 1


def test_flags_override_config(run):
    cfg, tmp, _ = run
    parsed = cli.build_parser().parse_args(["train", "--config", cfg, "--batch", "7", "--variant", "ave"])
    resolved = cli.resolve(parsed)
    assert resolved["batch"] == "7" and resolved["variant"] == "ave"
    assert resolved["train"] == str(tmp / "train.jsonl")


def test_data_errors(run, capsys):
    cfg, tmp, _ = run
    assert cli.main(["train", "--config", cfg, "--epochs", "1"]) == 2  # not prepared yet
    cli.main(["prepare", "--config", cfg])
    assert cli.main(["eval", "--config", cfg, "--checkpoint", str(tmp / "nope.ckpt")]) == 2
    (tmp / "train.jsonl").write_text("")
    assert cli.main(["prepare", "--config", cfg]) == 2
    (tmp / "train.jsonl").write_text("{not json\n")
    assert cli.main(["prepare", "--config", cfg]) == 2
    assert "train.jsonl" in capsys.readouterr().err


def test_eval_rejects_other_schema(run):
    cfg, tmp, _ = run
    cli.main(["prepare", "--config", cfg])
    cli.main(["train", "--config", cfg, "--epochs", "0"])
    ckpt = str(tmp / "out" / "checkpoints" / "model.ckpt")
    shutil.copy(ckpt, tmp / "keep.ckpt")
    with open(tmp / "schema.tsv", "a") as fh:
        fh.write("/synthetic/extra\t9\n")
    assert cli.main(["prepare", "--config", cfg]) == 0
    assert cli.main(["eval", "--config", cfg, "--checkpoint", str(tmp / "keep.ckpt")]) == 2


def test_numeric_failure_exit_code(run, monkeypatch):
    cfg, _, _ = run
    cli.main(["prepare", "--config", cfg])

    def boom(*a, **k):
        raise cli.NumericError("non-finite loss")

    monkeypatch.setattr(cli, "train_epoch", boom)
    assert cli.main(["train", "--config", cfg, "--epochs", "1"]) == 3


def test_grad_check_command(capsys, monkeypatch):
    assert cli.main(["grad-check", "--trials", "1"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert [ln.split()[:3] for ln in lines[:3]] == [["AVE", "PASS", "trials=1"], ["ATT", "PASS", "trials=1"],
                                                     ["COST_ATT", "PASS", "trials=1"]]


def test_synth_command(tmp_path, capsys):
    assert cli.main(["synth", "--out", str(tmp_path / "syn"), "--seed", "5"]) == 0
    assert "train: " in capsys.readouterr().out
    assert (tmp_path / "syn" / "synthetic.cfg").exists()
