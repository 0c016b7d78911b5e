import json
import subprocess
import sys

import pytest
import yaml

from flowgan import wgan
from flowgan.cli import main
from flowgan.flows import parse_corpus
from flowgan.ip2vec import EmbeddingStore
from flowgan.synthetic import write_cidds_csv

FAST = {"ip2vec": {"dim": 6, "epochs": 1}, "gan": {"iterations": 3, "batch_size": 32, "noise_dim": 8}}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory, small_corpus):
    d = tmp_path_factory.mktemp("cli")
    write_cidds_csv(small_corpus[:800], d / "week1.csv", igmp_rows=2)
    write_cidds_csv(small_corpus[800:], d / "week2.csv")
    (d / "fast.yaml").write_text(yaml.safe_dump(FAST))
    return d


def run(*argv):
    return main([str(a) for a in argv])


def test_ingest(workspace, capsys):
    assert run("ingest", workspace / "week1.csv", "--out", workspace / "clean.csv") == 0
    out = capsys.readouterr().out
    assert "flows kept:    800" in out and "proto:IGMP" in out
    flows, _ = parse_corpus(workspace / "clean.csv")
    assert len(flows) == 800
    snap = yaml.safe_load((workspace / "clean.csv.config.yaml").read_text())
    assert snap["command"] == "ingest" and snap["config"]["seed"] == 0


def test_pipeline(workspace, capsys):
    d, cfg = workspace, workspace / "fast.yaml"
    assert run("embed", d / "week1.csv", "--out", d / "e.ip2v", "--config", cfg) == 0
    store = EmbeddingStore.load(d / "e.ip2v")
    assert store.dim == 6
    assert (d / "e.ip2v.loss.csv").read_text().startswith("epoch,mean_loss\n")
    assert run("train", d / "week1.csv", "--method", "e", "--embeddings", d / "e.ip2v",
               "--out", d / "model_e", "--config", cfg) == 0
    for name in ("schema.json", "gan.json", "networks.fgnn", "history.csv", "config.yaml", "embeddings.ip2v"):
        assert (d / "model_e" / name).exists()
    assert run("generate", "--model", d / "model_e", "--out", d / "gen.csv", "--count", 300) == 0
    gen, _ = parse_corpus(d / "gen.csv")
    assert len(gen) == 300
    assert run("baseline", d / "week1.csv", "--out", d / "base.csv", "--save-model", d / "base.json") == 0
    assert len(parse_corpus(d / "base.csv")[0]) == 800
    assert run("baseline", "--model", d / "base.json", "--out", d / "base2.csv", "--count", 50) == 0
    capsys.readouterr()
    assert run("evaluate", "--reference", d / "week2.csv", "--candidate", f"E={d / 'gen.csv'}",
               d / "base.csv", f"week1={d / 'week1.csv'}", "--out", d / "report") == 0
    text = capsys.readouterr().out
    assert "Euclidean distance" in text and "TCP flags" in text
    doc = json.loads((d / "report" / "report.json").read_text())
    assert set(doc) == {"E", "base", "week1"}
    assert all(c["rate"] == 100.0 for c in doc["week1"]["domain_checks"])
    assert (d / "report" / "config.yaml").exists()


def test_generate_default_count(workspace):
    d = workspace
    assert run("train", d / "week1.csv", "--method", "b", "--out", d / "model_b", "--config", d / "fast.yaml") == 0
    assert run("generate", "--model", d / "model_b", "--out", d / "gb.csv") == 0
    assert len(parse_corpus(d / "gb.csv")[0]) == 800
    assert run("generate", "--model", d / "model_b", "--out", d / "gb2.csv", "--reference", d / "week2.csv") == 0
    assert len(parse_corpus(d / "gb2.csv")[0]) == 700


@pytest.mark.parametrize("method,width,hidden", [("n", 30, 24), ("b", 178, 80)])
def test_network_shapes(workspace, method, width, hidden):
    d = workspace
    assert run("train", d / "week1.csv", "--method", method, "--out", d / f"shape_{method}",
               "--iterations", 1, "--config", d / "fast.yaml") == 0
    model = wgan.GanModel.load(d / f"shape_{method}")
    assert model.generator.output_width == width == model.critic.input_width
    assert [l.weight.shape[1] for l in model.generator.layers[:-1]] == [hidden] * 3
    assert [l.weight.shape[1] for l in model.critic.layers[:-1]] == [hidden] * 3
    assert model.metadata["method"] == method.upper()


def test_original_pairs(workspace, capsys):
    d = workspace
    assert run("embed", d / "week1.csv", "--out", d / "o.ip2v", "--pairs", "original",
               "--config", d / "fast.yaml") == 0
    assert "original pairs" in capsys.readouterr().out
    snap = yaml.safe_load((d / "o.ip2v.config.yaml").read_text())
    assert snap["config"]["ip2vec"]["pairs"] == "original"


def test_errors(workspace, capsys):
    d = workspace
    assert run("ingest", d / "missing.csv") == 1
    assert "cannot read" in capsys.readouterr().err
    assert run("train", d / "week1.csv", "--method", "e", "--out", d / "x") == 1
    assert "flowgan embed" in capsys.readouterr().err
    assert run("baseline", "--out", d / "x.csv") == 1
    bad = d / "bad.yaml"
    bad.write_text("gan: {penalty: -1}\n")
    assert run("ingest", d / "week1.csv", "--config", bad) == 1
    bad.write_text("nonsense: 1\n")
    assert run("ingest", d / "week1.csv", "--config", bad) == 1
    assert "nonsense" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        run("train", d / "week1.csv")


def test_rerun_byte_identical(workspace):
    d = workspace
    outs = []
    for tag in ("r1", "r2"):
        common = ["--seed", 5, "--workers", 1, "--config", d / "fast.yaml"]
        assert run("embed", d / "week1.csv", "--out", d / f"{tag}.ip2v", *common) == 0
        assert run("train", d / "week1.csv", "--method", "e", "--embeddings", d / f"{tag}.ip2v",
                   "--out", d / f"{tag}_model", *common) == 0
        assert run("generate", "--model", d / f"{tag}_model", "--out", d / f"{tag}_gen.csv", *common) == 0
        assert run("baseline", d / "week1.csv", "--out", d / f"{tag}_base.csv", *common) == 0
        outs.append([d / f"{tag}.ip2v", d / f"{tag}_model" / "networks.fgnn", d / f"{tag}_model" / "history.csv",
                     d / f"{tag}_gen.csv", d / f"{tag}_base.csv"])
    for a, b in zip(*outs):
        assert a.read_bytes() == b.read_bytes(), a.name


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "flowgan", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("flowgan ")
    r = subprocess.run([sys.executable, "-m", "flowgan", "ingest", "/nonexistent.csv"],
                       capture_output=True, text=True)
    assert r.returncode == 1 and "error" in r.stderr
