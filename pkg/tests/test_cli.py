import json

import pytest
import yaml

from polyside.cli import main
from polyside.config import RunConfig, load_config
from polyside.errors import ConfigError
from polyside.synthetic import generate, write_files

from conftest import SMALL_PLANTED


def write_config(path, data_dir, **overrides):
    values = dict(ppi_path=str(data_dir / "ppi.csv"), targets_path=str(data_dir / "targets.csv"),
                  combo_path=str(data_dir / "combo.csv"), mono_path=str(data_dir / "mono.csv"),
                  output_dir=str(path.parent / "out"), dim=8, max_epochs=3, batch_size=128,
                  min_support=5, learning_rate=0.3)
    values.update(overrides)
    path.write_text(yaml.safe_dump(values))
    return path


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    write_files(generate(SMALL_PLANTED), d)
    return d


@pytest.fixture
def cfg(tmp_path, data_dir):
    return write_config(tmp_path / "run.yaml", data_dir)


def run(*args):
    return main([str(a) for a in args])


def test_print_config_lists_every_field(capsys):
    assert run("--print-config") == 0
    out = capsys.readouterr().out
    parsed = yaml.safe_load(out)
    assert set(parsed) == {f for f in RunConfig.__dataclass_fields__}
    assert "# embedding dimension k" in out


def test_config_resolution(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("dim: 7\noutput_dir: rel\n")
    c = load_config(path, {"seed": 3})
    assert c.dim == 7 and c.seed == 3
    assert c.output_dir == str((tmp_path / "rel").resolve())
    with pytest.raises(ConfigError):
        load_config(path, {"nonsense": 1})
    with pytest.raises(ConfigError):
        load_config(path, {"dim": "seven"})
    with pytest.raises(ConfigError):
        load_config(path, {"threads": 2, "deterministic": True})


def test_usage_and_config_errors_exit_1(tmp_path, cfg, capsys):
    assert run("train", "--config", cfg, "--model", "nope") == 1
    bad = tmp_path / "bad.yaml"
    bad.write_text("unknown_key: 1\n")
    assert run("split", "--config", bad) == 1
    assert run("split", "--config", cfg, "--threads", "2", "--deterministic") == 1
    assert run() == 1


def test_data_errors_exit_2(tmp_path, data_dir, cfg, capsys):
    missing = write_config(tmp_path / "m.yaml", tmp_path / "nowhere")
    assert run("ingest", "--config", missing) == 2
    capsys.readouterr()
    assert run("train", "--config", cfg, "--model", "kblrn") == 2
    assert "run `polyside split` first" in capsys.readouterr().err
    assert run("split", "--config", cfg) == 0
    assert run("train", "--config", cfg, "--model", "kblrn") == 2
    assert "run `polyside featurize` first" in capsys.readouterr().err
    assert run("eval", "--config", cfg, "--model", "distmult") == 2
    assert "polyside train --model distmult" in capsys.readouterr().err


def test_divergence_exit_3(tmp_path, data_dir):
    cfg = write_config(tmp_path / "d.yaml", data_dir, learning_rate=1e200, optimizer="sgd", dim=4)
    assert run("split", "--config", cfg) == 0
    assert run("train", "--config", cfg, "--model", "distmult") == 3


def _outputs(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_pipeline_is_deterministic_and_idempotent(tmp_path, data_dir, capsys):
    cfg = write_config(tmp_path / "run.yaml", data_dir)
    steps = [("ingest",), ("split",), ("featurize",), ("train", "--model", "kblrn"),
             ("eval", "--model", "kblrn"), ("train", "--model", "baseline"), ("eval", "--model", "baseline")]
    for step in steps:
        assert run(step[0], "--config", cfg, *step[1:]) == 0
    first = _outputs(tmp_path / "out")
    for step in steps:
        assert run(step[0], "--config", cfg, *step[1:]) == 0
    assert _outputs(tmp_path / "out") == first
    for name in ("stats.txt", "splits.tsv", "config.yaml", "full/features.txt", "full/kblrn.ckpt",
                 "full/kblrn.log", "full/kblrn.report.txt", "full/kblrn.summary.json",
                 "manifests/train-full-kblrn.json"):
        assert name in first
    manifest = json.loads(first["manifests/train-full-kblrn.json"])
    assert manifest["config"]["seed"] == 20190601 and len(manifest["config_sha256"]) == 64
    assert set(manifest["inputs"]) == {"splits", "features"}
    summary = json.loads(first["full/kblrn.summary.json"])
    assert 0.5 < summary["aupr"] <= 1.0


def test_explain_block(tmp_path, data_dir, capsys):
    cfg = write_config(tmp_path / "run.yaml", data_dir)
    for step in (("split",), ("featurize",), ("train", "--model", "kblrn")):
        assert run(step[0], "--config", cfg, *step[1:]) == 0
    capsys.readouterr()
    assert run("explain", "--config", cfg, "--pair", "CID000000001", "CID000000002",
               "--side-effect", "C0000000", "--top", "3") == 0
    out = capsys.readouterr().out
    assert "embedding_only logit" in out and "combined logit" in out
    assert run("explain", "--config", cfg, "--pair", "CID000000001", "nobody",
               "--side-effect", "C0000000") == 2


@pytest.mark.slow
def test_reproduce_composes(tmp_path, data_dir):
    a = write_config(tmp_path / "a.yaml", data_dir, output_dir=str(tmp_path / "a"))
    b = write_config(tmp_path / "b.yaml", data_dir, output_dir=str(tmp_path / "b"))
    assert run("reproduce", "--config", a) == 0
    assert run("split", "--config", b) == 0
    for regime, models in (("full", ("baseline", "distmult", "kblrn")),
                           ("drug_drug_only", ("distmult", "kblrn")),
                           ("targeted_drugs_only", ("distmult", "kblrn"))):
        assert run("featurize", "--config", b, "--regime", regime) == 0
        for m in models:
            assert run("train", "--config", b, "--regime", regime, "--model", m) == 0
            assert run("eval", "--config", b, "--regime", regime, "--model", m) == 0
    out_a, out_b = _outputs(tmp_path / "a"), _outputs(tmp_path / "b")
    artifacts = [k for k in out_a if k.endswith((".ckpt", ".log", ".report.txt", ".summary.json", "features.txt"))
                 or k == "splits.tsv"]
    assert len(artifacts) == 1 + 3 + 7 * 4
    for k in artifacts:
        assert out_a[k] == out_b[k], k
    table = out_a["results_table.txt"].decode().splitlines()
    assert table[0].split() == ["method", "auroc", "aupr", "ap50"] and len(table) == 8


def test_synth_writes_runnable_config(tmp_path):
    assert run("synth", "--out", tmp_path / "s") == 0
    c = load_config(tmp_path / "s" / "config.yaml")
    assert all(p.exists() for p in c.paths())
    assert (tmp_path / "s" / "planted_rules.txt").read_text().count("\n") == 15 * 10
