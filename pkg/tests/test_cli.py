import csv
import json

import pytest

from neuronlab.cli import git_blob_hash, main


def _manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_git_blob_hash_matches_git():
    # `printf 'hello\n' | git hash-object --stdin`
    assert git_blob_hash(b"hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a"


def test_expand_writes_outputs_and_manifest(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["expand", "--activation", "relu", "--K", "8", "--out", str(out)]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["activation"] == "relu" and info["K"] == 8
    man = _manifest(out)
    assert man["command"] == "expand" and man["config"]["K"] == 8
    for name, digest in man["outputs"].items():
        assert git_blob_hash((out / name).read_bytes()) == digest
    assert set(man["outputs"]) == {"hermite_relu.csv", "hermite_relu.json"}


def test_landscape_outputs(tmp_path):
    out = tmp_path / "o"
    assert main(["landscape", "--activations", "relu,sine:2", "--steps", "31", "--out", str(out)]) == 0
    summary = json.loads((out / "landscape_summary.json").read_text())
    assert summary["relu"]["bad_minima"] == []
    assert len(summary["sine:2"]["bad_minima"]) == 1
    with open(out / "landscape_relu.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 31 and float(rows[0]["r"]) == pytest.approx(0.25)


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"activation": "silu", "K": 6, "order": 40}))
    out = tmp_path / "o"
    assert main(["expand", "--config", str(cfg), "--K", "5", "--out", str(out)]) == 0
    man = _manifest(out)
    assert man["config"]["K"] == 5 and man["config"]["order"] == 40 and man["config"]["activation"] == "silu"


@pytest.mark.parametrize("payload", [{"bogus": 1}, {"activation": "relu", "K": -3}, [1, 2]])
def test_bad_config_is_usage_error(tmp_path, payload):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(payload))
    assert main(["expand", "--activation", "relu", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_usage_errors(tmp_path):
    assert main([]) == 2
    assert main(["expand", "--activation", "softmax", "--out", str(tmp_path)]) == 2
    assert main(["flow", "--activation", "silu", "--h", "0", "--out", str(tmp_path)]) == 2
    assert main(["study", "--scenario", "high_prob", "--out", str(tmp_path)]) == 2


def test_bad_thread_count(tmp_path, monkeypatch):
    monkeypatch.setenv("NDL_THREADS", "many")
    assert main(["expand", "--activation", "relu", "--out", str(tmp_path)]) == 2
    monkeypatch.setenv("NDL_THREADS", "0")
    assert main(["expand", "--activation", "relu", "--out", str(tmp_path)]) == 2


def test_flow_and_empirical_commands(tmp_path):
    out = tmp_path / "o"
    assert main(["flow", "--kind", "sphere", "--activation", "hermite:0,0,1,1", "--a0", "-0.1",
                 "--h", "0.01", "--T", "30", "--out", str(out)]) == 0
    with open(out / "flow_sphere_hermite_0_0_1_1.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert float(rows[-1]["a"]) == pytest.approx(-2 / 3, abs=1e-5)
    assert main(["empirical", "--mode", "supgap", "--n", "500", "--d", "3", "--save-data",
                 "--out", str(out)]) == 0
    assert (out / "dataset.ndl").read_bytes()[:4] == b"NDL1"
    assert set(_manifest(out)["outputs"]) == {"dataset.ndl", "supgap.json"}


def test_study_and_verify_subset(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["study", "--scenario", "counterexample", "--d", "10", "--trials", "40", "--seed", "1",
                 "--out", str(out)]) == 0
    rep = json.loads((out / "study_counterexample.json").read_text())
    assert rep["trials"] == 40 and "pass" in rep
    assert main(["verify-all", "--only", "1,3", "--out", str(out)]) == 0
    assert "2/2 checks passed" in capsys.readouterr().out
    assert main(["verify-all", "--only", "7", "--out", str(out)]) == 1
