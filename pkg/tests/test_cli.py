import json

import pytest
import yaml

from flsim.cli import main

from conftest import DESK_CONFIG


@pytest.fixture
def tiny(tmp_path):
    raw = yaml.safe_load(DESK_CONFIG.read_text())
    raw["task"].update(n_train=300, n_test=100)
    raw["federation"].update(K=6, rounds=2)
    p = tmp_path / "tiny.yaml"
    p.write_text(yaml.safe_dump(raw))
    return p


def test_run_writes_artifacts(tiny, tmp_path):
    out = tmp_path / "out"
    assert main(["run", str(tiny), "--out", str(out)]) == 0
    lines = (out / "rounds.csv").read_text().splitlines()
    assert lines[0] == "round,ba,ma,tpr,tnr,s_t,sigma"
    assert len(lines) == 3
    assert json.loads((out / "summary.json").read_text())["seed"] == 0
    assert not (out / "audit.jsonl").exists()


def test_private_run_writes_audit(tiny, tmp_path):
    raw = yaml.safe_load(tiny.read_text())
    raw["defense"]["name"] = "private_flguard"
    tiny.write_text(yaml.safe_dump(raw))
    out = tmp_path / "p"
    assert main(["--seed", "3", "run", str(tiny), "--out", str(out)]) == 0
    events = [json.loads(l) for l in (out / "audit.jsonl").read_text().splitlines()]
    assert events and events[0]["stage"] == "gc:cosine"
    assert json.loads((out / "summary.json").read_text())["seed"] == 3


def test_exit_codes(tmp_path, tiny, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("federation: {K: 1}\n")
    assert main(["run", str(bad)]) == 1
    assert "federation" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.yaml")]) in (1, 2)
    assert main(["sweep", str(tiny), "--axis", "adversary.zzz", "--values", "1"]) == 1


def test_validate_prints_defaults(tiny, capsys):
    assert main(["validate", str(tiny)]) == 0
    dumped = yaml.safe_load(capsys.readouterr().out)
    assert dumped["defense"]["clusterer"] == "hdbscan"


def test_compare_same_config_zero_deltas(tiny, tmp_path):
    out = tmp_path / "c"
    assert main(["compare", str(tiny), str(tiny), "--out", str(out), "--format", "json"]) == 0
    res = json.loads((out / "compare.json").read_text())
    assert all(v["delta"] == 0 for v in res["final"].values())


def test_sweep_cli(tiny, tmp_path):
    out = tmp_path / "s"
    assert main(["sweep", str(tiny), "--axis", "adversary.pdr", "--values", "0.1,0.9", "--out", str(out)]) == 0
    rows = (out / "sweep.csv").read_text().splitlines()
    assert len(rows) == 1 + 2 * 2 * 6
