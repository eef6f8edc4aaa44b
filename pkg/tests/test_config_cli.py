import json

import numpy as np
import pytest

from evload.cli import main, run_study
from evload.config import StudyConfig, config_from_dict, dump_config, parse_config
from evload.errors import CaseFormatError, ValidationError

SMALL = {"sweep": {"chemistries": ["LFP"], "modes": ["CPCV"], "v_ratios": [0.9, 1.0, 1.1], "soc0s": [0.2, 0.6]}}


def test_empty_config_is_default():
    assert config_from_dict({}) == StudyConfig()
    assert config_from_dict(None).fleet.ki_pi1 == [1000.0]


def test_unknown_keys_are_listed():
    with pytest.raises(ValidationError, match="fleet: bogus, other"):
        config_from_dict({"fleet": {"bogus": 1, "other": 2}})


def test_type_mismatch_names_the_path():
    with pytest.raises(ValidationError, match=r"sweep.lambdas\[1\]"):
        config_from_dict({"sweep": {"lambdas": [0.1, "x"]}})
    with pytest.raises(ValidationError, match="powerflow.max_iter"):
        config_from_dict({"powerflow": {"max_iter": True}})


def test_semantic_checks(tmp_path):
    with pytest.raises(ValidationError, match="strictly increasing"):
        config_from_dict({"sweep": {"lambdas": [0.2, 0.1]}})
    with pytest.raises(ValidationError, match="does not exist"):
        config_from_dict({"case": "nowhere.case"}, tmp_path)
    with pytest.raises(ValidationError, match="pi3"):
        config_from_dict({"station": {"pi3": [1.0]}})


def test_round_trip_and_digest(tmp_path):
    cfg = config_from_dict({"fleet": {"ki_pi1": [80, 100]}, **SMALL})
    assert cfg.fleet.ki_pi1 == [80.0, 100.0]
    again = config_from_dict(cfg.to_dict())
    assert again == cfg and again.digest() == cfg.digest()
    p = tmp_path / "c.yaml"
    p.write_text(dump_config(cfg))
    assert parse_config(p) == cfg
    assert config_from_dict({}).digest() != cfg.digest()


def test_yaml_error_reports_line(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("fleet:\n  lam: [0.1\n")
    with pytest.raises(CaseFormatError) as err:
        parse_config(p)
    assert err.value.line is not None


# -------------------------------------------------------------------- CLI
@pytest.fixture(scope="module")
def sweep_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    status, run = run_study("sweep-static", config_from_dict(SMALL), out)
    assert status == 0
    return out


def test_manifest_contents(sweep_dir):
    doc = json.loads((sweep_dir / "manifest_sweep-static.json").read_text())
    assert doc["config_sha256"] == config_from_dict(SMALL).digest()
    assert doc["all_converged"] and doc["stages"][0]["stage"] == "sweep"
    assert "static_sweep_lfp_cpcv.csv" in doc["files"]
    rows = np.loadtxt(sweep_dir / "static_sweep_lfp_cpcv.csv", delimiter=",", skiprows=1)
    assert rows.shape == (6, 3)


def test_reruns_are_byte_identical(sweep_dir, tmp_path):
    cfg = config_from_dict({**SMALL, "sweep": {**SMALL["sweep"], "modes": ["CCCV", "CPCV"]}})
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_study("sweep-static", cfg, a, jobs=1)[0] == 0
    assert run_study("sweep-static", cfg, b, jobs=2)[0] == 0
    for name in ("static_sweep_lfp_cccv.csv", "static_sweep_lfp_cpcv.csv", "static_sweep_spread.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert (a / "static_sweep_lfp_cpcv.csv").read_bytes() == (sweep_dir / "static_sweep_lfp_cpcv.csv").read_bytes()


def test_fit_reuses_sweep(sweep_dir):
    status, run = run_study("fit-static", config_from_dict(SMALL), sweep_dir)
    assert status == 0 and not any(s["stage"] == "sweep" for s in run.stages)
    model = json.loads((sweep_dir / "static_model_lfp_cpcv.json").read_text())
    params = model["params"] if "params" in model else model
    assert params["a_p"] == pytest.approx(1.0, abs=0.01)
    assert params["n_p"] == pytest.approx(-2.0, abs=0.05)


def test_failed_points_give_nonzero_exit(tmp_path):
    cfg = config_from_dict({"fleet": {"representation": "pq"}, "sweep": {"lambdas": [0.1, 8.0]}})
    status, run = run_study("stability-sweep", cfg, tmp_path)
    assert status == 1
    doc = json.loads((tmp_path / "manifest_stability-sweep.json").read_text())
    assert not doc["all_converged"]
    assert [p["converged"] for p in doc["points"]].count(False) == 1


def test_main_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("fleet: {colour: red}\n")
    assert main(["powerflow", str(bad)]) == 2
    assert "colour" in capsys.readouterr().err
    assert main(["powerflow", "-o", str(tmp_path / "pf")]) == 0
    summary = (tmp_path / "pf" / "powerflow_summary.csv").read_text()
    assert summary.startswith("losses_mw,slack_p_mw")


def test_network_commands_reject_station_overrides(tmp_path):
    cfg = config_from_dict({"station": {"pi1": [0.02, 1000.0]}, "sweep": {"lambdas": [0.1]}})
    assert run_study("stability-sweep", cfg, tmp_path)[0] == 1
