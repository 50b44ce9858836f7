"""Scenario orchestration, report contract, CLI surface and exit codes."""
import json
from pathlib import Path

import jsonschema
import pytest

from steklov import verify
from steklov.cli import cli_main
from steklov.errors import ConfigError, ParameterError

SCENARIO_DIR = Path(__file__).resolve().parents[1] / "scenarios"
SCHEMA_PATH = Path(__file__).resolve().parents[1] / "schema" / "report.schema.json"


def small_disk_scenario(checks, **params):
    return verify.Scenario(
        name="disk-small",
        geometry={"type": "disk", "n_radial": 6, "n_angular": 24},
        ladder=[1],
        checks=checks,
        params=params,
    )


# -------------------------------------------------------------- check_sandwich

def test_check_sandwich_verdicts():
    assert verify.check_sandwich(1.0, 1.0, 0.15) == verify.PASS
    assert verify.check_sandwich(2.5, 1.0, 0.15) == verify.FAIL  # violates upper
    assert verify.check_sandwich(0.24, 1.0, 0.15) == verify.PASS  # 0.24 >= 0.2125
    assert verify.check_sandwich(0.19, 1.0, 0.15) == verify.WARN  # within 2 tau
    assert verify.check_sandwich(0.1, 1.0, 0.15) == verify.FAIL
    with pytest.raises(ParameterError):
        verify.check_sandwich(-1.0, 1.0, 0.15)
    with pytest.raises(ParameterError):
        verify.check_sandwich(1.0, 0.0, 0.15)


# ------------------------------------------------------------------- scenarios

def test_scenario_validation_errors():
    with pytest.raises(ConfigError):
        small_disk_scenario([])
    with pytest.raises(ConfigError):
        small_disk_scenario(["NOT_A_CHECK"])
    with pytest.raises(ConfigError):
        verify.Scenario(
            name="x",
            geometry={"type": "disk"},
            ladder=[2, 1],
            checks=["GAMMA"],
        )
    with pytest.raises(ConfigError):
        verify.Scenario(
            name="x",
            geometry={"type": "nonagon"},
            ladder=[1],
            checks=["GAMMA"],
        )
    with pytest.raises(ConfigError):
        small_disk_scenario(["GAMMA"], bogus_param=1)


def test_load_scenario_strict_keys(tmp_path):
    good = tmp_path / "ok.toml"
    good.write_text(
        'name = "t"\nchecks = ["GAMMA"]\nladder = [1]\n'
        '[geometry]\ntype = "disk"\nn_radial = 4\nn_angular = 12\n'
    )
    sc = verify.load_scenario(good)
    assert sc.checks == ["GAMMA"]

    bad = tmp_path / "bad.toml"
    bad.write_text(good.read_text() + "\nunknown_key = 3\n")
    with pytest.raises(ConfigError, match="unknown_key"):
        verify.load_scenario(bad)

    empty = tmp_path / "empty.toml"
    empty.write_text(
        'name = "t"\nchecks = []\nladder = [1]\n[geometry]\ntype = "disk"\n'
    )
    with pytest.raises(ConfigError):
        verify.load_scenario(empty)

    notoml = tmp_path / "broken.toml"
    notoml.write_text("name = [unterminated")
    with pytest.raises(ConfigError):
        verify.load_scenario(notoml)


def test_run_scenario_disk_records():
    sc = small_disk_scenario(["STEKLOV_SPECTRUM", "GAMMA", "SANDWICH"], gamma_step=4)
    report = verify.run_scenario(sc)
    assert [r.name for r in report.records] == ["STEKLOV_SPECTRUM", "GAMMA", "SANDWICH"]
    assert all(r.status == verify.PASS for r in report.records)
    sandwich = report.records[2]
    vals = sandwich.values["level_1"]
    assert vals["sigma1"] <= 2 * vals["gamma"]
    assert report.worst_status == verify.PASS


def test_run_scenario_records_failures_and_continues():
    # EXHAUSTION on a disk is a parameter error; later checks still run
    sc = small_disk_scenario(["EXHAUSTION", "GAMMA"], gamma_step=4)
    report = verify.run_scenario(sc)
    assert report.records[0].status == verify.FAIL
    assert "ParameterError" in report.records[0].message
    assert report.records[1].status == verify.PASS
    assert report.worst_status == verify.FAIL


def test_report_deterministic_modulo_wall_time(tmp_path):
    sc = small_disk_scenario(["GAMMA"], gamma_step=4)
    docs = []
    for i in range(2):
        path = tmp_path / f"rep{i}.json"
        verify.run_scenario(sc).save_json(path)
        doc = json.loads(path.read_text())
        for rec in doc["records"]:
            rec["wall_time"] = 0.0
        docs.append(json.dumps(doc, sort_keys=True))
    assert docs[0] == docs[1]


def test_report_schema_and_stable_keys(tmp_path):
    schema = json.loads(SCHEMA_PATH.read_text())
    sc = small_disk_scenario(["GAMMA", "WEYL"], gamma_step=4)
    report = verify.run_scenario(sc)
    doc = report.to_dict()
    jsonschema.validate(doc, schema)
    keysets = {tuple(sorted(rec)) for rec in doc["records"]}
    assert len(keysets) == 1  # every record carries the same key set


def test_fault_injection_flips_exit(tmp_path):
    sc_ok = small_disk_scenario(["SANDWICH"], gamma_step=4)
    assert verify.run_scenario(sc_ok).worst_status == verify.PASS
    sc_bad = small_disk_scenario(["SANDWICH"], gamma_step=4, fault_scale_gamma=10.0)
    report = verify.run_scenario(sc_bad)
    assert report.worst_status == verify.FAIL  # sigma1 <= 2 gamma still holds,
    # but the tenfold gamma breaks the lower bound beyond the WARN band


# ------------------------------------------------------------------------ CLI

def test_cli_hyperbolic_cn(capsys):
    code = cli_main(["hyperbolic", "cn", "1"])
    out = capsys.readouterr().out.strip()
    assert code == 0
    assert out.startswith("0.636619772")


def test_cli_missing_config_exits_2(capsys):
    assert cli_main(["verify", "missing.toml"]) == 2


def test_cli_unknown_subcommand_exits_2(capsys):
    assert cli_main(["frobnicate"]) == 2


def test_cli_bad_geometry_exits_2(tmp_path, capsys):
    assert cli_main(["mesh", "heptagon:n=4", "-o", str(tmp_path / "m.json")]) == 2


def test_cli_mesh_steklov_capacity_gamma_roundtrip(tmp_path, capsys):
    path = tmp_path / "disk.json"
    assert cli_main(["mesh", "disk:n_radial=6,n_angular=24", "-o", str(path)]) == 0
    capsys.readouterr()

    assert cli_main(["steklov", str(path), "-k", "3"]) == 0
    out = capsys.readouterr().out
    assert "sigma_0" in out and "sigma_3" in out

    assert cli_main(["capacity", str(path), "--a", "0:0:6", "--b", "0:12:18"]) == 0
    out = capsys.readouterr().out
    assert "capacity =" in out and "flux" in out

    assert cli_main(["gamma", str(path), "--step", "4"]) == 0
    out = capsys.readouterr().out
    assert "gamma =" in out and "witness A" in out


def test_cli_collar_and_halfplane(capsys):
    assert cli_main(["hyperbolic", "collar", "0.5"]) == 0
    out = capsys.readouterr().out
    assert "rho0" in out and "bound" in out
    assert cli_main(["hyperbolic", "halfplane", "--l-values", "4,8", "--dx", "0.1",
                     "--x-max", "15"]) == 0
    out = capsys.readouterr().out
    assert out.count("rayleigh") == 2


def test_cli_verify_writes_report(tmp_path, capsys):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(
        'name = "t"\nchecks = ["GAMMA"]\nladder = [1]\n'
        '[geometry]\ntype = "disk"\nn_radial = 6\nn_angular = 24\n'
        "[params]\ngamma_step = 4\n"
    )
    out_path = tmp_path / "report.json"
    assert cli_main(["verify", str(cfg), "-o", str(out_path)]) == 0
    doc = json.loads(out_path.read_text())
    assert doc["records"][0]["status"] == "PASS"


def test_cli_verify_unknown_key_exits_2(tmp_path, capsys):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text('name = "t"\nchecks = ["GAMMA"]\nladder = [1]\nwhat = 1\n'
                   '[geometry]\ntype = "disk"\n')
    assert cli_main(["verify", str(cfg)]) == 2


@pytest.mark.parametrize(
    "scenario", sorted(SCENARIO_DIR.glob("*.toml")), ids=lambda p: p.stem
)
def test_golden_scenarios_exit_zero(scenario, tmp_path, capsys):
    out_path = tmp_path / "report.json"
    assert cli_main(["verify", str(scenario), "-o", str(out_path)]) == 0
    schema = json.loads(SCHEMA_PATH.read_text())
    jsonschema.validate(json.loads(out_path.read_text()), schema)


def test_cli_fault_injected_scenario_exits_one(tmp_path, capsys):
    cfg = tmp_path / "corrupt.toml"
    cfg.write_text(
        'name = "corrupt"\nchecks = ["SANDWICH"]\nladder = [1]\n'
        '[geometry]\ntype = "disk"\nn_radial = 6\nn_angular = 24\n'
        "[params]\ngamma_step = 4\nfault_scale_gamma = 10.0\n"
    )
    assert cli_main(["verify", str(cfg)]) == 1
