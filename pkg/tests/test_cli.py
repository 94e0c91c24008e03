import csv
import json
import subprocess
import sys

import pytest

from laborflow import __version__
from laborflow.cli import RunConfig, main
from laborflow.complexity import TAXA
from laborflow.policy import SKILLS_ONLY


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("LABORFLOW_OUT", raising=False)
    return tmp_path


def rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def synth(kind="nested", out="s", *extra):
    assert main(["synth", "--kind", kind, "--out", out, *extra]) == 0
    return f"{out}/flows.csv", f"{out}/skills.csv"


def test_version_flag():
    res = subprocess.run([sys.executable, "-m", "laborflow", "--version"],
                         capture_output=True, text=True, check=True)
    assert res.stdout.strip() == f"v{__version__}"


def test_nested_synth_gives_all_four_taxa(workdir):
    flows, _ = synth()
    assert main(["complexity", "--flows", flows, "--out", "c"]) == 0
    taxa = {r["taxon"] for r in rows(workdir / "c" / "taxonomy.csv")}
    assert {t.value for t in TAXA} <= taxa
    report = json.loads((workdir / "c" / "complexity.json").read_text())
    assert report["nodf"] > 90


def test_missing_flows_file_exits_2(workdir, capsys):
    assert main(["matrix", "--flows", "nope.csv"]) == 2
    err = capsys.readouterr().err
    assert err.startswith("error: nope.csv")


def test_missing_flows_argument_exits_2(workdir, capsys):
    assert main(["ingest"]) == 2
    assert "--flows" in capsys.readouterr().err


def test_bad_csv_row_names_the_line(workdir, capsys):
    (workdir / "f.csv").write_text("origin,destination,count\nA,B,3\nB,A,x\n")
    assert main(["ingest", "--flows", "f.csv"]) == 2
    err = capsys.readouterr().err
    assert err.startswith("error: f.csv") and "row 3" in err


def test_unconverged_fitness_complexity_exits_1(workdir, capsys):
    flows, _ = synth()
    assert main(["complexity", "--flows", flows, "--fc-iters", "1", "--out", "c"]) == 1
    assert "numerical failure in fitness-complexity" in capsys.readouterr().err


def test_allow_unconverged_reports_instead(workdir):
    flows, _ = synth()
    args = ["complexity", "--flows", flows, "--fc-iters", "1", "--out", "c",
            "--allow-unconverged", "--theta-a", "1.0", "--theta-t", "1.0"]
    assert main(args) == 0


def test_unknown_config_key_exits_2(workdir, capsys):
    (workdir / "cfg.json").write_text(json.dumps({"thetta": 0.1}))
    assert main(["ingest", "--config", "cfg.json"]) == 2
    assert "thetta" in capsys.readouterr().err


def test_bad_config_value_exits_2(workdir, capsys):
    (workdir / "cfg.json").write_text(json.dumps({"strategy": "greedy"}))
    assert main(["ingest", "--config", "cfg.json"]) == 2
    assert "greedy" in capsys.readouterr().err


def test_config_layering(workdir, monkeypatch):
    (workdir / "cfg.json").write_text(json.dumps({"theta": 0.05, "delta": 0.01,
                                                  "out_dir": "from_file"}))
    monkeypatch.setenv("LABORFLOW_OUT", "from_env")
    assert RunConfig.from_sources(None, {}).out_dir == "from_env"
    cfg = RunConfig.from_sources("cfg.json", {"theta": 0.02, "delta": None})
    assert cfg.theta == 0.02  # command line beats file
    assert cfg.delta == 0.01  # file beats default
    assert cfg.out_dir == "from_file"  # file beats environment
    assert cfg.n_seeds == 500


def test_env_out_dir_is_used(workdir, monkeypatch):
    flows, _ = synth()
    monkeypatch.setenv("LABORFLOW_OUT", "envout")
    assert main(["ingest", "--flows", flows]) == 0
    assert (workdir / "envout" / "ingest.json").exists()


def test_skills_alias_normalizes():
    assert RunConfig(strategy="skills").strategy == SKILLS_ONLY


def test_reports_embed_the_config(workdir):
    flows, skills = synth()
    args = ["run", "--flows", flows, "--skills", skills, "--seeds", "20", "--out", "r",
            "--delta", "0.01"]
    assert main(args) == 0
    expected = RunConfig(flows=flows, skills=skills, n_seeds=20, out_dir="r",
                         delta=0.01).to_dict()
    reports = sorted((workdir / "r").glob("*.json"))
    assert len(reports) >= 8
    for path in reports:
        report = json.loads(path.read_text())
        if "command" in report:
            assert report["config"] == expected, path.name


def test_run_is_byte_identical(tmp_path, monkeypatch):
    monkeypatch.delenv("LABORFLOW_OUT", raising=False)
    bundles = []
    for name in ("a", "b"):
        d = tmp_path / name
        d.mkdir()
        monkeypatch.chdir(d)
        flows, skills = synth("condensation", "s", "--seed", "2")
        assert main(["run", "--flows", flows, "--skills", skills, "--seeds", "50",
                     "--out", "r"]) == 0
        bundles.append({p.name: p.read_bytes() for p in sorted((d / "r").iterdir())})
    assert bundles[0].keys() == bundles[1].keys()
    for name in bundles[0]:
        assert bundles[0][name] == bundles[1][name], name


def test_policy_writes_one_coverage_row_per_seed(workdir):
    flows, skills = synth()
    assert main(["policy", "--flows", flows, "--skills", skills, "--seeds", "37",
                 "--out", "p"]) == 0
    cov = rows(workdir / "p" / "policy_coverage.csv")
    assert len(cov) == 37
    assert set(cov[0]) == {"seed", "original", "skills_only", "informed"}


def test_single_strategy_alias(workdir):
    flows, skills = synth()
    assert main(["policy", "--flows", flows, "--skills", skills, "--seeds", "5",
                 "--strategy", "skills", "--out", "p"]) == 0
    report = json.loads((workdir / "p" / "policy.json").read_text())
    assert set(report["strategies"]) == {"original", SKILLS_ONLY}
    assert report["config"]["strategy"] == SKILLS_ONLY


def test_condensation_synth_writes_communities(workdir):
    synth("condensation", "s")
    members = rows(workdir / "s" / "communities.csv")
    assert len(members) == 60 and len({m["community"] for m in members}) == 4
    assert main(["communities", "--flows", "s/flows.csv", "--communities",
                 "s/communities.csv", "--out", "c"]) == 0
    report = json.loads((workdir / "c" / "communities.json").read_text())
    assert report["source"] == "file"


def test_null_synth_from_base_preserves_degrees(workdir):
    flows, _ = synth("planted_blocks", "base", "--n", "20")
    assert main(["synth", "--kind", "degree_preserving_null", "--base", flows,
                 "--n-swaps", "50", "--out", "null"]) == 0

    def degrees(path):
        out_deg, in_deg = {}, {}
        for r in rows(path):
            if r["origin"] != r["destination"] and int(r["count"]) > 0:
                out_deg[r["origin"]] = out_deg.get(r["origin"], 0) + 1
                in_deg[r["destination"]] = in_deg.get(r["destination"], 0) + 1
        return out_deg, in_deg

    assert degrees(workdir / "base" / "flows.csv") == degrees(workdir / "null" / "flows.csv")


def test_steady_state_command(workdir):
    flows, _ = synth("uniform", "s", "--n", "10")
    assert main(["steady-state", "--flows", flows, "--out", "ss"]) == 0
    table = rows(workdir / "ss" / "steady_state.csv")
    assert abs(sum(float(r["stationary"]) for r in table) - 1.0) < 1e-9
