import csv
import json
import shutil
import subprocess
import sys
import xml.etree.ElementTree as ET

import pytest

from dgfrac.cli import EXIT_FAILED, EXIT_INVALID, EXIT_NONCONV, EXIT_OK, main

BASE = {
    "domain": {"vertices": [[0, 0], [1, 0], [1, 1], [0, 1]], "dirichlet": [0, 2]},
    "mesh": {"eps": 0.5},
    "adaptive": {"a": 0.25},
    "schedule": {"family": "affine", "delta": 0.25, "params": {"B": 2.0}},
    "minimizer": {"restarts": 2},
    "seed": 0,
}


def write_cfg(tmp_path, name="cfg.json", **over):
    cfg = json.loads(json.dumps(BASE))
    for k, v in over.items():
        if v is None:
            cfg.pop(k, None)
        else:
            cfg[k] = v
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


def run_cli(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def evolved(tmp_path_factory):
    d = tmp_path_factory.mktemp("evolve")
    cfg = write_cfg(d)
    out = d / "out"
    assert run_cli("evolve", "--config", cfg, "--out", out) == EXIT_OK
    return cfg, out


def test_mesh_writes_json(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    assert run_cli("mesh", "--config", cfg, "--out", tmp_path / "m") == EXIT_OK
    m = json.loads((tmp_path / "m" / "mesh.json").read_text())
    assert len(m["triangles"]) > 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["n_triangles"] == len(m["triangles"])
    assert rep["min_angle"] == pytest.approx(45.0) and rep["pass"]


def test_evolve_artifacts(evolved):
    _, out = evolved
    hist = json.loads((out / "history.json").read_text())
    assert [s["t"] for s in hist["steps"]] == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert hist["meta"]["a"] == 0.25 and hist["meta"]["complete"] is True
    rows = list(csv.DictReader((out / "energies.csv").open()))
    assert list(rows[0]) == ["t", "bulk", "surface", "total"]
    for r, s in zip(rows, hist["steps"]):
        assert float(r["total"]) == s["energies"]["total"]
    svgs = sorted(out.glob("crack_*.svg"))
    assert svgs
    for p in svgs:
        root = ET.parse(p).getroot()
        assert root.tag == "{http://www.w3.org/2000/svg}svg"
    # one polyline per accumulated crack segment
    n_seg = 0
    by_index = {int(p.stem.split("_")[1]): p for p in svgs}
    for s in hist["steps"]:
        n_seg += len(s["crack_segments"])
        if s["index"] in by_index:
            root = ET.parse(by_index[s["index"]]).getroot()
            assert len(root.findall(".//{http://www.w3.org/2000/svg}polyline")) == n_seg
    assert n_seg > 0 and max(by_index) == hist["steps"][-1]["index"]


def test_evolve_deterministic(evolved, tmp_path):
    cfg, out = evolved
    assert run_cli("evolve", "--config", cfg, "--out", tmp_path) == EXIT_OK
    for name in ("history.json", "energies.csv"):
        assert (tmp_path / name).read_bytes() == (out / name).read_bytes()


def test_check_roundtrip(evolved, tmp_path, capsys):
    cfg, out = evolved
    c = write_cfg(tmp_path, check={"history": str(out / "history.json"), "trials": 20})
    assert run_cli("check", "--config", c, "--out", tmp_path) == EXIT_OK
    rep = json.loads((tmp_path / "check.json").read_text())
    assert rep["roundtrip_max_error"] <= 1e-12
    assert rep["balance_violations"] == 0
    assert rep["minimality_violations"] == 0
    assert rep["uniform_bound"]["ok"]


def test_check_flags_tampered_history(evolved, tmp_path):
    _, out = evolved
    d = json.loads((out / "history.json").read_text())
    d["steps"][-1]["energies"]["total"] += 1.0
    p = tmp_path / "history.json"
    p.write_text(json.dumps(d))
    c = write_cfg(tmp_path, check={"history": str(p), "trials": 5})
    assert run_cli("check", "--config", c, "--out", tmp_path) == EXIT_FAILED


def test_check_missing_history_is_invalid(tmp_path):
    c = write_cfg(tmp_path, check={"history": str(tmp_path / "nope.json")})
    assert run_cli("check", "--config", c, "--out", tmp_path) == EXIT_INVALID


@pytest.mark.parametrize(
    "override, needle",
    [
        ({"adaptive": {"a": 0.6}}, "a must lie in (0, 0.5)"),
        ({"adaptive": {"a": 0.0}}, "a must lie in (0, 0.5)"),
        ({"mesh": {"eps": -1}}, "eps must be > 0"),
        ({"schedule": {"family": "affine", "delta": 0}}, "delta must be > 0"),
        ({"schedule": {"family": "cubic", "delta": 0.1}}, "schedule.family"),
        ({"bogus": 1}, "bogus"),
        ({"domain": None}, "domain"),
    ],
)
def test_invalid_config_exit_2(tmp_path, capsys, override, needle):
    cfg = write_cfg(tmp_path, **override)
    assert run_cli("evolve", "--config", cfg, "--out", tmp_path) == EXIT_INVALID
    assert needle in capsys.readouterr().err


def test_unreadable_config(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert run_cli("mesh", "--config", p) == EXIT_INVALID
    assert run_cli("mesh", "--config", tmp_path / "missing.json") == EXIT_INVALID


def test_strict_nonconvergence_exit_3(tmp_path):
    cfg = write_cfg(tmp_path, mesh={"eps": 0.25}, minimizer={"restarts": 2, "max_iters": 1},
                    schedule={"family": "affine", "delta": 0.5, "params": {"B": 3.0}})
    out = tmp_path / "o"
    assert run_cli("evolve", "--config", cfg, "--out", out, "--strict") == EXIT_NONCONV
    partial = json.loads((out / "history.json").read_text())
    assert partial["meta"]["complete"] is False
    # without --strict the same run completes
    assert run_cli("evolve", "--config", cfg, "--out", tmp_path / "o2") == EXIT_OK


def test_seed_flag_overrides_config(tmp_path):
    cfg = write_cfg(tmp_path)
    assert run_cli("evolve", "--config", cfg, "--out", tmp_path / "s", "--seed", "7") == EXIT_OK
    assert json.loads((tmp_path / "s" / "history.json").read_text())["meta"]["seed"] == 7


def test_out_env_override(tmp_path, monkeypatch):
    cfg = write_cfg(tmp_path, output={"dir": str(tmp_path / "from_cfg")})
    monkeypatch.setenv("DGFRAC_OUT", str(tmp_path / "from_env"))
    assert run_cli("mesh", "--config", cfg) == EXIT_OK
    assert (tmp_path / "from_env" / "mesh.json").exists()
    assert not (tmp_path / "from_cfg").exists()


def test_oracle_consistency(tmp_path):
    cfg = write_cfg(
        tmp_path,
        mesh={"eps": 1.0},
        adaptive={"a": 0.25, "t_grid": [0.25, 0.5, 0.75]},
        minimizer={"restarts": 16},
        oracle={"t": 0.75},
    )
    assert run_cli("oracle", "--config", cfg, "--out", tmp_path) == EXIT_OK
    rep = json.loads((tmp_path / "oracle.json").read_text())
    assert rep["oracle_certified"]
    assert rep["match"]
    assert rep["local_search_total"] >= rep["oracle_total"] - 1e-9
    # same step of a full evolve run on the same instance
    assert run_cli("evolve", "--config", cfg, "--out", tmp_path / "ev") == EXIT_OK
    hist = json.loads((tmp_path / "ev" / "history.json").read_text())
    step = next(s for s in hist["steps"] if s["t"] == rep["t"])
    assert step["energies"]["total"] == pytest.approx(rep["oracle_total"], abs=1e-6)


def test_oracle_too_large_is_invalid(tmp_path):
    cfg = write_cfg(tmp_path, oracle={"t": 0.5, "max_binaries": 2})
    assert run_cli("oracle", "--config", cfg, "--out", tmp_path) == EXIT_INVALID


def test_adapt_small_corpus(tmp_path):
    cfg = write_cfg(tmp_path, mesh={"eps": 0.125},
                    adapt={"a_values": [0.45, 0.05], "corpus_size": 20, "corpus_seed": 1})
    assert run_cli("adapt", "--config", cfg, "--out", tmp_path) == EXIT_OK
    rows = list(csv.DictReader((tmp_path / "adapt.csv").open()))
    assert [float(r["a"]) for r in rows] == [0.45, 0.05]
    assert float(rows[1]["mean"]) <= float(rows[0]["mean"])
    assert "covering" in json.loads((tmp_path / "adapt.json").read_text())


def test_adapt_rejects_other_domains(tmp_path):
    cfg = write_cfg(tmp_path, domain={"vertices": [[0, 0], [2, 0], [2, 1], [0, 1]]})
    assert run_cli("adapt", "--config", cfg, "--out", tmp_path) == EXIT_INVALID


def test_converge_two_levels(tmp_path):
    cfg = write_cfg(tmp_path, converge={"levels": [[1.0, 0.25, 0.25], [0.5, 0.25, 0.25]]})
    assert run_cli("converge", "--config", cfg, "--out", tmp_path) == EXIT_OK
    summary = json.loads((tmp_path / "converge.json").read_text())
    assert len(summary["E1"]) == 2 and len(summary["E1_changes"]) == 1
    rows = list(csv.DictReader((tmp_path / "converge.csv").open()))
    assert {"eps", "a", "delta", "t", "E", "bulk", "surface", "hausdorff_to_finest"} <= set(rows[0])


def test_converge_requires_levels(tmp_path):
    cfg = write_cfg(tmp_path, converge={"levels": [[0.5, 0.7, 0.25]]})
    assert run_cli("converge", "--config", cfg, "--out", tmp_path) == EXIT_INVALID


@pytest.mark.skipif(shutil.which("dgfrac") is None, reason="console script not installed")
def test_console_script(tmp_path):
    cfg = write_cfg(tmp_path, adaptive={"a": 0.6})
    proc = subprocess.run(["dgfrac", "mesh", "--config", str(cfg)], capture_output=True, text=True)
    assert proc.returncode == 2
    assert "a must lie in (0, 0.5)" in proc.stderr
    proc = subprocess.run([sys.executable, "-m", "dgfrac.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "evolve" in proc.stdout
