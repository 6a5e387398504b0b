import csv
import io
import json
import subprocess
import sys

import pytest

from cartan_lab.builtins import BUILTINS, get_builtin, list_builtins
from cartan_lab.cli import main, parse_at
from cartan_lab.suite import (CHECK_IDS, SCHEMA_VERSION, AllPointsRejected, ConfigError, RunConfig,
                              eval_expr, run_suite, sample_points, thread_count)

FAST = "axioms,curvature-identities,level-sets"


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_list_builtins(capsys):
    code, out, _ = run(capsys, "list-builtins")
    assert code == 0
    assert "euclidean" in out and "p1^2+p2^2" in out
    assert "hyperbolic-2d" in out and "x2^2*(p1^2+p2^2)" in out
    names = {r["name"] for r in list_builtins()}
    assert {"euclidean", "euclidean-3d", "hyperbolic-2d", "hyperbolic-2d-scaled",
            "randers-2d-eps0.1", "randers-3d-eps0.05"} <= names


@pytest.mark.parametrize("name", sorted(BUILTINS))
def test_every_builtin_passes_axioms(name):
    b = BUILTINS[name]
    rep = run_suite(RunConfig(builtin=name, seed=3, num_points=10, checks=["axioms"]))
    assert rep.checks[0]["verdict"] == "pass"
    assert b.metric().dim == b.dim


def test_get_builtin_dim_alias():
    assert get_builtin("euclidean", 3).name == "euclidean-3d"
    with pytest.raises(KeyError):
        get_builtin("nope")
    with pytest.raises(ValueError):
        get_builtin("hyperbolic-2d", 3)


@pytest.mark.parametrize("expr,dim,at,value", [
    ("p1^2+p2^2", 2, "x=0,0;p=3,4", 25.0),
    ("sqrt(p1^2+p2^2)", 2, "x=0,0;p=3,4", 5.0),
    ("x2^2*(p1^2+p2^2)", 2, "x=0,2;p=1,1", 8.0),
])
def test_eval(capsys, expr, dim, at, value):
    code, out, _ = run(capsys, "eval", "--expr", expr, "--dim", str(dim), "--at", at)
    assert code == 0 and float(out) == value
    assert eval_expr(expr, dim, parse_at(at)) == value


def test_parse_at_rejects_garbage():
    with pytest.raises(ValueError):
        parse_at("x=1,2")


def test_exit_codes(capsys):
    assert run(capsys, "eval", "--expr", "p1 +* 2", "--dim", "2", "--at", "x=0,0;p=1,0")[0] == 3
    assert run(capsys, "verify", "--expr", "p1^2 + q1", "--dim", "2")[0] == 3
    assert run(capsys, "verify", "--builtin", "euclidean", "--checks", "nonsense")[0] == 2
    assert run(capsys, "verify", "--builtin", "euclidean", "--points", "5")[0] == 2
    assert run(capsys, "verify", "--builtin", "euclidean", "--shells", "-1")[0] == 2
    assert run(capsys, "verify", "--builtin", "no-such-metric")[0] == 2
    # K^2 < 0 everywhere in the box: sampling budget exhausted
    code, _, err = run(capsys, "verify", "--expr=-(p1^2+p2^2)", "--dim", "2", "--checks", "axioms")
    assert code == 4 and "sampling" in err
    with pytest.raises(SystemExit):
        main(["verify", "--builtin", "euclidean", "--format", "xml"])


def test_verify_json_report(capsys, tmp_path):
    out = tmp_path / "r.json"
    code, _, err = run(capsys, "verify", "--builtin", "euclidean", "--points", "10", "--checks", FAST,
                       "--out", str(out))
    assert code == 0 and "summary: ok" in err
    d = json.loads(out.read_text())
    assert d["schema_version"] == SCHEMA_VERSION
    assert [c["check_id"] for c in d["checks"]] == FAST.split(",")
    assert d["metric"]["fingerprint"]
    assert d["sampling"]["used"] == 10
    assert "timing" not in json.dumps(d)


def test_verify_csv(capsys):
    code, out, _ = run(capsys, "verify", "--builtin", "euclidean", "--points", "10", "--checks", FAST,
                       "--format", "csv")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0
    assert [r["check_id"] for r in rows] == FAST.split(",")
    assert {r["verdict"] for r in rows} == {"pass"}


def test_user_metric_theorem_failures_are_findings(capsys):
    # Randers: the vertical bundle-like check fails, but that is a finding, not an error
    code, out, _ = run(capsys, "verify", "--expr", "sqrt(p1^2+p2^2)+0.1*p1", "--kind", "K", "--dim", "2",
                       "--points", "10", "--checks", "axioms,vertical-bundle-like")
    d = json.loads(out)
    assert code == 0
    assert {c["check_id"]: c["verdict"] for c in d["checks"]}["vertical-bundle-like"] == "fail"


def test_config_file_and_override(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"builtin": "hyperbolic-2d", "seed": 5, "num_points": 12, "checks": ["axioms"]}))
    code, out, _ = run(capsys, "verify", "--config", str(cfg), "--seed", "9")
    d = json.loads(out)
    assert code == 0
    assert d["config"]["seed"] == 9 and d["config"]["num_points"] == 12
    cfg.write_text(json.dumps({"builtin": "euclidean", "bogus": 1}))
    assert run(capsys, "verify", "--config", str(cfg))[0] == 2


def test_config_validation():
    with pytest.raises(ConfigError):
        RunConfig().validate()
    with pytest.raises(ConfigError):
        RunConfig(metric="p1^2+p2^2", builtin="euclidean", dim=2).validate()
    with pytest.raises(ConfigError):
        RunConfig(metric="p1^2+p2^2").validate()
    with pytest.raises(ConfigError):
        RunConfig(builtin="euclidean", tolerances={"nope": 1.0}).validate()
    assert set(RunConfig(builtin="euclidean").echo()) >= {"seed", "num_points", "checks"}


def test_thread_cap(monkeypatch):
    monkeypatch.setenv("CARTAN_LAB_THREADS", "1")
    assert thread_count(8) == 1
    monkeypatch.setenv("CARTAN_LAB_THREADS", "junk")
    assert thread_count(3) == 3


def test_sampling_is_index_seeded():
    m = get_builtin("hyperbolic-2d").metric()
    box = [[-1, 1], [0.5, 2]]
    a, _ = sample_points(m, box, 7, 12)
    b, _ = sample_points(m, box, 7, 20)
    assert a == b[:12]
    with pytest.raises(AllPointsRejected):
        sample_points(get_builtin("euclidean").metric(), [[-1, 1], [-1, 1]], 0, 10, budget_factor=0)


def test_every_requested_check_appears_once():
    rep = run_suite(RunConfig(builtin="euclidean", num_points=10, checks=list(CHECK_IDS)))
    ids = [c["check_id"] for c in rep.checks]
    assert sorted(ids) == sorted(CHECK_IDS)


def test_determinism_across_thread_counts(tmp_path):
    outs = []
    for threads in ("1", "4"):
        path = tmp_path / f"r{threads}.json"
        env = {"CARTAN_LAB_THREADS": threads, "PATH": "/usr/bin:/bin"}
        subprocess.run([sys.executable, "-m", "cartan_lab", "verify", "--builtin", "randers-2d-eps0.1",
                        "--points", "10", "--seed", "42", "--out", str(path),
                        "--checks", "axioms,frame-gram,level-sets,vertical-bundle-like"],
                       env=env, check=True, capture_output=True)
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_console_script_entry_point():
    r = subprocess.run(["cartan-lab", "list-builtins"], capture_output=True, text=True)
    assert r.returncode == 0 and "randers-3d-eps0.05" in r.stdout
