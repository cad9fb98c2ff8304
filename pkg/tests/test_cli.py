import csv
import hashlib
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from twowell import cli
from twowell.cli import ConfigError, parse_config


def run(tmp_path, *args, name="out"):
    out = tmp_path / name
    code = cli.main([*args, "--out", str(out)])
    return code, out


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_minimal_flags_fill_defaults():
    cfg = parse_config(["energy", "--a", "1.4142135", "--lam", "0.5", "--n", "16"])
    assert cfg.command == "energy"
    assert cfg.a == 1.4142135 and cfg.lam == 0.5 and cfg.n == 16
    assert cfg.density == "truncated" and cfg.provenance["density"] == "default"
    assert cfg.provenance["n"] == "flag:--n"


def test_lambda_out_of_range():
    with pytest.raises(ConfigError, match=r"λ ∈ \(0,1\]"):
        parse_config(["energy", "--lam", "1.5"])


def test_lambda_exit_code_and_error_json(tmp_path, capsys):
    code, out = run(tmp_path, "energy", "--lam", "1.5")
    assert code == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["status"] == "error" and err["exit_code"] == 2 and "λ" in err["message"]


def test_file_then_flag_provenance(tmp_path):
    cf = tmp_path / "run.cfg"
    cf.write_text("# study\ncommand = energy\nn = 8\nlam = 0.25\n")
    cfg = parse_config(["--config", str(cf), "--n", "12"])
    assert cfg.command == "energy"
    assert cfg.n == 12 and cfg.provenance["n"] == "flag:--n"
    assert cfg.lam == 0.25 and cfg.provenance["lam"] == f"file:{cf}:4"
    echo = cfg.echo()
    assert echo["values"]["n"] == 12 and echo["provenance"]["lam"].startswith("file:")
    assert json.loads(json.dumps(echo)) == echo


def test_config_file_errors(tmp_path):
    cf = tmp_path / "bad.cfg"
    cf.write_text("n = 8\nbogus = 1\n")
    with pytest.raises(ConfigError, match=r"bad.cfg:2: unknown key"):
        parse_config(["energy", "--config", str(cf)])
    cf.write_text("n 8\n")
    with pytest.raises(ConfigError, match=r"bad.cfg:1"):
        parse_config(["energy", "--config", str(cf)])


def test_unknown_flag_and_command(tmp_path):
    assert cli.main(["energy", "--bogus", "1"]) == 2
    assert cli.main([]) == 2


@pytest.mark.parametrize("args", [["--a", "1"], ["--a", "-2"], ["--n", "0"], ["--alpha", "0.2"],
                                  ["--theta", "1"], ["--resolution", "10"], ["--n", "x"],
                                  ["--input", "/nonexistent/file"]])
def test_validation_rejects(args):
    with pytest.raises(ConfigError):
        parse_config(["energy", *args])


def test_env_out(monkeypatch, tmp_path):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "envout"))
    cfg = parse_config(["wells"])
    assert cfg.out == str(tmp_path / "envout") and cfg.provenance["out"] == f"env:{cli.OUT_ENV}"


def test_wells_command(tmp_path):
    code, out = run(tmp_path, "wells", "--a", str(np.sqrt(2.0)))
    assert code == 0
    w = json.loads((out / "wells.json").read_text())
    assert np.allclose(w["wells"]["Q"], [[0.8, -0.6], [0.6, 0.8]], atol=1e-12)
    assert w["wells"]["cbar"] == pytest.approx(1.0)


def test_manifest_hashes(tmp_path):
    code, out = run(tmp_path, "energy", "--n", "4")
    assert code == 0
    man = manifest(out)
    assert man["schema"] == "twowell-manifest/1" and man["exit_code"] == 0
    names = {a["path"] for a in man["artifacts"]}
    assert {"config.json", "energy_sites.csv", "energy.json"} <= names
    for a in man["artifacts"]:
        data = (out / a["path"]).read_bytes()
        assert a["bytes"] == len(data)
        assert a["sha256"] == hashlib.sha256(data).hexdigest()


def test_csv_rows_carry_metadata(tmp_path):
    code, out = run(tmp_path, "energy", "--n", "4", "--seed", "3")
    with open(out / "energy_sites.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert rows and all(r["n"] == "4" and r["seed"] == "3" and r["fixture_version"] == "1" for r in rows)
    assert all("a" in r and "lam" in r for r in rows)


def test_deterministic_artifacts(tmp_path):
    args = ["minimize", "--n", "6", "--init", "perturbed", "--max-iters", "30", "--seed", "2"]
    c1, o1 = run(tmp_path, *args, name="a")
    c2, o2 = run(tmp_path, *args, name="b")
    assert c1 == c2 == 0
    h1 = {a["path"]: a["sha256"] for a in manifest(o1)["artifacts"]}
    h2 = {a["path"]: a["sha256"] for a in manifest(o2)["artifacts"]}
    # config.json echoes the output directory, everything else must match byte for byte
    for k in h1:
        if k != "config.json":
            assert h1[k] == h2[k], k


def test_perturb_grid_last_row(tmp_path):
    code, out = run(tmp_path, "perturb-grid", "--theta", "0.25", "--chain-length", "20")
    assert code == 0
    with open(out / "recursion.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert float(rows[-1]["x_m"]) == pytest.approx(0.5, abs=1e-5)
    assert (out / "chain.csv").exists() and (out / "plot_study.py").exists()


def test_verify_command(tmp_path, capsys):
    code, out = run(tmp_path, "verify", "--suite-size", "20")
    assert code == 0
    lines = capsys.readouterr().out
    assert "PASS" in lines and "FAIL" not in lines
    checks = json.loads((out / "verify.json").read_text())["checks"]
    assert all(c["passed"] for c in checks)


@pytest.mark.parametrize("cmd,extra", [
    ("spin", ["--n", "8", "--init", "laminate"]),
    ("coarea", ["--n", "8"]),
    ("layer", ["--n-list", "8", "--max-iters", "20", "--kind", "C_plus", "--V2", "QU1"]),
    ("rigidity", ["--n", "16", "--samples", "200"]),
    ("export", ["--n", "4"]),
])
def test_other_commands_run(tmp_path, cmd, extra):
    code, out = run(tmp_path, cmd, *extra)
    assert code == 0
    assert manifest(out)["status"] == "ok"


def test_incompatible_layer_is_config_error(tmp_path):
    # the profile start for a C_plus layer with U0 | QtU1 is not rank-one compatible
    code, out = run(tmp_path, "layer", "--n-list", "8", "--kind", "C_plus", "--V2", "QtU1")
    assert code == 2
    assert json.loads((out / "error.json").read_text())["exit_code"] == 2


def test_failed_check_exit_one(tmp_path, capsys):
    from twowell.calibrate import default_fixture_path
    fx = json.loads(default_fixture_path().read_text())
    fx["second_diff_C"] = 1e-9
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(fx))
    code, out = run(tmp_path, "verify", "--suite-size", "10", "--fixtures", str(bad))
    assert code == 1
    assert "FAIL" in capsys.readouterr().out
    assert manifest(out)["exit_code"] == 1


def test_module_entry_point(tmp_path):
    env = dict(os.environ, TWOWELL_OUT=str(tmp_path / "m"))
    r = subprocess.run([sys.executable, "-m", "twowell", "wells"], env=env, capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert (tmp_path / "m" / "manifest.json").exists()
