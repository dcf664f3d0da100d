import csv
import filecmp
import hashlib
import json
from pathlib import Path

import pytest

from dwinv import cli

SMALL_1D = """
[domain]
dim = 1
n = {n}

[time]
tau = 2.0
cfl_factor = {cfl}

[damping]
value = {b}

[initial]
n_modes = {k}

[sweep]
rho_max = 0.1
rho_min = 0.01
ratio = 0.5

[reconstruct]
rho = 0.01
noise_level = 0.01
seed = 5
"""

SMALL_2D = """
[domain]
dim = 2
nx = 8
ny = 8

[time]
tau = 1.0
cfl_factor = 0.6

[damping]
profile = "sine"

[initial]
mode = {mode}
n_modes = 4
"""


def cfg(tmp_path, text, name="run.toml", **kw):
    p = tmp_path / name
    p.write_text(text.format(**kw))
    return str(p)


def one_d(tmp_path, n=32, cfl=0.9, b=0.5, k=5):
    return cfg(tmp_path, SMALL_1D, n=n, cfl=cfl, b=b, k=k)


def run(*args):
    return cli.main([str(a) for a in args])


def outputs(d):
    return sorted(p.name for p in Path(d).iterdir() if p.name != "manifest.json")


def test_eigen_writes_table(tmp_path):
    out = tmp_path / "o"
    assert run("eigen", "--config", one_d(tmp_path), "--out", out, "--dump") == 0
    with open(out / "eigenvalues.csv", newline="") as fh:
        assert fh.readline().startswith("#")
        rows = list(csv.DictReader(fh))
    assert len(rows) == 5
    assert float(rows[0]["rel_err"]) < 1e-2
    assert (out / "eigenfunctions.csv").exists()


def test_eigen_count_above_dofs_is_rejected(tmp_path, capsys):
    code = run("eigen", "--config", one_d(tmp_path, n=8, k=20), "--out", tmp_path / "o")
    assert code == 2
    assert "20" in capsys.readouterr().err


def test_forward_with_oracle(tmp_path):
    out = tmp_path / "o"
    assert run("forward", "--config", one_d(tmp_path, b=0.0), "--out", out, "--oracle") == 0
    with open(out / "energy.csv", newline="") as fh:
        rows = [r for r in csv.reader(fh) if not r[0].startswith("#")]
    assert "oracle_l2_gap" in rows[0]
    col = rows[0].index("oracle_l2_gap")
    assert max(float(r[col]) for r in rows[1:]) < 1e-2
    summary = json.loads((out / "forward_summary.json").read_text())
    assert "oracle_note" not in summary


def test_forward_unstable_step_exits_3(tmp_path, capsys):
    code = run("forward", "--config", one_d(tmp_path, cfl=1.5), "--out", tmp_path / "o")
    assert code == 3
    assert "stability" in capsys.readouterr().err


def test_sweep_with_zero_damping_exits_2(tmp_path):
    assert run("sweep", "--config", one_d(tmp_path, b=0.0), "--out", tmp_path / "o") == 2


def test_sweep_pass(tmp_path):
    out = tmp_path / "o"
    assert run("sweep", "--config", one_d(tmp_path, n=128), "--out", out) == 0
    recs = [json.loads(l) for l in (out / "sweep.jsonl").read_text().splitlines()]
    assert [r["rho"] for r in recs] == pytest.approx([0.1, 0.05, 0.025, 0.0125])


def test_inadmissible_2d_mode_exits_2(tmp_path, capsys):
    # on an 8 x 8 grid the (0, 2) mode vanishes at 1 of 7 side nodes
    code = run("reconstruct", "--config", cfg(tmp_path, SMALL_2D, mode=2),
               "--out", tmp_path / "o")
    assert code == 2
    assert "not admissible" in capsys.readouterr().err


def test_config_error_reports_line(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text("[domain]\ndim = 1\nn = 0\n")
    assert run("eigen", "--config", p) == 2
    assert f"{p}:3:" in capsys.readouterr().err


def test_verify_fails_with_unstable_cfl(tmp_path):
    out = tmp_path / "o"
    assert run("verify", "--config", one_d(tmp_path, cfl=1.5), "--out", out, "--quick") == 1
    with open(out / "criteria.csv", newline="") as fh:
        status = [r["status"] for r in csv.DictReader(fh)]
    assert "FAIL" in status


@pytest.mark.parametrize("command", ["eigen", "forward", "sweep", "reconstruct"])
def test_outputs_are_deterministic_and_listed(tmp_path, command):
    conf = one_d(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(command, "--config", conf, "--out", a) == 0
    assert run(command, "--config", conf, "--out", b) == 0
    names = outputs(a)
    assert names == outputs(b)
    match, mismatch, errors = filecmp.cmpfiles(a, b, names, shallow=False)
    assert not mismatch and not errors

    man = json.loads((a / "manifest.json").read_text())
    listed = {f["name"]: f["sha256"] for f in man["files"]}
    assert sorted(listed) == names
    for name, digest in listed.items():
        assert hashlib.sha256((a / name).read_bytes()).hexdigest() == digest
    assert man["command"] == command and man["exit_code"] == 0


def test_rerun_from_manifest(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("reconstruct", "--config", one_d(tmp_path), "--out", a) == 0
    assert run("reconstruct", "--config", a / "manifest.json", "--out", b) == 0
    names = outputs(a)
    _, mismatch, errors = filecmp.cmpfiles(a, b, names, shallow=False)
    assert not mismatch and not errors
    ma = json.loads((a / "manifest.json").read_text())
    mb = json.loads((b / "manifest.json").read_text())
    assert ma["config"]["domain"] == mb["config"]["domain"]


def test_csv_outputs_use_crlf(tmp_path):
    out = tmp_path / "o"
    assert run("forward", "--config", one_d(tmp_path), "--out", out) == 0
    raw = (out / "neumann_trace.csv").read_bytes()
    assert raw.count(b"\r\n") == raw.count(b"\n")


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["--version"])
    assert exc.value.code == 0
