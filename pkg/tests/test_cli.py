import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from hypentropy import cli
from hypentropy import experiments as ex
from hypentropy import lattice as lat

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write(tmp_path, text, name="exp.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


ENTROPY = """schema_version: 1
kind: entropy
group: genus2-octagon
seed: 3
params:
  method: orbit
  R_max: 8.0
"""

SWEEP = """schema_version: 1
kind: barycenter-sweep
group: figure-eight
seed: 5
params:
  frames: 20
  fd_every: 5
"""


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.yaml")), ids=lambda p: p.stem)
def test_shipped_configs_validate(path):
    assert cli.validate(path) == []


def test_validate_integrability_diagnostic(tmp_path):
    p = write(tmp_path, "schema_version: 1\nkind: embed-check\ngroup: genus2-octagon\n"
                        "params:\n  c_values: [1.5, 0.8]\n")
    diags = cli.validate(p)
    assert len(diags) == 1
    assert f"{p}:5:" in diags[0] and "must exceed n - 1" in diags[0] and "integrability" in diags[0]
    assert cli.main(["validate", str(p)]) == 1


def test_validate_missing_group_file(tmp_path):
    p = write(tmp_path, "schema_version: 1\nkind: entropy\ngroup: groups/missing.grp\n")
    diags = cli.validate(p)
    assert any(str(tmp_path / "groups" / "missing.grp") in d and ":3:" in d for d in diags)


def test_validate_other_diagnostics(tmp_path):
    p = write(tmp_path, "schema_version: 2\nkind: entropy\nbogus: 1\nparams:\n  R_max: fast\n  nope: 1\n")
    text = "\n".join(cli.validate(p))
    for needle in ("schema_version must be 1", "unknown key 'bogus'", "'R_max' has the wrong type",
                   "unknown parameter 'nope'"):
        assert needle in text
    assert cli.validate(tmp_path / "absent.yaml") == [f"{tmp_path / 'absent.yaml'}: config file not found"]
    bad = write(tmp_path, "a: [1,\n", "bad.yaml")
    assert "YAML syntax error" in cli.validate(bad)[0]
    p = write(tmp_path, "schema_version: 1\nkind: equidist\ngroup: free2\n", "nc.yaml")
    assert any("cocompact" in d for d in cli.validate(p))


def test_subcommand_mismatch_and_exit_2(tmp_path, capsys):
    p = write(tmp_path, ENTROPY)
    assert cli.main(["equidist", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "does not match subcommand" in capsys.readouterr().err
    assert cli.main(["entropy", "--config", str(p), "--seed", "-1"]) == 2


def test_group_file_config(tmp_path):
    G = lat.preset("genus2-octagon")
    blocks = ["\n".join(" ".join(repr(float(v)) for v in row) for row in g) for g in G.generators]
    (tmp_path / "g.grp").write_text("dim 2 model so(n,1)\n\n" + "\n\n".join(blocks) + "\n")
    p = write(tmp_path, ENTROPY.replace("genus2-octagon", "g.grp"))
    cfg, diags = cli.load_config(p)
    assert diags == [] and cfg["group"].dim == 2 and len(cfg["group"].generators) == 8


def run_twice(tmp_path, text, kind):
    p = write(tmp_path, text)
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert cli.main([kind, "--config", str(p), "--out", str(out)]) == 0
        outs.append(out)
    return outs


@pytest.mark.parametrize("text,kind", [(ENTROPY, "entropy"), (SWEEP, "barycenter-sweep")])
def test_rerun_is_byte_identical(tmp_path, text, kind):
    a, b = run_twice(tmp_path, text, kind)
    csvs = sorted(f.name for f in a.glob("*.csv"))
    assert csvs
    for name in csvs:
        assert (a / name).read_bytes() == (b / name).read_bytes()
    m = json.loads((a / "manifest.json").read_text())
    assert m["status"] == "pass" and m["seed"] == int(text.split("seed: ")[1].split()[0])
    assert set(m["outputs"]) == set(csvs) | {f.name for f in a.glob(f"{kind}-*.json")}
    assert m["config_text"] == text and "numpy" in m["versions"]
    assert not (a / "failures.json").exists()


def test_seed_override_changes_output(tmp_path):
    p = write(tmp_path, SWEEP)
    cli.main(["barycenter-sweep", "--config", str(p), "--out", str(tmp_path / "a")])
    cli.main(["barycenter-sweep", "--config", str(p), "--out", str(tmp_path / "b"), "--seed", "9"])
    name = "barycenter-sweep-jacobians.csv"
    assert (tmp_path / "a" / name).read_bytes() != (tmp_path / "b" / name).read_bytes()
    assert json.loads((tmp_path / "b" / "manifest.json").read_text())["seed"] == 9


def test_failed_check_exit_1(tmp_path, monkeypatch):
    def fake(p, G, seed, threads):
        rep = ex.Report("entropy")
        rep.checks = {"always_fails": False}
        rep.tables = {"counts": [{"R": 1.0, "count": 1}]}
        return rep

    monkeypatch.setitem(ex._RUNNERS, "entropy", fake)
    p = write(tmp_path, ENTROPY)
    assert cli.main(["entropy", "--config", str(p), "--out", str(tmp_path / "o")]) == 1
    fail = json.loads((tmp_path / "o" / "failures.json").read_text())
    assert fail["failed_checks"] == ["always_fails"]


def test_derive_seed_streams():
    a = np.random.default_rng(ex.derive_seed(0, "x")).random()
    assert a == np.random.default_rng(ex.derive_seed(0, "x")).random()
    assert a != np.random.default_rng(ex.derive_seed(0, "y")).random()
    assert a != np.random.default_rng(ex.derive_seed(1, "x")).random()


def test_console_entry_point(tmp_path):
    p = write(tmp_path, ENTROPY)
    r = subprocess.run([sys.executable, "-m", "hypentropy.cli", "validate", str(p)],
                       capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout == ""
