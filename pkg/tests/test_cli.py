import copy
import csv
import json
import subprocess
import sys

import pytest
import yaml

from multipole_resolvent.cli import main
from multipole_resolvent.experiment import (RunRecord, csv_text, emit_report, load_record, numeric_digest,
                                            run_experiment, verify_artifacts)

from test_config import BASE


@pytest.fixture
def cfg_file(tmp_path):
    def write(cfg, name="c.yaml"):
        p = tmp_path / name
        p.write_text(yaml.safe_dump(cfg))
        return str(p)
    return write


FREE = {"name": "free", "potential": {"dimension": 2},
        "sweep": {"lambda_min": 25, "lambda_max": 200, "lambda_count": 4,
                  "epsilon": {"policy": "relative", "value": 1e-6},
                  "geometry": {"kind": "radial_modes", "chi": {"r_in": 0.5, "r_out": 0.8}}}}

BAD_POLE = {"name": "bad", "potential": {"dimension": 3, "hardy_constant": -0.3,
                                         "poles": [{"position": [0, 0, 0], "profile": "inverse_square",
                                                    "coefficient": -0.3, "cutoff": 0.5}]}}

TWO_POLES_RADIAL = {"name": "two", "potential": {
    "dimension": 2, "hardy_constant": 1.0,
    "poles": [{"position": [s, 0], "profile": "inverse_square", "coefficient": 1.0, "cutoff": 0.5, "taper": 0.25}
              for s in (-1.5, 1.5)]},
    "sweep": copy.deepcopy(FREE["sweep"])}


def test_csv_text_uses_crlf_and_repr():
    text = csv_text(["a", "b"], [[0.1, None], [1, float("nan")]])
    assert text == "a,b\r\n0.1,\r\n1,\r\n"


def test_numeric_digest_ignores_wall_time():
    a = csv_text(["lambda", "norm", "wall_ms"], [[1.0, 2.0, 5]])
    b = csv_text(["lambda", "norm", "wall_ms"], [[1.0, 2.0, 9]])
    c = csv_text(["lambda", "norm", "wall_ms"], [[1.0, 2.5, 5]])
    assert numeric_digest(a) == numeric_digest(b) != numeric_digest(c)


def test_exit_codes_from_status():
    assert [RunRecord("n", "d", "v", status=s).exit_code for s in ("ok", "rejected", "failed")] == [0, 2, 3]


def test_validate_exit_codes(cfg_file, capsys):
    assert main(["validate", "--config", cfg_file(BASE)]) == 0
    assert main(["validate", "--config", cfg_file(BAD_POLE)]) == 2
    assert main(["validate", "--config", cfg_file(BAD_POLE), "--allow-violations"]) == 0
    assert "positivity_floor" in capsys.readouterr().out


def test_config_error_exit_code(cfg_file, tmp_path):
    p = tmp_path / "broken.yaml"
    p.write_text("potential: {dimension: 7}\n")
    assert main(["validate", "--config", str(p)]) == 2
    assert main(["validate", "--config", str(tmp_path / "missing.yaml")]) in (2, 3)


def test_solver_failure_exit_code(cfg_file, tmp_path):
    path = cfg_file(TWO_POLES_RADIAL)
    assert main(["norm", "--config", path, "--lambda", "25"]) == 3
    assert main(["run", "--config", path, "--out-dir", str(tmp_path / "o")]) == 3
    rec = load_record(tmp_path / "o")
    assert rec.status == "failed" and rec.error


def test_run_rejects_hypothesis_violation(cfg_file, tmp_path):
    assert main(["run", "--config", cfg_file(BAD_POLE), "--out-dir", str(tmp_path / "o")]) == 2
    assert load_record(tmp_path / "o").status == "rejected"


def test_modes_table(tmp_path):
    out = tmp_path / "m.csv"
    assert main(["modes", "--dimension", "3", "--max-nu", "3.5", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open(newline="")))
    distinct = {float(r["nu_sq"]): int(r["multiplicity"]) for r in rows}
    assert distinct == {0.0: 1, 2.0: 3, 6.0: 5, 12.0: 7}
    assert len(rows) == 16


def test_sweep_then_fit(cfg_file, tmp_path, capsys):
    out = tmp_path / "s.csv"
    assert main(["sweep", "--config", cfg_file(FREE), "--out", str(out)]) == 0
    capsys.readouterr()
    assert main(["fit", "--in", str(out), "--window", "25", "200"]) == 0
    fit = json.loads(capsys.readouterr().out)
    assert -0.65 <= fit["p"] <= -0.35


def test_norm_command(cfg_file, capsys):
    assert main(["norm", "--config", cfg_file(FREE), "--lambda", "50"]) == 0
    res = json.loads(capsys.readouterr().out)
    assert res["norm"] > 0 and res["epsilon"] == pytest.approx(5e-5)


def test_run_artifacts_and_report(tmp_path):
    rec = run_experiment(FREE, tmp_path / "run", use_cache=False)
    assert rec.exit_code == 0
    verify_artifacts(rec)
    names = {a["path"].rsplit("/", 1)[-1] for a in rec.artifacts}
    assert {"validation.json", "assemble.json", "sweep.csv", "fit.json"} <= names
    rows = list(csv.DictReader((tmp_path / "run" / "sweep.csv").open(newline="")))
    assert all(r["config_digest"] == rec.config_digest for r in rows)
    paths = emit_report([rec], tmp_path / "rep")
    assert paths[0].name == "summary.csv" and len(paths) == 2
    # a tampered artifact is rejected
    sweep = tmp_path / "run" / "sweep.csv"
    sweep.write_text(sweep.read_text() + "1,2,3\r\n")
    with pytest.raises(ValueError):
        verify_artifacts(rec)


def test_orphan_record_entry_rejected(tmp_path):
    rec = run_experiment(FREE, tmp_path / "run", use_cache=False)
    (tmp_path / "run" / "fit.json").unlink()
    with pytest.raises(ValueError, match="orphan"):
        verify_artifacts(rec)


def test_cache_reuses_points(tmp_path):
    a = run_experiment(FREE, tmp_path / "run")
    b = run_experiment(FREE, tmp_path / "run")
    assert a.numeric_digests()["sweep.csv"] == b.numeric_digests()["sweep.csv"]


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "multipole_resolvent", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "mpres" in res.stdout
