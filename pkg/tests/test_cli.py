import csv
import io
import json
import os
import subprocess
import sys

import pytest

from mcqsdc.cli import SWEEP_AXES, main, trial_seed

FAST = ["--triples", "64", "--min-samples", "8"]


def _run(tmp_path, *argv, name="out.json"):
    out = tmp_path / name
    code = main([*argv, "--out", str(out)])
    return code, out


def _load(path):
    return json.loads(path.read_text())


# ---- run --------------------------------------------------------------------------

def test_run_default_example(tmp_path, capsys):
    code, out = _run(tmp_path, "run", "--protocol", "cqsdc", "--triples", "200", "--seed", "7")
    assert code == 0
    doc = _load(out)
    assert doc["delivered"] == doc["sent"] and len(doc["sent"]) == 3 * (200 - 4 * 32)
    assert doc["seed"] == 7
    assert "delivered" in capsys.readouterr().out


def test_intercept_aborts_with_exit_2(tmp_path):
    code, out = _run(tmp_path, "run", "--attack", "intercept-z", "--target", "c-hop", "--seed", "1")
    assert code == 2
    doc = _load(out)
    assert doc["aborted_at"] == "S4"
    assert doc["delivered"] is None


def test_config_echo_is_complete(tmp_path):
    code, out = _run(tmp_path, "run", "--protocol", "mcqsdc", *FAST, "--seed", "3")
    assert code == 0
    cfg = _load(out)["config"]
    for key in ("num_triples", "num_controllers", "check_fraction", "min_check_samples",
                "error_threshold", "noise_p", "hadamard_enabled", "seed", "protocol", "permissions"):
        assert key in cfg
    assert cfg["num_controllers"] == 3 and cfg["hadamard_enabled"] is True


def test_unknown_config_key_exit_1(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"triples": 64, "chek_fraction": 0.2}))
    code, out = _run(tmp_path, "run", "--config", str(cfg))
    assert code == 1
    assert "chek_fraction" in capsys.readouterr().err
    assert not out.exists()


@pytest.mark.parametrize("argv", [
    ["run", "--triples", "100"],                     # 4 checks of 32 do not fit
    ["run", "--check-fraction", "0"],
    ["run", "--noise", "1.5"],
    ["run", "--protocol", "mcqsdc", "--controllers", "0"],
    ["run", "--protocol", "mcqsdc", "--permissions", "1,0"],
    ["run", "--attack", "epr-probe"],                # no incoming controller hop in CQSDC
    ["run", "--message", "01"],
    ["run", "--bogus"],
    ["sweep", "--axis", "noise", "--points", ""],
    ["sweep", "--axis", "noise", "--points", "a,b"],
    ["attack-eval", "--attack", "epr-probe", "--protocol", "cqsdc"],
])
def test_usage_errors_exit_1(tmp_path, argv):
    code, out = _run(tmp_path, *argv)
    assert code == 1
    assert not out.exists()


def test_flags_override_config_file(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"triples": 64, "min_samples": 8, "seed": 5, "protocol": "mcqsdc",
                               "controllers": 2, "permissions": [True, True]}))
    code, out = _run(tmp_path, "run", "--config", str(cfg), "--seed", "6")
    assert code == 0
    doc = _load(out)
    assert doc["seed"] == 6 and doc["config"]["num_controllers"] == 2


def test_config_type_checked(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"triples": "many"}))
    assert main(["run", "--config", str(cfg)]) == 1
    assert "triples" in capsys.readouterr().err


def test_withheld_permission_is_clean(tmp_path):
    code, out = _run(tmp_path, "run", "--protocol", "mcqsdc", *FAST, "--permissions", "1,0,1",
                     "--seed", "2")
    assert code == 0
    doc = _load(out)
    assert doc["delivered"] is None
    assert doc["receiver_posterior"]["min_entropy_bits"] > 0


def test_auto_seed_is_recorded(tmp_path):
    code, out = _run(tmp_path, "run", *FAST)
    assert code == 0
    assert isinstance(_load(out)["seed"], int)


def test_reports_byte_identical(tmp_path):
    argv = ["run", "--protocol", "mcqsdc", *FAST, "--seed", "99", "--attack", "epr-probe",
            "--threshold", "1"]
    _, a = _run(tmp_path, *argv, name="a.json")
    _, b = _run(tmp_path, *argv, name="b.json")
    assert a.read_bytes() == b.read_bytes()


def test_out_dir_env(tmp_path, monkeypatch):
    monkeypatch.setenv("MCQSDC_OUT_DIR", str(tmp_path))
    assert main(["run", *FAST, "--seed", "4"]) == 0
    assert (tmp_path / "run-cqsdc-seed4.json").exists()


def test_multi_run_uses_trial_seeds(tmp_path):
    code, out = _run(tmp_path, "run", *FAST, "--seed", "8", "--runs", "3")
    assert code == 0
    doc = _load(out)
    assert [r["seed"] for r in doc["runs"]] == [trial_seed(8, 0, t) for t in range(3)]
    assert doc["aggregate"]["points"][0]["runs"] == 3


def test_csv_run(tmp_path):
    code, out = _run(tmp_path, "run", *FAST, "--seed", "8", "--runs", "2", "--format", "csv",
                     name="r.csv")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out.read_text())))
    assert len(rows) == 2 and "seed" in rows[0]


# ---- sweep ------------------------------------------------------------------------

def test_sweep_noise_three_rows(tmp_path):
    code, out = _run(tmp_path, "sweep", *FAST, "--axis", "noise", "--points", "0,0.01,0.02",
                     "--threshold", "1", "--runs", "3", "--seed", "1", "--format", "csv", name="s.csv")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out.read_text())))
    assert [float(r["value"]) for r in rows] == [0.0, 0.01, 0.02]
    assert all(r["axis"] == "noise_p" for r in rows)
    # p = 0 has no errors at all: the oracle says zero
    assert all(float(rows[0][k]) == 0 for k in rows[0] if k.endswith("_errors"))


def test_sweep_check_fraction_under_attack(tmp_path):
    code, out = _run(tmp_path, "sweep", "--axis", "check_fraction", "--points", "0.05,0.1,0.2",
                     "--attack", "intercept-z", "--min-samples", "1", "--runs", "20", "--seed", "2")
    assert code == 0
    rates = [p["abort"]["rate"] for p in _load(out)["sweep"]["points"]]
    assert rates[0] <= rates[1] <= rates[2]


def test_single_point_sweep_equals_run(tmp_path):
    _, s = _run(tmp_path, "sweep", *FAST, "--axis", "threshold", "--points", "0", "--runs", "4",
                "--seed", "5", name="s.json")
    _, r = _run(tmp_path, "run", *FAST, "--runs", "4", "--seed", "5", name="r.json")
    point = _load(s)["sweep"]["points"][0]
    agg = _load(r)["aggregate"]["points"][0]
    for key in ("runs", "abort", "success", "checks"):
        assert point[key] == agg[key]


def test_sweep_axes_are_numeric():
    assert set(SWEEP_AXES) == {"triples", "controllers", "check_fraction", "min_samples",
                               "threshold", "noise"}
    assert main(["sweep", "--axis", "protocol", "--points", "x"]) == 1


# ---- attack-eval ----------------------------------------------------------------------

def _leak(tmp_path, *argv):
    code, out = _run(tmp_path, "attack-eval", *FAST, "--runs", "2", "--seed", "3", *argv)
    assert code == 0
    return _load(out)


def test_attack_eval_epr_hadamard_off(tmp_path):
    doc = _leak(tmp_path, "--attack", "epr-probe", "--hadamard", "off")
    assert doc["options"]["protocol"] == "mcqsdc"
    assert doc["leakage"]["oracle"]["identification_probability"] == pytest.approx(1.0)
    assert doc["leakage"]["empirical"]["identification"]["rate"] == 1.0


def test_attack_eval_epr_hadamard_on_is_lower(tmp_path):
    doc = _leak(tmp_path, "--attack", "epr-probe", "--hadamard", "on")
    leak = doc["leakage"]
    assert leak["oracle"]["identification_probability"] < leak["hadamard_off"]["identification_probability"]
    assert leak["hadamard_reduces_identification"] is True
    assert doc["detection"]["per_sample_oracle"]["c-hop"] == pytest.approx(0.25)


def test_attack_eval_none_is_all_zero(tmp_path):
    doc = _leak(tmp_path, "--attack", "none")
    assert doc["leakage"]["oracle"] == {"identification_probability": 0.0,
                                        "mutual_information_bits": 0.0, "prior_entropy_bits": 0.0}
    assert doc["leakage"]["empirical"]["mutual_information_bits"] == 0.0
    assert set(doc["detection"]["per_sample_oracle"].values()) == {0.0}
    assert doc["detection"]["abort_probability_oracle"]["total"] == 0.0


def test_attack_eval_intercept_reports_detection(tmp_path):
    doc = _leak(tmp_path, "--attack", "intercept-z")
    assert doc["detection"]["per_sample_oracle"]["c-hop"] == pytest.approx(0.25)
    per = doc["detection"]["per_sample_oracle"]
    survive = 1.0
    for purpose in ("ab-hop", "c-hop", "b-hop", "a-hop"):
        survive *= (1 - per[purpose]) ** 8
    assert doc["detection"]["abort_probability_oracle"]["total"] == pytest.approx(1 - survive)


def test_module_entry_point(tmp_path):
    out = tmp_path / "m.json"
    proc = subprocess.run([sys.executable, "-m", "mcqsdc", "run", *FAST, "--seed", "1", "--out", str(out)],
                          capture_output=True, text=True, env=dict(os.environ))
    assert proc.returncode == 0, proc.stderr
    assert out.exists()
