import contextlib
import io as stdio
import json
import subprocess
import sys
from pathlib import Path

import pytest

from fiml import cli, io

SMALL = (
    "[case]\nn = 64\n"
    "[train]\nre_tau = [550.0]\nhidden = [10, 10]\nmax_epochs = 400\npatience = 100\n"
    "[predict]\nre_tau = 700.0\n"
)


@pytest.fixture
def small_cfg(tmp_path):
    p = tmp_path / "small.toml"
    p.write_text(SMALL)
    return p


def run(argv):
    out, err = stdio.StringIO(), stdio.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = cli.main(argv)
    lines = out.getvalue().strip().splitlines()
    return code, Path(lines[-1]) if lines else None, err.getvalue()


def test_forward_default_layout(tmp_path):
    code, d, _ = run(["forward", "--output-dir", str(tmp_path), "--label", "base"])
    assert code == 0
    assert d.parent == tmp_path and d.name.endswith("-base-forward")
    for f in ("state.csv", "history.csv", "config.toml", "command.json", "summary.json", "timing.json"):
        assert (d / f).exists(), f
    header, rows = io.read_csv(d / "state.csv")
    assert tuple(header) == io.STATE_COLUMNS and len(rows) == 97
    s = io.read_json(d / "summary.json")
    assert 0.999 < s["tau_wall"] < 1.001


def test_gradcheck_exit_codes(tmp_path, small_cfg):
    code, d, _ = run(["gradcheck", "-c", str(small_cfg), "--output-dir", str(tmp_path)])
    assert code == 0
    s = io.read_json(d / "summary.json")
    assert s["passed"] and s["max_rel_err"] < 1e-5
    header, rows = io.read_csv(d / "gradcheck-scalar-cf.csv")
    assert tuple(header) == io.GRADCHECK_COLUMNS and len(rows) == 8
    strict = tmp_path / "strict.toml"
    strict.write_text(SMALL + "[gradcheck]\nthreshold = 1e-30\n")
    code, _, err = run(["gradcheck", "-c", str(strict), "--output-dir", str(tmp_path)])
    assert code == 1 and "check failed" in err


def test_bad_config_exit_two(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("[case]\nfoo = 1\nbar = 2\n")
    code, d, err = run(["forward", "-c", str(p), "--output-dir", str(tmp_path)])
    assert code == 2 and d is None
    assert "case.foo" in err and "case.bar" in err


def test_twin_train_predict_chain(tmp_path, small_cfg):
    base = ["-c", str(small_cfg), "--output-dir", str(tmp_path)]
    code, twin, _ = run(["twin", *base])
    assert code == 0
    assert io.read_json(twin / "summary.json")["u_rms_error"] < 5e-3
    code, tr, _ = run(["train", *base, "--inputs", str(twin)])
    assert code == 0 and (tr / "network.json").exists()
    code, pr, _ = run(["predict", *base, "--network", str(tr / "network.json")])
    assert code == 0
    s = io.read_json(pr / "summary.json")
    assert s["misfit_augmented"] < s["misfit_baseline"]
    assert "nn_seconds_per_query" in io.read_json(pr / "timing.json")
    code, en, _ = run(["ensemble", *base, "--networks", str(tr / "network.json"), str(tr / "network.json")])
    assert code == 0
    assert io.read_json(en / "summary.json")["all_members_at_or_below_baseline"]
    code, _, err = run(["ensemble", *base, "--networks", str(tr / "network.json")])
    assert code == 2 and "at least two" in err


def test_invert_with_external_profile(tmp_path, small_cfg):
    code, fw, _ = run(["forward", "-c", str(small_cfg), "--output-dir", str(tmp_path)])
    header, rows = io.read_csv(fw / "state.csv")
    prof = tmp_path / "truth.csv"
    yi, ui = header.index("y_plus"), header.index("u_plus")
    io.write_csv(prof, ("y_plus", "u_plus"), ([float(r[yi]), 1.01 * float(r[ui])] for r in rows[1::4]))
    code, d, _ = run(["invert", "-c", str(small_cfg), "--output-dir", str(tmp_path),
                      "--truth-profile", str(prof), "--units", "plus"])
    assert code == 0
    s = io.read_json(d / "summary.json")
    assert s["kind"] == "velocity-profile" and s["misfit_reduction"] > 0.9
    code, _, err = run(["invert", "-c", str(small_cfg), "--output-dir", str(tmp_path)])
    assert code == 2


def test_study_objectives(tmp_path, small_cfg):
    code, d, _ = run(["study-objectives", "-c", str(small_cfg), "--output-dir", str(tmp_path)])
    assert code == 0
    assert io.read_json(d / "summary.json")["u_rms_difference"] < 0.02


def test_console_script_help():
    out = subprocess.run([sys.executable, "-m", "fiml.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for sub in cli.SUBCOMMANDS:
        assert sub in out.stdout
