import subprocess
import sys

import pytest
import yaml

from moqlab.cli import PRESETS, dump_run_config, load_run_config, main, resolve_config
from moqlab.core import InvalidConfiguration
from moqlab.harness import ExperimentSpec


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def marked(out):
    return [line.split()[1] for line in out.splitlines() if line.startswith("*")]


def test_oracle_original(capsys):
    code, out, _ = run(capsys, "oracle", "original")
    assert code == 0
    rows = [l for l in out.splitlines() if l[:1] in "* " and len(l.split()) >= 3 and l.split()[-1].endswith(")")]
    assert len(rows) == 9
    assert marked(out) == ["DI"]
    assert "(9/10, -29/2)" in out


def test_oracle_swapped_and_threshold(capsys):
    assert marked(run(capsys, "oracle", "swapped")[1]) == ["ID"]
    assert marked(run(capsys, "oracle", "original", "--threshold", "1.01")[1]) == ["II"]


def test_oracle_csv(capsys, tmp_path):
    path = tmp_path / "o.csv"
    code, _, _ = run(capsys, "oracle", "original", "--csv", str(path))
    lines = path.read_text().splitlines()
    assert code == 0 and len(lines) == 10
    assert lines[0].startswith("label,exact_obj1")
    assert lines[4].startswith("DI,9/10,-29/2,0.9,-14.5,True")


def test_unknown_environment_is_usage_error(capsys):
    code, _, err = run(capsys, "oracle", "moon")
    assert code == 2 and "unknown environment" in err


def test_bad_flags_are_usage_errors(capsys):
    assert run(capsys, "frobnicate")[0] == 2
    assert run(capsys, "run", "preset:ch4-baseline", "--trials", "many")[0] == 2
    assert run(capsys, "run", "preset:nope")[0] == 2
    assert run(capsys, "run", "missing.yaml")[0] == 2


def test_list(capsys):
    code, out, _ = run(capsys, "list")
    assert code == 0
    for name in ["original", "reward-design", "extra-state", "swapped",
                 "basic", "baseline-expected", "moss", "moss-two-phase", "options"]:
        assert f"  {name}\n" in out
    for p in PRESETS:
        assert f"preset:{p}" in out
    chapters = {p.split("-")[0] for p in PRESETS}
    assert chapters == {"ch4", "ch5", "ch6", "ch7", "ch8", "ch9"}


def test_emit_env(capsys, tmp_path):
    from moqlab.envs import load_model, make_environment

    path = tmp_path / "m.yaml"
    assert run(capsys, "emit-env", "extra-state", "--out", str(path))[0] == 0
    assert load_model(path.read_text()).structure() == make_environment("extra-state").structure()
    code, out, _ = run(capsys, "emit-env", "original")
    assert code == 0 and "thresholds" in out


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_round_trip(name):
    spec = resolve_config(f"preset:{name}")
    assert load_run_config(dump_run_config(spec)) == spec


def test_config_rejects_unknown_keys():
    with pytest.raises(InvalidConfiguration):
        load_run_config("algorithm: moss\nlearning_rate: 0.1\n")
    with pytest.raises(InvalidConfiguration):
        load_run_config("- a\n- b\n")
    assert load_run_config("") == ExperimentSpec()


def test_run_with_overrides(capsys, tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("algorithm: moss\nenvironment: original\ntrials: 5\nepisodes: 50\n")
    out = tmp_path / "o"
    code, stdout, _ = run(capsys, "run", str(cfg), "--trials", "2", "--env", "swapped",
                          "--decay", "--alpha-final", "0.001", "--out", str(out))
    assert code == 0
    assert "moss on swapped: 2 trials x 50 episodes" in stdout
    spec = ExperimentSpec(**yaml.safe_load((out / "manifest.yaml").read_text())["spec"])
    assert (spec.trials, spec.environment, spec.decay, spec.alpha_final) == (2, "swapped", True, 0.001)


def test_run_determinism(capsys, tmp_path):
    for name in ("a", "b"):
        args = ["run", "preset:ch8-options", "--seed", "7", "--trials", "2",
                "--episodes", "100", "--out", str(tmp_path / name)]
        assert run(capsys, *args)[0] == 0
    for f in ("summary.csv", "trial_0_log.csv", "trial_1_log.csv", "chart_0.csv", "chart_1.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_run_io_failure_is_runtime_error(capsys, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, _, err = run(capsys, "run", "preset:ch4-baseline", "--trials", "1",
                       "--episodes", "5", "--out", str(blocker / "x"))
    assert code == 1 and "I/O" in err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "moqlab", "list"], capture_output=True, text=True)
    assert proc.returncode == 0 and "presets:" in proc.stdout
