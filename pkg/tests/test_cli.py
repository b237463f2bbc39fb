"""Configuration parsing and command-line contract."""
import json

import pytest

from maxbranch.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, build_parser, main
from maxbranch.config import ConfigError, build_offspring, load_config, parse_config
from maxbranch.laws import Frechet, IntegerTail

FRECHET_CFG = """
[process]
variant = "mbpplre"
offspring = {family = "frechet", c = 1.0, beta = 2.0}
environment = {family = "degenerate", a = 1.0}
initial = 1.0

[run]
n_steps = 10
n_paths = 1
seed = 5
"""


def _write(tmp_path, text, name="run.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

def test_parse_minimal_config(tmp_path):
    cfg = load_config(_write(tmp_path, FRECHET_CFG))
    assert isinstance(cfg.spec.offspring, Frechet)
    assert cfg.n_steps == 10 and cfg.seed == 5


def test_unknown_key_rejected_with_name():
    with pytest.raises(ConfigError, match="run.n_stepz"):
        parse_config({"run": {"n_stepz": 5}})
    with pytest.raises(ConfigError, match="process.offspring.gamma"):
        build_offspring({"family": "frechet", "c": 1.0, "beta": 2.0, "gamma": 3.0})


def test_invalid_parameter_rejected():
    with pytest.raises(ConfigError, match="beta"):
        build_offspring({"family": "frechet", "c": 1.0, "beta": -1.0})
    with pytest.raises(ConfigError):
        build_offspring({"family": "unheard-of"})
    with pytest.raises(ConfigError):
        parse_config({"process": {"variant": "mbp-nope",
                                  "offspring": {"family": "frechet", "c": 1.0,
                                                "beta": 2.0}}})


def test_offspring_families_buildable():
    assert isinstance(build_offspring({"family": "integer_tail", "q": 0.4}), IntegerTail)
    law = build_offspring({"family": "queue_induced", "lam": 1.0,
                           "service": {"family": "exponential", "mean": 1.0}})
    assert law.lam == 1.0
    emp = build_offspring({"family": "empirical", "values": [1.0, 2.0],
                           "probs": [0.5, 0.5], "integer": True})
    assert emp.support == "integer"


def test_mbpre_family_config():
    cfg = parse_config({"process": {
        "variant": "mbpre-integer",
        "offspring_family": [
            {"family": "empirical", "values": [1, 2], "probs": [0.5, 0.5],
             "integer": True},
        ],
        "environment": {"family": "degenerate", "a": 1.0},
    }})
    assert len(cfg.spec.offspring) == 1


# ---------------------------------------------------------------------------
# exit codes and determinism
# ---------------------------------------------------------------------------

def test_simulate_writes_csv_and_exits_zero(tmp_path):
    cfg = _write(tmp_path, FRECHET_CFG)
    out = tmp_path / "traj.csv"
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == EXIT_OK
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "path_id,step,state"
    assert len(lines) == 12  # header + states Z_0..Z_10


def test_simulate_reruns_byte_identical(tmp_path):
    cfg = _write(tmp_path, FRECHET_CFG)
    out_a, out_b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["simulate", "--config", cfg, "--out", str(out_a)]) == EXIT_OK
    assert main(["simulate", "--config", cfg, "--out", str(out_b)]) == EXIT_OK
    assert out_a.read_bytes() == out_b.read_bytes()


def test_simulate_seed_flag_overrides(tmp_path):
    cfg = _write(tmp_path, FRECHET_CFG)
    out_a, out_b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["simulate", "--config", cfg, "--out", str(out_a)])
    main(["simulate", "--config", cfg, "--out", str(out_b), "--seed", "99"])
    assert out_a.read_bytes() != out_b.read_bytes()


def test_simulate_jsonl_format(tmp_path):
    cfg = _write(tmp_path, FRECHET_CFG)
    out = tmp_path / "traj.jsonl"
    assert main(["simulate", "--config", cfg, "--out", str(out),
                 "--format", "jsonl"]) == EXIT_OK
    rec = json.loads(out.read_text().splitlines()[0])
    assert rec["path_id"] == 0 and len(rec["states"]) == 11


def test_invalid_beta_exits_two(tmp_path, capsys):
    bad = FRECHET_CFG.replace("beta = 2.0", "beta = -1.0")
    assert main(["simulate", "--config", _write(tmp_path, bad)]) == EXIT_CONFIG
    assert "beta" in capsys.readouterr().err


def test_missing_config_file_exits_two(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "absent.toml")]) == EXIT_CONFIG


def test_missing_config_flag_exits_two():
    assert main(["simulate"]) == EXIT_CONFIG


def test_runtime_failure_exits_three(tmp_path):
    # environment indexes outside the offspring family: fails at step 1
    cfg = _write(tmp_path, """
[process]
variant = "mbpre-integer"
offspring_family = [{family = "empirical", values = [1, 2], probs = [0.5, 0.5], integer = true}]
environment = {family = "degenerate", a = 2.0}
initial = 1.0

[run]
n_steps = 5
""")
    assert main(["simulate", "--config", cfg]) == EXIT_NUMERIC


# ---------------------------------------------------------------------------
# classify
# ---------------------------------------------------------------------------

def test_classify_ergodic_verdict(tmp_path, capsys):
    cfg = _write(tmp_path, FRECHET_CFG)
    assert main(["classify", "--config", cfg]) == EXIT_OK
    payload = json.loads(capsys.readouterr().out)
    assert payload["verdict"] == "Ergodic"
    assert payload["delta"] == pytest.approx(0.577215665, abs=1e-8)


def test_classify_transient_with_environment(tmp_path, capsys):
    cfg = _write(tmp_path, """
[process]
variant = "mbpplre"
offspring = {family = "frechet", c = 1.0, beta = 1.0}
environment = {family = "exponential", theta = 2.718281828459045}
""")
    assert main(["classify", "--config", cfg]) == EXIT_OK
    payload = json.loads(capsys.readouterr().out)
    assert payload["verdict"] == "Transient"
    assert payload["direction"] == "to_infinity"


def test_classify_degenerate_queue_induced(tmp_path, capsys):
    cfg = _write(tmp_path, """
[process]
variant = "mbp-continuous"
offspring = {family = "queue_induced", lam = 1.0, service = {family = "exponential", mean = 1.0}}
""")
    assert main(["classify", "--config", cfg]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["verdict"] == "Degenerate"


# ---------------------------------------------------------------------------
# estimate-stationary / queue-sim / verify
# ---------------------------------------------------------------------------

def test_estimate_stationary_gate_exits_two(tmp_path, capsys):
    cfg = _write(tmp_path, """
[process]
variant = "mbp-continuous"
offspring = {family = "queue_induced", lam = 1.0, service = {family = "exponential", mean = 1.0}}

[stationary]
n_samples = 100
burn_in = 10
""")
    assert main(["estimate-stationary", "--config", cfg]) == EXIT_CONFIG
    assert "override" in capsys.readouterr().err


def test_estimate_stationary_runs(tmp_path, capsys):
    cfg = _write(tmp_path, FRECHET_CFG + """
[stationary]
n_samples = 2000
burn_in = 100
moments = [1.0]
""")
    assert main(["estimate-stationary", "--config", cfg]) == EXIT_OK
    payload = json.loads(capsys.readouterr().out)
    assert payload["n_samples"] == 2000
    assert "1" in payload["moments"]


def test_queue_sim_deterministic_mean(tmp_path, capsys):
    cfg = _write(tmp_path, """
[queue]
arrival_rate = 1.0
service = {family = "deterministic", value = 2.0}
mode = "discrete"
n_stages = 50
""")
    assert main(["queue-sim", "--config", cfg]) == EXIT_OK
    payload = json.loads(capsys.readouterr().out)
    assert payload["mean_stage_duration"] == 2.0


def test_queue_sim_requires_queue_section(tmp_path):
    assert main(["queue-sim", "--config", _write(tmp_path, FRECHET_CFG)]) == EXIT_CONFIG


def test_verify_passes_on_reduced_budget(tmp_path, capsys):
    cfg = _write(tmp_path, """
[verify]
n_pairs = 5
n_coupled_steps = 50
n_transport_cases = 200
n_kernel_samples = 20000
""")
    assert main(["verify", "--config", cfg]) == EXIT_OK
    payload = json.loads(capsys.readouterr().out)
    assert payload["exact_failures"] == []


def test_help_lists_subcommands(capsys):
    with pytest.raises(SystemExit) as exc:
        build_parser().parse_args(["--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    for name in ("simulate", "classify", "estimate-stationary", "queue-sim",
                 "verify"):
        assert name in out
