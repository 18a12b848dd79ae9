import json
import textwrap

import pytest

import main
import utils
from nonlocalreg import exceptions

UNIT_MASS = """
    [kernel]
    family = power
    params = alpha=0.5
    tail = truncate:1.7777777777777777
    [class]
    lambda = 1
    Lambda = 2
    [lemmas]
    eta1 = 0.1
    r1 = 0.01
"""


def write_config(tmp_path, text):
    path = tmp_path / "run.cfg"
    path.write_text(textwrap.dedent(text))
    return str(path)


def run(tmp_path, command, config, *extra):
    out = tmp_path / "out"
    code = main.run_command([command, "--config", config, "--out-dir", str(out), *extra])
    return code, out


def read_jsonl(path):
    with open(path) as f:
        return [json.loads(line) for line in f]


def test_constants(tmp_path):
    code, out = run(tmp_path, "constants", write_config(tmp_path, UNIT_MASS))
    assert code == main.EXIT_OK
    records = {r["check"]: r for r in read_jsonl(out / "report.jsonl")}
    assert records["constant:C1"]["lhs"] == pytest.approx(19.0 / 3.0, rel=1e-7)
    assert records["constant:C2"]["lhs"] == pytest.approx(248.0, rel=1e-7)
    constants = json.load(open(out / "constants.json"))
    assert constants["eta1"] == 0.1
    manifest = json.load(open(out / "manifest.json"))
    assert manifest["command"] == "constants"
    assert manifest["failed"] == 0
    assert str(out / "report.jsonl") in manifest["outputs"]


def test_csv_reports(tmp_path):
    code, out = run(tmp_path, "constants", write_config(tmp_path, UNIT_MASS), "--format", "csv")
    assert code == main.EXIT_OK
    assert (out / "report.csv").exists()
    assert not (out / "report.jsonl").exists()


def test_failed_check_exits_with_one(tmp_path, capsys):
    # delta2 below the true exponent breaks the upper scaling bound
    config = write_config(tmp_path, """
    [kernel]
    family = power
    params = alpha=0.5
    delta2 = 0.3
    [class]
    Lambda = 2
    [lemmas]
    r_samples = 3
    epsilons = 0.1
    bump_samples = 1
    """)
    code, out = run(tmp_path, "verify-lemmas", config)
    assert code == main.EXIT_CHECK_FAILED
    assert "FAIL weak_scaling" in capsys.readouterr().out
    records = read_jsonl(out / "report.jsonl")
    assert any(r["check"] == "weak_scaling" and not r["pass"] for r in records)


@pytest.mark.parametrize("text", [
    "[kernel]\nfamily = gaussian\n",
    "[kernel]\nparams = alpha=0.5\n[grid]\nexterior = wave\n",
    "[plot]\ncolor = red\n",
])
def test_bad_configs_exit_with_two(tmp_path, text):
    command = "solve" if "grid" in text else "constants"
    code, _ = run(tmp_path, command, write_config(tmp_path, text))
    assert code == main.EXIT_USAGE


def test_missing_config(tmp_path):
    code, _ = run(tmp_path, "constants", str(tmp_path / "nowhere.cfg"))
    assert code == main.EXIT_USAGE


def test_unknown_command(tmp_path):
    assert main.run_command(["plot", "--config", "x.cfg"]) == main.EXIT_USAGE


def test_solve_writes_solution(tmp_path):
    code, out = run(tmp_path, "solve", write_config(tmp_path, """
        [kernel]
        params = alpha=0.5
        [grid]
        h = 0.05
        exterior = ramp
    """))
    assert code == main.EXIT_OK
    summary = json.load(open(out / "solve.json"))
    assert summary["unknowns"] == 20
    assert (out / "solution.csv").exists()


def test_probe_on_example_config(tmp_path):
    code, out = run(tmp_path, "probe", utils.get_resource("example.cfg"))
    assert code == main.EXIT_OK
    records = {r["check"]: r for r in read_jsonl(out / "report.jsonl")}
    assert records["holder_exponent"]["pass"]
    assert (out / "profile_0.csv").exists()


def test_bundled_config_by_name(tmp_path):
    assert utils.resolve_config("example") == utils.get_resource("example.cfg")
    assert utils.resolve_config(str(tmp_path / "run.cfg")) == str(tmp_path / "run.cfg")
    with pytest.raises(exceptions.ConfigError):
        utils.get_resource("nowhere.cfg")
    code, out = run(tmp_path, "probe", "example")
    assert code == main.EXIT_OK
    assert (out / "manifest.json").exists()


def test_levy_stable(tmp_path):
    code, out = run(tmp_path, "levy", write_config(tmp_path, """
        [levy]
        family = stable
        params = alpha=1.0
        samples = 10
    """))
    assert code == main.EXIT_OK
    summary = json.load(open(out / "levy.json"))
    assert summary["delta1"] == pytest.approx(1.0, abs=1e-9)
    assert summary["spread"] == pytest.approx(1.0, rel=1e-6)
    checks = {r["check"] for r in read_jsonl(out / "report.jsonl")}
    assert {"scaling_fit", "nu_ratio", "psi_star_upper", "stable_density"} <= checks


def test_levy_without_density(tmp_path):
    code, out = run(tmp_path, "levy", write_config(tmp_path, """
        [levy]
        family = log_perturbed
        params = alpha=1.0, p=0.25
        samples = 10
    """))
    assert code == main.EXIT_OK
    records = [r for r in read_jsonl(out / "report.jsonl") if r["check"] == "nu_ratio"]
    assert records[0]["inputs"]["status"] == "unsupported"


@pytest.mark.slow
@pytest.mark.parametrize("kernel", [
    "family = power\nparams = alpha=0.5",
    "family = power\nparams = alpha=1.5",
    "family = log_perturbed\nparams = alpha=1, p=1",
])
def test_holder_fit_on_solved_problems(tmp_path, kernel):
    config = tmp_path / "run.cfg"
    config.write_text(f"[kernel]\n{kernel}\n[grid]\nh = 0.005\nexterior = ramp\n"
                      "[probe]\nfixture = solve\ncenters = -0.2; 0; 0.2\ns = 0.2\nlevels = 4\n")
    code, out = run(tmp_path, "probe", str(config))
    records = read_jsonl(out / "report.jsonl")
    assert code == main.EXIT_OK, [r for r in records if not r["pass"]]
    refinement = [r for r in records if r["check"] == "holder_constant_refinement"]
    assert len(refinement) == 3
    assert all(r["lhs"] <= 0.2 for r in refinement)
