import csv
import io
import json
import subprocess
import sys

import pytest

from noisytele.cli import main, parse_eta_grid
from noisytele.core import GAMMA_BV, Protocol, optimal_protocol
from noisytele.errors import ConfigError
from noisytele.montecarlo import random_protocol
from noisytele.qlinalg import make_rng

KNOWN_FAILURES = {"montecarlo.deterioration_monotone", "montecarlo.uniform_protocol_baseline_z"}


def run(tmp_path, *args, name="out.csv"):
    out = tmp_path / name
    code = main([*args, "--out", str(out)])
    return code, (out.read_text() if out.exists() else None)


def parse(text):
    lines = text.splitlines()
    assert lines[-1].startswith("# config: ")
    config = json.loads(lines[-1][len("# config: ") :])
    rows = list(csv.reader(io.StringIO("\n".join(lines[:-1]))))
    return rows[0], rows[1:], config


@pytest.fixture(scope="module")
def verify_default(tmp_path_factory):
    return run(tmp_path_factory.mktemp("verify"), "verify", "--threads", "4")


def test_verify_reports_every_check(verify_default):
    code, text = verify_default
    header, rows, config = parse(text)
    assert header == ["check_name", "status", "value", "bound"]
    assert config["command"] == "verify"
    names = {r[0] for r in rows}
    assert "core.F_bounds_sweep_rows" in names
    sweep = next(r for r in rows if r[0] == "core.F_bounds_sweep_rows")
    assert float(sweep[2]) == 4 * 10_000
    assert all(r[1] in ("pass", "fail") for r in rows)


def test_verify_failures_are_the_documented_convention_effects(verify_default):
    code, text = verify_default
    _, rows, _ = parse(text)
    failed = {r[0] for r in rows if r[1] == "fail"}
    assert failed == KNOWN_FAILURES
    assert code == 1


@pytest.mark.xfail(strict=True, reason="two invariants fail under the exp(-i p.G) parameter convention")
def test_verify_default_exit_zero(verify_default):
    assert verify_default[0] == 0


def test_verify_zero_tolerance_fails_more_checks(tmp_path, verify_default):
    code, text = run(tmp_path, "verify", "--tol-scale", "0", "--threads", "4")
    assert code == 1
    _, rows, _ = parse(text)
    failed = {r[0] for r in rows if r[1] == "fail"}
    assert failed > KNOWN_FAILURES
    assert "qlinalg.unitarity" in failed


def test_deteriorate_csv_and_thread_independence(tmp_path):
    args = ["deteriorate", "--eta-grid", "0:1:4", "--trials", "50", "--seed", "3"]
    code1, a = run(tmp_path, *args, "--threads", "1", name="a.csv")
    code2, b = run(tmp_path, *args, "--threads", "4", name="b.csv")
    assert code1 == code2 == 0
    assert a == b
    header, rows, config = parse(a)
    assert header == ["eta", "mean_F", "std_F", "mean_D", "std_D", "trials", "seed"]
    assert len(rows) == 4 and config["eta_grid"] == [0.0, 1 / 3, 2 / 3, 1.0]
    assert float(rows[0][1]) == pytest.approx(1.0)


def test_recover_csv(tmp_path):
    args = ["recover", "--iters", "5", "--repeats", "2", "--npop", "10"]
    _, a = run(tmp_path, *args, "--threads", "1", name="a.csv")
    _, b = run(tmp_path, *args, "--threads", "3", name="b.csv")
    assert a == b
    header, rows, _ = parse(a)
    assert header == ["run_id", "iteration", "best_F", "best_D", "shock_flag", "gamma", "seed"]
    # three named channels x 2 repeats x 6 records
    assert len(rows) == 3 * 2 * 6
    assert {r[0] for r in rows} == {str(i) for i in range(6)}


def test_recover_named_gamma(tmp_path):
    _, text = run(tmp_path, "recover", "--iters", "2", "--repeats", "1", "--gamma-name", "bv")
    _, rows, config = parse(text)
    assert {float(r[5]) for r in rows} == {config["gamma"]} == {GAMMA_BV}


def test_stabilize_csv(tmp_path):
    args = ["stabilize", "--shock-period", "10", "--cycles", "2", "--burn-in", "1", "--repeats", "2"]
    _, a = run(tmp_path, *args, "--threads", "1", name="a.csv")
    _, b = run(tmp_path, *args, "--threads", "2", name="b.csv")
    assert a == b
    _, rows, _ = parse(a)
    assert sum(int(r[4]) for r in rows) == 2 * 3


def test_evaluate_replays_protocol_file(tmp_path):
    proto = random_protocol(2, make_rng(0))
    path = tmp_path / "p.txt"
    proto.save(path)
    code, text = run(tmp_path, "evaluate", "--protocol", str(path), "--mc-samples", "2000")
    assert code == 0
    header, rows, _ = parse(text)
    assert rows[0][2] == "analytic" and rows[1][2] == "monte_carlo"


def test_export_optimal_round_trips(tmp_path):
    code, text = run(tmp_path, "export-optimal", "--d", "3")
    assert code == 0
    assert Protocol.from_text(text) == optimal_protocol(3)


@pytest.mark.parametrize(
    "args",
    [
        ["recover", "--gamma", "1.5"],
        ["stabilize", "--shock-period", "7"],
        ["deteriorate"],
        ["deteriorate", "--eta-grid", "0:1"],
        ["deteriorate", "--eta", "2"],
        ["recover", "--crossover", "2"],
        ["recover", "--npop", "3"],
        ["recover", "--gamma", "0.5", "--gamma-name", "c"],
        ["nonsense"],
    ],
)
def test_bad_config_exit_two(tmp_path, args, capsys):
    code, _ = run(tmp_path, *args)
    assert code == 2


def test_eta_grid_parser():
    assert parse_eta_grid("0:1:3") == (0.0, 0.5, 1.0)
    with pytest.raises(ConfigError):
        parse_eta_grid("a:b:c")


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "noisytele", "export-optimal"], capture_output=True, text=True, check=True
    )
    assert proc.stdout.splitlines()[0] == "2"
