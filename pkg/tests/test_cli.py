import csv
import io
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from treewalk.cli import RunConfig, load_config, main, parse_range, run
from treewalk.errors import ConfigError


def run_cli(args, capsys):
    code = main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_parse_range():
    assert parse_range("2:5") == [2, 3, 4, 5]
    assert parse_range("2-4") == [2, 3, 4]
    assert parse_range("3,5,7") == [3, 5, 7]
    with pytest.raises(ConfigError):
        parse_range("a:b")


def test_trace_step0_uniform(capsys):
    code, out, _ = run_cli(["--command", "trace", "--n", "2", "--m", "4", "--steps", "5"], capsys)
    assert code == 0
    r = rows(out)
    assert len(r) == 6
    assert float(r[0]["f_prob"]) == pytest.approx(2 / 62)
    assert float(r[0]["path_prob"]) == pytest.approx(8 / 62)


def test_trace_two_cycles_at_4u(capsys):
    from treewalk.analytics import REFERENCE_STEP_MODEL
    from treewalk.search import path_peak

    code, out, _ = run_cli(["--command", "trace", "--n", "2", "--m", "6"], capsys)
    p = np.array([float(r["path_prob"]) for r in rows(out)])
    assert p.size == 4 * REFERENCE_STEP_MODEL.steps(2, 6) + 1
    # count rises through the midpoint between floor and peak
    mid = 0.5 * (p.min() + p.max())
    ups = np.sum((p[:-1] < mid) & (p[1:] >= mid))
    assert ups == 2
    assert abs(int(np.argmax(p[: p.size // 2])) - path_peak(2, 6)[0]) <= 2


def test_trace_dead_tree_constant(capsys):
    code, out, _ = run_cli(["--command", "trace", "--n", "2", "--m", "4", "--f-leaf", "0",
                            "--frozen-root", "1,3", "--steps", "30"], capsys)
    assert code == 0
    r = rows(out)
    assert len({x["f_prob"] for x in r}) == 1 and {x["path_prob"] for x in r} == {"0.0"}


def test_trace_json(capsys):
    code, out, _ = run_cli(["--command", "trace", "--n", "3", "--m", "2", "--steps", "3",
                            "--format", "json", "--f-leaf", "random", "--seed", "4"], capsys)
    d = json.loads(out)
    assert d["schema_version"] == 1 and len(d["f_prob"]) == 4


@pytest.fixture(scope="module")
def peak_table():
    cfg = RunConfig(command="peaks", n_range=[2, 3, 4], m_range=list(range(3, 11)))
    return {(int(r["N"]), int(r["M"])): r for r in rows(run(cfg.validate()))}


def test_peaks_path_increases(peak_table):
    t = peak_table
    for N in (2, 3, 4):
        pp = [float(t[N, M]["path_peak_prob"]) for M in range(4, 11)]
        assert all(b > a for a, b in zip(pp, pp[1:]))
    for M in range(3, 11):
        col = [float(t[N, M]["path_peak_prob"]) for N in (2, 3, 4)]
        assert all(b > a for a, b in zip(col, col[1:]))


def test_peaks_f_decreases_with_m(peak_table):
    for N in (2, 3, 4):
        fp = [float(peak_table[N, M]["f_peak_prob"]) for M in range(3, 11)]
        assert all(b < a for a, b in zip(fp, fp[1:]))


def test_peaks_f_decreases_with_n(peak_table):
    for M in range(3, 11):
        col = [float(peak_table[N, M]["f_peak_prob"]) for N in (2, 3, 4)]
        assert all(b < a for a, b in zip(col, col[1:])), (M, col)


def test_peak_steps_scale_like_half_power(peak_table):
    r = [int(peak_table[N, M]["path_peak_step"]) / N ** (M / 2) for N in (2, 3, 4) for M in range(3, 11)]
    g = math.exp(np.mean(np.log(r)))
    assert all(0.5 * g <= x <= 2 * g for x in r)


def test_eigen_m4_d15(capsys):
    code, out, _ = run_cli(["--command", "eigen", "--n", "2", "--m", "4", "--format", "json"], capsys)
    d = json.loads(out)
    assert code == 0 and d["D"] == 15 and d["schema_version"] == 1


def test_fit_near_reference_constants(capsys):
    code, out, _ = run_cli(["--command", "fit", "--format", "json", "--threads", "2"], capsys)
    d = json.loads(out)
    for key, ref in (("alpha", 47.87), ("beta", -0.551), ("rho", 0.077), ("gamma", -0.498)):
        assert d[key] == pytest.approx(ref, rel=0.1)
    assert d["units"] == "degrees" and d["grid"]["N"] == list(range(2, 16))


def test_analytics_csv(capsys):
    code, out, _ = run_cli(["--command", "analytics", "--m", "20", "--p", "0.9,1.0", "--steps", "4"], capsys)
    r = rows(out)
    assert code == 0 and len(r) == 8
    assert list(r[0]) == ["M", "p", "y", "p_succ_exact", "p_succ_closed"]


def test_bench_output_and_determinism(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["--command", "bench", "--n", "2", "--m", "5", "--runs", "50", "--seed", "11"]
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b), "--threads", "2"]) == 0
    assert a.read_bytes() == b.read_bytes()
    r = rows(a.read_text())
    assert [x["algorithm"] for x in r] == ["classical", "direct", "movement"]
    assert b"\r" not in a.read_bytes()


def test_bench_json_has_speedup(capsys):
    code, out, _ = run_cli(["--command", "bench", "--n", "2", "--m", "5", "--runs", "20",
                            "--format", "json"], capsys)
    d = json.loads(out)
    assert d["schema_version"] == 1
    direct = next(x for x in d["results"] if x["algorithm"] == "direct")
    assert direct["speedup"] == pytest.approx(direct["classical_average_speed"] / direct["average_speed"])


def test_bench_n2_m15_ordering(capsys):
    code, out, _ = run_cli(["--command", "bench", "--n", "2", "--m", "15", "--runs", "1000",
                            "--seed", "1"], capsys)
    s = {r["algorithm"]: float(r["mean_speed"]) for r in rows(out)}
    assert s["movement"] < s["direct"] < s["classical"]


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"command": "trace", "n": 2, "m": 3, "steps": 2, "format": "json"}))
    c = load_config(["--config", str(cfg), "--steps", "4"])
    assert c.steps == 4 and c.format == "json" and c.m == 3
    code, out, _ = run_cli(["--config", str(cfg)], capsys)
    assert code == 0 and len(json.loads(out)["f_prob"]) == 3


@pytest.mark.parametrize("payload", [
    {"command": "trace", "bogus": 1},
    {"command": "launch"},
    {"n": 2},
    {"command": "bench", "algorithms": ["grover"], "n": 2, "m": 3, "runs": 2},
    {"command": "trace", "n": 1, "m": 3},
    {"command": "trace", "seed": -1},
])
def test_config_errors_exit_2(tmp_path, capsys, payload):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps(payload))
    code, _, err = run_cli(["--config", str(cfg)], capsys)
    assert code == 2 and "configuration error" in err


def test_malformed_config_exit_2(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text("{not json")
    assert run_cli(["--config", str(cfg)], capsys)[0] == 2


def test_bad_flag_exit_2():
    with pytest.raises(SystemExit) as e:
        main(["--command", "nope"])
    assert e.value.code == 2


def test_io_error_exit_4(tmp_path, capsys):
    out = tmp_path / "missing" / "x.csv"
    assert run_cli(["--command", "trace", "--m", "2", "--out", str(out)], capsys)[0] == 4
    assert run_cli(["--config", str(tmp_path / "none.json")], capsys)[0] == 4


def test_numerical_failure_exit_3(monkeypatch, capsys):
    from treewalk import reduced
    from treewalk.errors import NumericalFailure

    def boom(*a, **k):
        raise NumericalFailure("no convergence", 30)

    monkeypatch.setattr(reduced, "eigen_report", boom)
    assert run_cli(["--command", "eigen", "--m", "4"], capsys)[0] == 3


def test_console_script_entry():
    proc = subprocess.run([sys.executable, "-m", "treewalk.cli", "--command", "eigen", "--m", "2"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.startswith("N,M,D,state_dimension")
