import numpy as np
import pytest
from click.testing import CliRunner
from . import csvio
from .cli import cli
from .test_fixtures import data_path

WORKED = str(data_path("evalues", "worked.csv"))
WORKED_SETS = str(data_path("sets", "worked.txt"))
SMALL = data_path("observations", "small.csv")


@pytest.fixture
def runner():
    return CliRunner()


def invoke(runner, *args):
    return runner.invoke(cli, [str(a) for a in args], catch_exceptions=False)


def head(source, count, target):
    "copy the header and the first count data rows of a CSV"
    lines = source.read_text().splitlines(keepends=True)
    target.write_text("".join(lines[:count + 1]))
    return target


def test_bound_worked_evalues(runner, tmp_path):
    out = tmp_path / "bounds.csv"
    result = invoke(runner, "bound", "--evalues", WORKED, "--sets", WORKED_SETS, "--alpha", 0.2, "-o", out)
    assert result.exit_code == 0, result.output
    rows = csvio.read_bounds(out)
    r12 = [r for r in rows if r.set_label == "R12"]
    assert [r.c_inst for r in r12] == [2, 2, 1, 2]
    assert [r.c_ard for r in r12] == [2, 2, 1, 1]
    assert (r12[2].time, r12[2].tdp_inst) == (2, 0.5)
    assert [r.c_inst for r in rows if r.set_label == "all"] == [4, 4, 2, 4]


def test_bound_all_ones_is_vacuous(runner, tmp_path):
    sets = tmp_path / "sets.txt"
    sets.write_text("s:1,3\n")
    out = tmp_path / "bounds.csv"
    result = invoke(runner, "bound", "--evalues", data_path("evalues", "ones.csv"), "--sets", sets, "-o", out)
    assert result.exit_code == 0, result.output
    rows = csvio.read_bounds(out)
    assert len(rows) == 5
    assert all(r.c_inst == 2 and r.tdp_ard == 0.0 for r in rows)


def test_bound_reruns_are_identical(runner, tmp_path):
    sets = tmp_path / "sets.txt"
    sets.write_text("a:1,2\nb:1-3\n")
    outputs = []
    for name in ("one.csv", "two.csv"):
        out = tmp_path / name
        result = invoke(runner, "bound", "--observations", SMALL, "--sets", sets, "--family", "mom", "-o", out)
        assert result.exit_code == 0, result.output
        outputs.append(out.read_bytes())
    assert outputs[0] == outputs[1]


def test_bound_observations(runner, tmp_path):
    sets = tmp_path / "sets.txt"
    sets.write_text("a:1,2\n")
    out, emitted = tmp_path / "bounds.csv", tmp_path / "e.csv"
    result = invoke(runner, "bound", "--observations", SMALL, "--sets", sets, "--family", "t_lr",
                    "--alpha", 0.2, "-o", out, "--emit-evalues", emitted)
    assert result.exit_code == 0, result.output
    rows = csvio.read_bounds(out)
    assert [r.time for r in rows] == list(range(1, 13))
    assert np.all(np.diff([r.c_ard for r in rows]) <= 0)
    times, e = csvio.read_evalues(emitted)
    assert times.tolist() == list(range(1, 13))
    # no variance estimate from one observation
    assert e[0].tolist() == [1.0, 1.0, 1.0]


@pytest.mark.parametrize("mode", ["observations", "evalues"])
def test_resume_matches_uninterrupted_run(runner, tmp_path, mode):
    sets = tmp_path / "sets.txt"
    sets.write_text("a:1,2\nb:2,3\nall:1-3\n")
    if mode == "observations":
        source = SMALL
        extra = ["--family", "t_lr", "--alpha", 0.2]
    else:
        source = tmp_path / "e.csv"
        rng = np.random.default_rng(8)
        csvio.write_matrix(source, range(1, 13), np.exp(rng.uniform(-2, 3, size=(12, 3))))
        extra = ["--alpha", 0.2]
    full = tmp_path / "full.csv"
    assert invoke(runner, "bound", f"--{mode}", source, "--sets", sets, *extra, "-o", full).exit_code == 0
    expected = full.read_bytes()

    rng = np.random.default_rng(99)
    for trial in range(100 if mode == "observations" else 20):
        split = int(rng.integers(1, 12))
        out, state = tmp_path / f"out{trial}.csv", tmp_path / f"state{trial}.json"
        first = head(source, split, tmp_path / f"head{trial}.csv")
        for part in (first, source):
            result = invoke(runner, "bound", f"--{mode}", part, "--sets", sets, *extra,
                            "-o", out, "--resume", state)
            assert result.exit_code == 0, result.output
        assert out.read_bytes() == expected, f"split at {split}"


def test_resume_refuses_changed_parameters(runner, tmp_path):
    state = tmp_path / "state.json"
    args = ["bound", "--evalues", WORKED, "--sets", WORKED_SETS, "-o", tmp_path / "b.csv", "--resume", state]
    assert invoke(runner, *args, "--alpha", 0.2).exit_code == 0
    assert invoke(runner, *args, "--alpha", 0.1).exit_code == 2


def test_simulate(runner, tmp_path):
    out, raw = tmp_path / "metrics.csv", tmp_path / "raw.csv"
    result = invoke(runner, "simulate", "--scenario", data_path("scenarios", "tiny.conf"),
                    "--iterations", 1, "-o", out, "--dump-raw", raw)
    assert result.exit_code == 0, result.output
    lines = out.read_text().splitlines()
    assert lines[0] == ",".join(csvio.METRICS_HEADER)
    assert len(lines) == 1 + 3 * 18
    assert raw.read_text().splitlines()[0] == ",".join(csvio.RAW_HEADER)


def test_oracle(runner, tmp_path):
    report = tmp_path / "report.json"
    result = invoke(runner, "oracle", "--instances", 200, "--seed", 3, "--report", report)
    assert result.exit_code == 0, result.output
    assert '"mismatches": []' in report.read_text()
    assert invoke(runner, "oracle", "--instances", 0).exit_code == 2
    assert invoke(runner, "oracle", "--max-m", 13).exit_code == 2


def test_convert(runner, tmp_path):
    source, out = tmp_path / "e.csv", tmp_path / "p.csv"
    source.write_text("time,h1,h2\n1,0.5,1\n2,4,0\n3,2,1\n")
    result = invoke(runner, "convert", "--evalues", source, "-o", out)
    assert result.exit_code == 0, result.output
    times, p = csvio.read_matrix(out)
    assert times.tolist() == [1, 2, 3]
    assert p[:, 0].tolist() == [1.0, 0.25, 0.25]
    assert p[:, 1].tolist() == [1.0, 1.0, 1.0]


def test_exit_codes(runner, tmp_path):
    out = tmp_path / "b.csv"
    negative = data_path("evalues", "negative.csv")
    assert invoke(runner, "bound", "--evalues", negative, "--sets", WORKED_SETS, "-o", out).exit_code == 1
    assert invoke(runner, "bound", "--evalues", WORKED, "--sets", data_path("sets", "out_of_range.txt"),
                  "-o", out).exit_code == 1
    assert invoke(runner, "bound", "--evalues", WORKED, "--observations", SMALL, "--sets", WORKED_SETS,
                  "-o", out).exit_code == 1
    assert invoke(runner, "bound", "--evalues", WORKED, "--sets", WORKED_SETS, "--alpha", 1.5,
                  "-o", out).exit_code == 2
    assert invoke(runner, "simulate", "--scenario", data_path("scenarios", "unknown_key.conf"),
                  "-o", out).exit_code == 2
    assert invoke(runner, "convert", "--evalues", data_path("evalues", "malformed.csv"), "-o", out).exit_code == 1
