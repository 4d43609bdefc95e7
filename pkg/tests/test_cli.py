import json

import numpy as np
import pytest

from genlasso_path import fileio
from genlasso_path.backend_base import NumericalFailure
from genlasso_path.cli import main, run_bench
from genlasso_path.general_x import run_path_general_x
from genlasso_path.operators import FusedGraph, SparseFusedGraph, TrendFilter, chain_edges
from genlasso_path.path_core import run_path
from genlasso_path.tf_backend import TrendFilterBackend


def write_vector(path, values, name="y"):
    path.write_text(name + "\n" + "".join(fileio.fmt(v) + "\n" for v in values))
    return str(path)


def write_rows(path, header, rows):
    path.write_text(header + "\n" + "".join(",".join(str(v) for v in r) + "\n" for r in rows))
    return str(path)


def read_beta(text):
    lines = [l for l in text.splitlines() if l and not l.startswith("#")]
    assert lines[0] == "beta"
    return np.array([float(v) for v in lines[1:]])


@pytest.fixture
def worked(tmp_path):
    return write_vector(tmp_path / "y.csv", [0, 1, 3])


def test_worked_instance_knots_file(tmp_path, worked):
    out = tmp_path / "out"
    assert main(["path", "--problem", "fl1d", "--y", worked, "--out", str(out)]) == 0
    lines = (out / "knots.csv").read_text().splitlines()
    assert lines[0] == fileio.MAGIC
    assert lines[1] == "lambda,event,coordinate,sign,df"
    rows = [l.split(",") for l in lines[2:]]
    assert [r[1:] for r in rows] == [["hit", "2", "+1", "2"], ["hit", "1", "+1", "3"]]
    np.testing.assert_allclose([float(r[0]) for r in rows], [5 / 3, 1], atol=1e-12)


def test_tf0_and_fl1d_byte_identical(tmp_path):
    y = write_vector(tmp_path / "y.csv", np.random.default_rng(0).standard_normal(25))
    assert main(["path", "--problem", "fl1d", "--y", y, "--out", str(tmp_path / "a")]) == 0
    assert main(["path", "--problem", "tf", "--order", "0", "--y", y, "--out", str(tmp_path / "b")]) == 0
    for name in ("knots.csv", "segments.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_empty_edge_list(tmp_path, worked, capsys):
    edges = write_rows(tmp_path / "e.csv", "i,j", [])
    out = str(tmp_path / "out")
    assert main(["path", "--problem", "flgraph", "--edges", edges, "--y", worked, "--out", out]) == 0
    rows = (tmp_path / "out" / "knots.csv").read_text().splitlines()[2:]
    assert rows == ["0,none,0,0,3"]
    assert main(["coef", "--path", out, "--lambda", "4"]) == 0
    np.testing.assert_array_equal(read_beta(capsys.readouterr().out), [0, 1, 3])


def test_coef_examples(tmp_path, worked, capsys):
    out = str(tmp_path / "out")
    main(["path", "--problem", "fl1d", "--y", worked, "--out", out])
    capsys.readouterr()
    assert main(["coef", "--path", out, "--lambda", "1"]) == 0
    np.testing.assert_allclose(read_beta(capsys.readouterr().out), [1, 1, 2], atol=1e-12)
    assert main(["coef", "--path", out, "--lambda", "100"]) == 0
    np.testing.assert_allclose(read_beta(capsys.readouterr().out), [4 / 3] * 3, atol=1e-12)
    assert main(["coef", "--path", out, "--df", "3"]) == 0
    np.testing.assert_allclose(read_beta(capsys.readouterr().out), [0, 1, 3], atol=1e-12)
    assert main(["coef", "--path", out, "--df", "2", "--out", str(tmp_path / "b.csv")]) == 0
    np.testing.assert_allclose(read_beta((tmp_path / "b.csv").read_text()), [1, 1, 2], atol=1e-12)


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_round_trip(tmp_path, fmt, capsys):
    rng = np.random.default_rng(1)
    p = 20
    y = rng.standard_normal(p)
    cases = [
        (["--problem", "tf", "--order", "2"], TrendFilter(2, p), None),
        (["--problem", "sfl", "--alpha", "0.5", "--edges", "E"], SparseFusedGraph(p, chain_edges(p), 0.5), None),
        (["--problem", "fl1d", "--X", "X"], TrendFilter(0, p), rng.standard_normal((30, p))),
    ]
    edges = write_rows(tmp_path / "e.csv", "i,j", chain_edges(p) + 1)
    for t, (flags, spec, X) in enumerate(cases):
        yy = y if X is None else rng.standard_normal(X.shape[0])
        flags = [edges if f == "E" else f for f in flags]
        if X is not None:
            flags[flags.index("X")] = write_rows(tmp_path / "X.csv", ",".join(f"x{j}" for j in range(p)),
                                                 [[fileio.fmt(v) for v in row] for row in X])
        yfile = write_vector(tmp_path / f"y{t}.csv", yy)
        out = str(tmp_path / f"o{t}")
        assert main(["path", *flags, "--y", yfile, "--format", fmt, "--out", out]) == 0
        ref = run_path(yy, spec) if X is None else run_path_general_x(yy, X, spec)
        for lam in np.linspace(ref.lambda_min, 1.1 * ref.knots[0].lam, 7):
            capsys.readouterr()
            assert main(["coef", "--path", out, "--lambda", repr(float(lam))]) == 0
            np.testing.assert_allclose(read_beta(capsys.readouterr().out), ref.primal_at(lam), rtol=0, atol=1e-12)


def test_deterministic_output(tmp_path):
    y = write_vector(tmp_path / "y.csv", np.random.default_rng(2).standard_normal(15))
    for fmt in ("csv", "json"):
        a, b = tmp_path / f"a{fmt}", tmp_path / f"b{fmt}"
        for out in (a, b):
            assert main(["path", "--problem", "tf", "--order", "1", "--y", y, "--format", fmt, "--out", str(out)]) == 0
        for f in a.iterdir():
            assert f.read_bytes() == (b / f.name).read_bytes()


def test_json_mirrors_csv(tmp_path, worked):
    main(["path", "--problem", "fl1d", "--y", worked, "--format", "json", "--out", str(tmp_path / "j")])
    obj = json.loads((tmp_path / "j" / "knots.json").read_text())
    assert obj["format_version"] == fileio.FORMAT_VERSION
    assert obj["columns"] == fileio.KNOT_COLUMNS
    assert [r["coordinate"] for r in obj["rows"]] == [2, 1]
    seg = json.loads((tmp_path / "j" / "segments.json").read_text())
    assert seg["columns"] == fileio.SEGMENT_COLUMNS and seg["rows"][0]["lambda_hi"] is None


def test_input_errors(tmp_path, worked, capsys):
    out = str(tmp_path / "o")
    bad = tmp_path / "bad.csv"
    bad.write_text("y\n1\nabc\n")
    assert main(["path", "--problem", "fl1d", "--y", str(bad), "--out", out]) == 2
    assert "bad.csv:3" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        main(["path", "--problem", "fl1d", "--order", "1", "--y", worked, "--out", out])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["path", "--problem", "tf", "--y", worked, "--out", out])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["path", "--problem", "fl1d", "--y", worked, "--out", out, "--bogus", "1"])
    assert exc.value.code == 2
    edges = write_rows(tmp_path / "e.csv", "i,j", [[1, 4]])
    assert main(["path", "--problem", "flgraph", "--edges", edges, "--y", worked, "--out", out]) == 2
    assert "outside 1..3" in capsys.readouterr().err
    X = write_rows(tmp_path / "X.csv", "a,b", [[1, 1], [1, 1], [1, 1]])
    assert main(["path", "--problem", "fl1d", "--X", X, "--y", worked, "--out", out]) == 2
    assert main(["coef", "--path", str(tmp_path / "missing"), "--lambda", "1"]) == 2


def test_out_of_range(tmp_path, capsys):
    y = write_vector(tmp_path / "y.csv", np.random.default_rng(3).standard_normal(10))
    out = str(tmp_path / "o")
    assert main(["path", "--problem", "fl1d", "--y", y, "--max-steps", "3", "--out", out]) == 0
    capsys.readouterr()
    assert main(["coef", "--path", out, "--lambda", "0"]) == 4
    assert "computed range" in capsys.readouterr().err
    assert main(["coef", "--path", out, "--df", "9"]) == 4
    assert "available: 1,2,3\n" in capsys.readouterr().err


def test_numerical_abort(tmp_path, monkeypatch, capsys):
    solve = TrendFilterBackend.solve
    calls = {"n": 0}

    def flaky(self, c):
        calls["n"] += 1
        if calls["n"] > 5:
            raise NumericalFailure("injected")
        return solve(self, c)

    monkeypatch.setattr(TrendFilterBackend, "solve", flaky)
    y = write_vector(tmp_path / "y.csv", np.random.default_rng(4).standard_normal(12))
    out = tmp_path / "o"
    assert main(["path", "--problem", "tf", "--order", "1", "--y", y, "--out", str(out)]) == 3
    err = capsys.readouterr().err
    assert "at step 4" in err and "injected" in err
    assert len((out / "knots.csv").read_text().splitlines()) == 2 + 3
    assert json.loads((out / "problem.json").read_text())["termination"] == "aborted"


def test_bench_small(tmp_path, capsys):
    rows, slope = run_bench("fl1d", [200, 400], steps=20)
    assert [r[2] for r in rows] == [20, 20] and np.isfinite(slope)
    out = tmp_path / "b.csv"
    assert main(["bench", "--problem", "fl2d-grid", "--sizes", "100,400", "--steps", "10", "--out", str(out)]) == 0
    text = out.read_text().splitlines()
    assert text[0] == "n,seconds,steps" and text[-1].startswith("# loglog_slope=")
    assert [l.split(",")[0] for l in text[1:3]] == ["100", "400"]
