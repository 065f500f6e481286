import csv
import json
import re
import subprocess
import sys

import jsonschema
import numpy as np
import pytest
from numpy.testing import assert_allclose

from rbcsmooth.cli import COMMANDS, CliError, build_parser, ingest_csv, main
from rbcsmooth.inference import POINTFIT_JSON_SCHEMA, read_csv_results
from rbcsmooth.lpcore import Sample
from rbcsmooth.montecarlo import dgp_draw


def _write(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return str(path)


@pytest.fixture
def data_csv(tmp_path):
    s = dgp_draw(300, np.random.default_rng(4))
    rows = [(repr(float(a)), repr(float(b)), i % 30) for i, (a, b) in enumerate(zip(s.x, s.y))]
    return _write(tmp_path / "d.csv", ["x", "y", "g"], rows)


def test_ingest_drops_blank_rows(tmp_path):
    path = _write(tmp_path / "t.csv", ["x", "y"], [(0.1, 1.0), (0.2, ""), (0.3, 2.0)])
    notes = []
    s = ingest_csv(path, "x", "y", notices=notes)
    assert s.n == 2 and notes == ["1 row dropped (missing or non-finite values)"]


def test_ingest_missing_column_lists_headers(tmp_path):
    path = _write(tmp_path / "t.csv", ["a", "b"], [(1, 2), (3, 4)])
    with pytest.raises(CliError, match="available: a, b") as info:
        ingest_csv(path, "a", "y")
    assert info.value.flag == "--y"


def test_ingest_round_trip(tmp_path):
    s = dgp_draw(50, np.random.default_rng(1))
    path = _write(tmp_path / "r.csv", ["x", "y"],
                  [(repr(float(a)), repr(float(b))) for a, b in zip(s.x, s.y)])
    back = ingest_csv(path, "x", "y")
    assert np.array_equal(back.x, s.x) and np.array_equal(back.y, s.y)


def test_ingest_clusters_as_strings(tmp_path):
    path = _write(tmp_path / "c.csv", ["x", "y", "g"], [(0.1, 1, 7), (0.2, 2, 7), (0.3, 3, 8)])
    s = ingest_csv(path, "x", "y", "g")
    assert list(s.cluster) == ["7", "7", "8"]


def test_ingest_empty(tmp_path):
    path = _write(tmp_path / "e.csv", ["x", "y"], [("", 1), ("nan", 2)])
    with pytest.raises(CliError, match="no usable rows"):
        ingest_csv(path, "x", "y")


def test_lprobust_default_table(data_csv, capsys):
    assert main(["lprobust", "--data", data_csv, "--x", "x", "--y", "y"]) == 0
    out = capsys.readouterr().out.strip().splitlines()
    body = [ln for ln in out if re.match(r"^\s*-?\d", ln)]
    assert len(body) == 30


def test_ce_dpi_even_p_message(data_csv, capsys):
    code = main(["lpbwselect", "--data", data_csv, "--x", "x", "--y", "y",
                 "--bwselect", "ce-dpi", "--p", "2"])
    err = capsys.readouterr().err.strip()
    assert code != 0
    assert "ce-dpi requires odd p" in err
    assert err.count("\n") == 0
    assert err.startswith("error subcommand=lpbwselect flag=--bwselect")


def test_kdrobust_outside_range_flags_rows(data_csv, capsys):
    assert main(["kdrobust", "--data", data_csv, "--x", "x", "--eval", "5,6,7"]) == 0
    rows = [ln for ln in capsys.readouterr().out.splitlines() if ln.strip()[:1].isdigit()]
    assert len(rows) == 3 and all("boundary" in ln for ln in rows)


def test_explicit_h_wins(data_csv, capsys):
    assert main(["lprobust", "--data", data_csv, "--x", "x", "--y", "y", "--h", "0.2",
                 "--bwselect", "mse-dpi", "--eval", "0.5"]) == 0
    captured = capsys.readouterr()
    assert "notice: --h given; ignoring --bwselect mse-dpi" in captured.err
    assert "0.2 " in captured.out


def test_outputs_are_machine_readable_and_deterministic(data_csv, tmp_path, capsys):
    args = ["lprobust", "--data", data_csv, "--x", "x", "--y", "y", "--neval", "8"]
    j1, j2, c1 = (tmp_path / n for n in ("a.json", "b.json", "c.csv"))
    assert main(args + ["--out", str(j1)]) == 0
    assert main(args + ["--out", str(j2)]) == 0
    assert main(args + ["--out", str(c1)]) == 0
    assert j1.read_bytes() == j2.read_bytes()
    doc = json.loads(j1.read_text())
    jsonschema.validate(doc, POINTFIT_JSON_SCHEMA)
    back = read_csv_results(c1.read_text())
    for row, d in zip(back, doc["rows"]):
        assert_allclose(row.est_bc, d["est_bc"], rtol=1e-12)
    capsys.readouterr()
    assert main(args + ["--format", "csv"]) == 0
    assert capsys.readouterr().out == c1.read_text()


@pytest.mark.parametrize("cmd,extra", [
    ("lpbwselect", ["--y", "y", "--bwselect", "mse-rot", "--eval", "0.2,0.8"]),
    ("kdbwselect", ["--bwselect", "rot"]),
    ("kdbwselect", ["--bwselect", "mse-dpi", "--neval", "3"]),
])
def test_bandwidth_commands(data_csv, capsys, cmd, extra):
    assert main([cmd, "--data", data_csv, "--x", "x"] + extra + ["--format", "json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert all(r["h"] > 0 for r in doc["rows"])


def test_cluster_flags(data_csv, capsys):
    assert main(["lprobust", "--data", data_csv, "--x", "x", "--y", "y", "--vce", "cluster",
                 "--cluster-col", "g", "--eval", "0.5"]) == 0
    code = main(["lprobust", "--data", data_csv, "--x", "x", "--y", "y", "--vce", "cluster"])
    assert code != 0 and "flag=--cluster-col" in capsys.readouterr().err


@pytest.mark.parametrize("argv,flag", [
    (["--p", "1", "--deriv", "3"], "--deriv"),
    (["--level", "2"], "--level"),
    (["--rho", "0"], "--rho"),
    (["--h", "-1"], "--h"),
    (["--bwcheck", "1"], "--bwcheck"),
    (["--eval", "a,b"], "--eval"),
])
def test_validation_names_the_flag(data_csv, capsys, argv, flag):
    code = main(["lprobust", "--data", data_csv, "--x", "x", "--y", "y"] + argv)
    err = capsys.readouterr().err
    assert code == 2 and f"flag={flag} " in err and err.count("\n") == 1


def test_usage_errors_are_one_line(capsys):
    assert main(["lprobust", "--kernel", "gauss"]) == 2
    err = capsys.readouterr().err
    assert err.startswith("error subcommand=lprobust") and err.count("\n") == 1
    assert main(["frobnicate"]) == 2


def test_missing_file(capsys):
    assert main(["kdrobust", "--data", "/nonexistent.csv", "--x", "x"]) == 2
    assert "flag=--data" in capsys.readouterr().err


def test_help_documents_every_flag():
    parser = build_parser()
    sub = next(a for a in parser._actions if a.__class__.__name__ == "_SubParsersAction")
    assert set(sub.choices) == set(COMMANDS)
    for name, sp in sub.choices.items():
        accepted = {o for a in sp._actions for o in a.option_strings if o.startswith("--")}
        documented = set(re.findall(r"(?<![\w-])--[a-z][a-z-]*", sp.format_help()))
        assert accepted == documented, name


def test_simulate_deterministic_across_threads(tmp_path, monkeypatch, capsys):
    args = ["simulate", "--n", "150", "--reps", "4", "--seed", "9", "--bw", "mse-rot"]
    outs = []
    for threads in ("1", "2"):
        monkeypatch.setenv("NPROBUST_THREADS", threads)
        path = tmp_path / f"sim{threads}.json"
        assert main(args + ["--out", str(path)]) == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]
    assert main(["simulate", "--bw", "ce-dpi", "--p", "2"]) == 2
    assert "ce-dpi requires odd p" in capsys.readouterr().err


def test_module_entry_point(data_csv):
    proc = subprocess.run([sys.executable, "-m", "rbcsmooth", "kdbwselect", "--data", data_csv,
                           "--x", "x", "--bwselect", "rot"], capture_output=True, text=True)
    assert proc.returncode == 0 and "eval" in proc.stdout
