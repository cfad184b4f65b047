"""CLI: expression parsing, config handling, pipelines, determinism."""

import json
import subprocess
import sys

import pytest

from starq.cli import (
    ParseError, RunConfig, ValidationError, emit, load_config_file, main,
    parse_observable, run,
)
from starq.cp1 import UnboundedSymbol


def invoke(argv):
    """Run the CLI in-process, capturing stdout bytes and the exit code."""
    import io
    import contextlib

    class _Buf(io.BytesIO):
        pass

    buf = _Buf()

    class _Stdout:
        buffer = buf

        @staticmethod
        def write(s):
            buf.write(s.encode())

        @staticmethod
        def flush():
            pass

    old = sys.stdout
    sys.stdout = _Stdout()
    try:
        code = main(argv)
    finally:
        sys.stdout = old
    return code, buf.getvalue()


# ---------------------------------------------------------------------------
# expression parsing

def test_parse_constant_and_sugar():
    assert parse_observable("1").terms == ((1 + 0j, 0, 0, 0),)
    f = parse_observable("(1 - zz) / (1+zz)")
    assert set((c, a, b, k) for c, a, b, k in f.terms) == {
        (1 + 0j, 0, 0, 1), (-1 + 0j, 1, 1, 1)}


def test_parse_general_terms():
    f = parse_observable("0.5 * z^2 zbar^2 / (1+zz)^2 + 3 / (1+zz)")
    assert ((0.5 + 0j), 2, 2, 2) in f.terms
    assert ((3 + 0j), 0, 0, 1) in f.terms


def test_parse_errors():
    with pytest.raises(UnboundedSymbol):
        parse_observable("z^3 / (1+zz)")
    with pytest.raises(ParseError) as exc:
        parse_observable("z + @")
    assert exc.value.pos == 4
    with pytest.raises(ParseError):
        parse_observable("z / (1 - zz)")  # only (1+zz)^k denominators
    with pytest.raises(ParseError):
        parse_observable("(1 + zz")


# ---------------------------------------------------------------------------
# config handling

def test_config_file_roundtrip(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("[run]\nm = 4\nexpr = (1 - zz) / (1+zz)\nseed = 7\n")
    values = load_config_file(str(path))
    assert values == {"m": 4, "expr": "(1 - zz) / (1+zz)", "seed": 7}


def test_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("[run]\nnot_a_key = 1\n")
    with pytest.raises(ValidationError):
        load_config_file(str(path))


def test_runconfig_validation():
    with pytest.raises(ValidationError):
        RunConfig(command="nope").validate()
    with pytest.raises(ValidationError):
        RunConfig(command="weights", jobs=0).validate()
    with pytest.raises(ValidationError):
        RunConfig(command="weights", format="xml").validate()


# ---------------------------------------------------------------------------
# pipelines

def test_star_karabegov_pipeline():
    report = run(RunConfig(command="star-karabegov", potential="flat",
                           order=2))
    blob = report.results
    assert blob["order"] == 2
    assert blob["convention"] == "karabegov_anti_wick"
    c1 = [c for c in blob["coefficients"] if c["k"] == 1][0]
    assert any(t["f_dzbar"] == [1] and t["g_dz"] == [1]
               for t in c1["terms"])


def test_weights_pipeline():
    report = run(RunConfig(command="weights", n=1))
    vals = [row["value"] for row in report.results["weights"]]
    assert len(vals) == 2
    assert all(abs(v - 0.5) < 1e-3 for v in vals)


def test_graphs_enumerate_pipeline():
    report = run(RunConfig(command="graphs-enumerate", n=2))
    assert report.results["count"] == 36
    report = run(RunConfig(command="graphs-enumerate", family="weighted",
                           wmax=2))
    assert report.results["count"] == 7


def test_cp1_suite_pipeline():
    report = run(RunConfig(command="cp1-suite", suite="bms",
                           m_list=(8, 16, 32)))
    series = {s["name"]: s for s in report.results["series"]}
    assert abs(series["norm_gap"]["fit"]["slope"] + 1) < 0.1
    csv = emit(report, "csv").decode()
    assert csv.splitlines()[0] == \
        "series,m,value,fit_limit,fit_slope,fit_residual"
    assert len(csv.splitlines()) == 10


def test_exit_codes_and_stderr(capsys):
    code, _ = invoke(["cp1-berezin", "--expr", "z^5"])
    assert code == 2
    err = capsys.readouterr().err.strip().splitlines()[-1]
    assert json.loads(err)["error"] == "UnboundedSymbol"
    code, _ = invoke(["weights", "--n", "1", "--grid-nodes", "40",
                      "--tol", "1e-9"])
    assert code == 3


def test_determinism_across_runs_and_jobs():
    argv = ["cp1-suite", "--suite", "bms", "--m-list", "8,16"]
    code1, out1 = invoke(argv + ["--jobs", "1"])
    code2, out2 = invoke(argv + ["--jobs", "8"])
    assert code1 == code2 == 0
    assert out1 == out2
    code3, out3 = invoke(argv + ["--jobs", "1"])
    assert out3 == out1


def test_weights_determinism_mc():
    argv = ["weights", "--n", "1", "--method", "mc", "--tol", "0.05",
            "--format", "csv"]
    code1, out1 = invoke(argv)
    code2, out2 = invoke(argv)
    assert code1 == code2 == 0
    assert out1 == out2


def test_out_file_and_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("OUTPUT_DIR", str(tmp_path))
    code, out = invoke(["cp1-toeplitz", "--m", "2", "--expr", "1",
                        "--out", "toeplitz.json"])
    assert code == 0 and out == b""
    blob = json.loads((tmp_path / "toeplitz.json").read_bytes())
    assert blob["results"]["m"] == 2
    entries = blob["results"]["entries"]
    assert entries[0] == [1.0, 0.0] and len(entries) == 9


def test_berezin_pipeline_csv():
    code, out = invoke(["cp1-berezin", "--expr", "(1 - zz) / (1+zz)",
                        "--m-list", "8,16", "--format", "csv"])
    assert code == 0
    lines = out.decode().splitlines()
    assert lines[0] == "m,value"
    m, v = lines[1].split(",")
    assert m == "8" and abs(float(v) - 8 / 10) < 1e-10
