import csv
import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dirtrace.cli import RunConfig, parse_config, parse_theta, parse_thetas, run
from dirtrace.gallery import truncated_mass

finite = st.floats(-1e6, 1e6, allow_nan=False).filter(lambda c: abs(c) > 1e-6)
vec2 = st.tuples(finite, finite)
opt_float = st.none() | st.floats(1e-12, 1.0)


@st.composite
def configs(draw):
    command = draw(st.sampled_from(["gallery", "measure", "trace", "verify"]))
    if command == "gallery":
        return RunConfig("gallery", name=draw(st.sampled_from(["cantor", "square", "cusp", "serpent"])),
                         depth=draw(st.none() | st.integers(1, 20)), emit=draw(st.none() | st.just("g.json")))
    kw = dict(
        domain=draw(st.sampled_from(["square", "l_shape", "spec.json"])),
        fields=tuple(draw(st.lists(st.sampled_from(["x1", "sin(pi*x1)", "@u", "x1*x2 + 1"]), max_size=3))),
        thetas=tuple(draw(st.lists(vec2, min_size=1, max_size=4))),
        mode=draw(st.sampled_from(["auto", "exact", "mc"])),
        samples=draw(st.integers(1, 10**7)),
        seed=draw(st.integers(0, 2**63 - 1)),
        workers=draw(st.integers(1, 8)),
    )
    if command == "verify":
        kw.update(suite=draw(st.sampled_from(["green", "bounds", "consistency", "lemma"])), tol=draw(opt_float),
                  sum_constant=draw(st.sampled_from([4.0, 8.0])), report=draw(st.none() | st.just("r.json")))
    elif command == "trace":
        kw.update(points=draw(st.none() | st.just("0.5,0.5;0.25,0.75")))
    else:
        kw.update(out=draw(st.none() | st.just("m.csv")))
    return RunConfig(command, **kw)


@settings(max_examples=200)
@given(cfg=configs())
def test_config_round_trip(cfg):
    back = parse_config(cfg.to_argv())
    assert back == cfg
    assert parse_config(back.to_argv()) == back


# ------------------------------------------------------------ theta grammar


def test_theta_grammar():
    assert np.allclose(parse_theta("90deg"), (0, 1), atol=1e-15)
    assert parse_theta("+1") == (1.0,)
    assert parse_theta("-1") == (-1.0,)
    assert parse_theta("0.6,0.8") == (0.6, 0.8)
    assert np.allclose(parse_thetas("0,90deg"), [(1, 0), (0, 1)], atol=1e-15)
    assert parse_thetas("1,0;0,1") == ((1.0, 0.0), (0.0, 1.0))


@pytest.mark.parametrize("bad", ["0,0", "0", "nan,1", "1,inf", "x", "abcdeg"])
def test_bad_theta_is_a_usage_error(bad, capsys):
    assert run(["measure", "--domain", "square", "--theta", bad]) == 2


# --------------------------------------------------------------- commands


def read_csv(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_cantor_emit_then_measure(tmp_path):
    spec = tmp_path / "c.json"
    out = tmp_path / "m.csv"
    assert run(["gallery", "cantor", "--rho", "0.25", "--depth", "10", "--emit", str(spec)]) == 0
    assert json.loads(spec.read_text())["gallery"]["params"] == {"rho": 0.25, "depth": 10}
    code = run(["measure", "--domain", str(spec), "--theta", "+1", "--mode", "exact", "--out", str(out)])
    assert code == 0
    rows = read_csv(out.read_text())
    assert len(rows) == 2**11 - 1
    total = math.fsum(float(r["weight"]) for r in rows)
    assert total == pytest.approx(truncated_mass(0.25, 10), abs=1e-12)
    assert total == pytest.approx(0.5 - 0.25 * 0.5**11 / 0.5, abs=1e-12)


def test_verify_bounds_on_square(tmp_path, capsys):
    rep = tmp_path / "report.json"
    code = run(["verify", "--suite", "bounds", "--domain", "square", "--field", "sin(pi*x1)",
                "--thetas", "0deg", "--report", str(rep)])
    assert code == 0
    doc = json.loads(rep.read_text())
    assert doc["passed"]
    assert {r["check_name"] for r in doc["reports"]} >= {"trace_bound", "sum_bound", "diff_bound"}
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == len(doc["reports"])


def test_failed_check_exits_one(tmp_path, capsys):
    # the sum bound with constant 4 fails on ]0, 1/2[^2 for a slightly convex field
    spec = tmp_path / "half.json"
    spec.write_text(json.dumps({"kind": "rectilinear", "boxes": [[[0, 0], [0.5, 0.5]]]}))
    argv = ["verify", "--suite", "bounds", "--domain", str(spec), "--field", "1 + (x1 - 1/4)^2/10", "--theta", "1,0"]
    assert run(argv + ["--sum-constant", "4"]) == 1
    assert "FAIL sum_bound" in capsys.readouterr().out
    assert run(argv + ["--sum-constant", "8"]) == 0
    assert run(["verify", "--suite", "lemma", "--domain", "square", "--sum-constant", "4"]) == 1


def test_usage_errors_exit_two(capsys):
    assert run(["verify", "--domain", "square"]) == 2
    assert run(["trace", "--domain", "square", "--theta", "0deg"]) == 2
    assert run(["measure", "--domain", "square", "--theta", "1,0,0"]) == 2
    assert run(["trace", "--domain", "square", "--theta", "0deg", "--field", "foo(x1)"]) == 2
    assert run(["gallery", "cantor", "--alpha", "0.7"]) == 2


def test_io_errors_exit_three(tmp_path, capsys):
    assert run(["measure", "--domain", str(tmp_path / "missing.json"), "--theta", "0deg"]) == 3
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(["measure", "--domain", str(bad), "--theta", "0deg"]) == 3
    out = tmp_path / "no_such_dir" / "m.csv"
    assert run(["measure", "--domain", "square", "--theta", "0deg", "--out", str(out)]) == 3


def test_outputs_are_byte_identical(tmp_path):
    argv = [["measure", "--domain", "l_shape", "--theta", "30deg", "--mode", "mc", "--samples", "5000",
             "--seed", "7", "--out"],
            ["trace", "--domain", "l_shape", "--theta", "30deg", "--field", "x1*x2", "--mode", "mc",
             "--samples", "3000", "--seed", "7", "--out"],
            ["verify", "--suite", "green", "--domain", "l_shape", "--field", "x1^2", "--field", "x2",
             "--thetas", "0,45,90deg", "--workers", "3", "--report"]]
    for i, a in enumerate(argv):
        # same output path both times, since the report echoes its config
        p = tmp_path / f"out{i}"
        assert run(a + [str(p)]) == 0
        first = p.read_bytes()
        assert run(a + [str(p)]) == 0
        assert p.read_bytes() == first


def test_trace_at_points(capsys):
    assert run(["trace", "--domain", "square", "--theta", "0deg", "--field", "x1*x2", "--points", "0.3,0.5"]) == 0
    (row,) = read_csv(capsys.readouterr().out)
    assert float(row["z1"]) == 1.0 and float(row["trace"]) == pytest.approx(0.5)
    assert float(row["partner_trace"]) == pytest.approx(0.0, abs=1e-12)


def test_gallery_field_reference(capsys):
    code = run(["verify", "--suite", "consistency", "--domain", "two_intervals", "--field", "@u", "--thetas", "+1;-1"])
    assert code == 1
    assert run(["verify", "--suite", "green", "--domain", "square", "--field", "@nope", "--theta", "0deg"]) == 2


def test_help_documents_the_grammar(capsys):
    assert run(["--help"]) == 0
    assert "deg" in capsys.readouterr().out
