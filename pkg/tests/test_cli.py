from __future__ import annotations

import csv
import io
import json

import pytest

from tconfig.cli import EXIT_INVALID, EXIT_MISMATCH, EXIT_OK, UsageError, apply_thread_cap, run, to_csv


def call(*argv: str) -> tuple[int, str, str]:
    out, err = io.StringIO(), io.StringIO()
    code = run(list(argv), out, err)
    return code, out.getvalue(), err.getvalue()


def call_json(*argv: str) -> tuple[int, dict]:
    code, out, _ = call(*argv)
    return code, json.loads(out)


def test_verify_cert_2d_passes():
    code, rep = call_json("verify-cert", "--dataset", "t14-2d")
    assert code == EXIT_OK and rep["passed"]


def test_verify_cert_3d_is_a_mismatch():
    code, rep = call_json("verify-cert", "--dataset", "t14-3d")
    assert code == EXIT_MISMATCH and not rep["passed"]
    assert rep["n_negative"] == 163


@pytest.mark.parametrize("argv", [
    ("verify-cert", "--dataset", "nope"),
    ("verify-cert", "--dataset", "t14-2d", "--tol", "1e-9"),
    ("verify-tn", "/no/such/file.json"),
    ("lift", "--dataset", "t5-sz04", "--M", "1"),
    ("frobnicate",),
    ("wiggle", "--grid", "4"),
])
def test_invalid_input_exit_code(argv):
    code, _, err = call(*argv)
    assert code == EXIT_INVALID
    assert err


def test_non_artifact_json_rejected(tmp_path):
    f = tmp_path / "x.json"
    f.write_text(json.dumps({"v": 2}))
    assert call("verify-tn", str(f))[0] == EXIT_INVALID
    f.write_text("{not json")
    assert call("verify-tn", str(f))[0] == EXIT_INVALID


def test_lift_verify_extend_flow(tmp_path):
    lifted = tmp_path / "t5_23.json"
    code, rep = call_json("lift", "--dataset", "t5-sz04", "--M", "2", "--n", "3",
                          "--out", str(lifted))
    assert code == EXIT_OK and lifted.exists()
    # the lifted steps only span the first two coordinates
    code, rep = call_json("verify-tn", str(lifted))
    assert code == EXIT_MISMATCH
    failed = [c["name"] for c in rep["nondegenerate"]["conditions"] if not c["passed"]]
    assert failed == ["span"]
    t7 = tmp_path / "t7.json"
    code, rep = call_json("extend", str(lifted), "--target-n", "7", "--out", str(t7))
    assert code == EXIT_OK and rep["passed"]
    code, rep = call_json("verify-tn", str(t7))
    assert code == EXIT_OK and rep["passed"]


def test_build_f_and_laminate():
    code, rep = call_json("build-F", "--dataset", "t14-2d")
    assert code == EXIT_OK and rep["passed"]
    code, rep = call_json("laminate", "--dataset", "t14-2d", "--steps", "28")
    assert code == EXIT_OK and rep["passed"]


def test_csv_output_has_key_value_rows():
    code, out, _ = call("verify-cert", "--dataset", "t5-sz04", "--format", "csv")
    assert code == EXIT_OK
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["key", "value"]
    assert ["passed", "True"] in rows or ["passed", "true"] in rows


def test_to_csv_flattens_nested():
    text = to_csv({"a": {"b": [1, 2]}, "c": "x"})
    assert text.splitlines() == ["key,value", 'a.b,"[1, 2]"', "c,x"]


def test_json_out_roundtrip(tmp_path):
    out = tmp_path / "r.json"
    code, rep = call_json("verify-cert", "--dataset", "t14-2d", "--out", str(out))
    assert json.loads(out.read_text()) == rep


def test_wiggle_points_csv(tmp_path):
    pts = tmp_path / "pts.csv"
    code, rep = call_json("wiggle", "--grid", "32", "--points-csv", str(pts))
    assert code in (EXIT_OK, EXIT_MISMATCH)
    assert rep["stats"]["boundary_exact"]
    rows = list(csv.reader(pts.open()))
    assert rows[0] == ["x1", "x2", "target", "distance"]
    assert {r[2] for r in rows[1:]} <= {"0", "1"}


def test_condition_c_float_mode():
    code, rep = call_json("condition-c", "--dataset", "t5-sz04")
    assert code == EXIT_OK and rep["passed"]


def test_thread_cap():
    env = {"TCONFIG_THREADS": "2"}
    assert apply_thread_cap(env) == 2
    assert env["OMP_NUM_THREADS"] == "2" and env["OPENBLAS_NUM_THREADS"] == "2"
    assert apply_thread_cap({}) is None
    for bad in ("0", "two"):
        with pytest.raises(UsageError):
            apply_thread_cap({"TCONFIG_THREADS": bad})


def test_bad_thread_cap_is_invalid_input(monkeypatch):
    monkeypatch.setenv("TCONFIG_THREADS", "-1")
    assert call("verify-cert", "--dataset", "t5-sz04")[0] == EXIT_INVALID
