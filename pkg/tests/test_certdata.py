from __future__ import annotations

import copy
import time

import pytest

from tconfig import certdata


def test_names_and_shapes():
    assert set(certdata.NAMES) == {"t5-sz04", "t14-2d", "t14-3d"}
    ds = certdata.load("t14-2d")
    assert (ds.M, ds.n, ds.N, ds.kappa) == (2, 2, 14, 2)
    assert len(ds.tables["DET"]) == 14 and all(len(r) == 14 for r in ds.tables["DET"])
    with pytest.raises(ValueError, match="unknown dataset"):
        certdata.load("t3")
    with pytest.raises(ValueError):
        certdata.config("t14-3d")


def test_printed_spot_values():
    assert certdata.A2_DET[0][2] == -7
    assert certdata.A2_INEQ[0][1] == -14094
    assert certdata.A2_X[0] == [[2, 0], [2, 0]]


def test_verify_2d_passes_fast():
    t0 = time.perf_counter()
    rep = certdata.verify("t14-2d")
    assert time.perf_counter() - t0 < 2.0
    assert rep.passed, rep.first_failure()
    assert {c.name for c in rep.checks} >= {"X_i", "det(X_i − X_j)", "Y_i", "inequality matrix"}


def test_verify_t5_passes():
    rep = certdata.verify("t5-sz04")
    assert rep.passed, rep.first_failure()


@pytest.mark.parametrize("table,index,name", [
    ("A2_X", (4, 1, 0), "X_i"),
    ("A2_DET", (6, 9), "det(X_i − X_j)"),
    ("A2_INEQ", (0, 1), "inequality matrix"),
])
def test_single_entry_mutation_is_located(monkeypatch, table, index, name):
    data = copy.deepcopy(getattr(certdata, table))
    ref = data
    for k in index[:-1]:
        ref = ref[k]
    ref[index[-1]] += 1
    monkeypatch.setattr(certdata, table, data)
    rep = certdata.verify("t14-2d")
    bad = rep.first_failure()
    assert not rep.passed and bad.name == name
    assert str(tuple(i + 1 for i in index)) in bad.detail


def test_verify_3d_reports_assumptions():
    rep = certdata.verify("t14-3d")
    js = rep.to_json()
    assert js["assumptions"]["kappa"] == 2
    assert js["detected_convention"]["minor"] in ("delsign", "del", "keep", "keepT")
    # the structural tables are consistent even though the value check is not
    assert all(c.passed for c in rep.checks[:4])
    assert js["n_negative"] == 163 and not rep.passed


def test_rebuild_3d_first_endpoint():
    X, Y = certdata.rebuild_3d()
    assert len(X) == 14 and X[0].shape == (3, 3)
    t = certdata.load("t14-3d").tables
    assert (X[0] == 2 * certdata._ex(t["A"][0])).all()
    assert (Y[1] == certdata._ex(t["B"][0]) + 2 * certdata._ex(t["B"][1])).all()
