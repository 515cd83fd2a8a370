from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tconfig import certdata, core
from tconfig.polyfactory import (TOPLEFT, PolyCert, PolyF, app2d_from_hat, auto_epsilon,
                                 build_F, build_G, check_extension_conditions, check_ineq_system,
                                 check_KF, check_LH, choose_direction, detect_app3d, exact_sqrt,
                                 extend, hat_from_app2d, kappa_lambda, lift, lift_cert,
                                 max_epsilon, minor_indices, minors, minors_grad, minors_length,
                                 rank_one_split, split_kappas)
from tconfig.rconn import RParam, assemble
from tconfig.tnconfig import check_nondegenerate, check_wild, endpoints

F = Fraction


@pytest.fixture(scope="module")
def t14():
    return certdata.cert("t14-2d")


@pytest.fixture(scope="module")
def t5():
    return certdata.cert("t5-sz04")


# --- minors -------------------------------------------------------------------


def test_minors_length():
    assert minors_length(2, 2) == 5
    assert minors_length(3, 3) == 19
    assert minors_length(2, 3) == 6 + 3
    assert len(minor_indices(3, 3)) == 19


def test_minors_of_2x2():
    X = core.array([[1, 2], [3, 4]], core.Mode.EXACT)
    assert list(minors(X).values) == [1, 2, 3, 4, -2]
    assert minors(X)[(2, (0, 1), (0, 1))] == -2


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(-9, 9), min_size=9, max_size=9))
def test_minors_grad_by_unit_differences(entries):
    # every minor is affine in each single entry, so a unit difference is the
    # partial derivative exactly
    X = core.array(np.array(entries).reshape(3, 3).tolist(), core.Mode.EXACT)
    for k, I, A in minor_indices(3, 3, 2):
        g = minors_grad(X, k, I, A)
        base = minors(X)[(k, I, A)]
        for a in range(3):
            for b in range(3):
                E = X.copy()
                E[a, b] += 1
                assert g[a, b] == minors(E)[(k, I, A)] - base


# --- inequality systems -----------------------------------------------------


def test_spot_value(t14):
    Z = endpoints(t14.config)
    X = [z.X for z in Z]
    Yapp = [app2d_from_hat(z.Y) for z in Z]
    res = check_ineq_system(X, Yapp, t14.c, [di[TOPLEFT] for di in t14.d], "app2d")
    assert res.values[0][1] == -14094
    assert res.values == certdata.A2_INEQ
    assert res.passed and res.margin > 0


def test_general_form_matches(t14):
    res = t14.check()
    assert res.passed
    assert res.values[0][1] == -14094


def test_hat_conversion_roundtrip():
    Y = core.array([[1, 2], [3, 5]], core.Mode.EXACT)
    assert (app2d_from_hat(hat_from_app2d(Y)) == Y).all()


def test_mutated_constant_fails(t14):
    c = list(t14.c)
    c[0] += 10**9
    res = PolyCert(t14.config, c, t14.d).check()
    assert not res.passed
    assert all(i == 1 or j == 1 for i, j, _ in res.failing())
    with pytest.raises(ValueError):
        check_ineq_system([np.eye(2)], [np.eye(2)] * 2, [0], [{}])


def test_detect_app3d_reports_every_convention():
    t = certdata.load("t14-3d").tables
    X, Y = certdata.rebuild_3d()
    c = [F(x) for x in t["c"]]
    d = [[F(x) for x in row] for row in t["d"]]
    m = [F(x) for x in t["m"]]
    best, rows = detect_app3d(X, Y, c, d, m)
    assert len(rows) == 16
    assert best.n_negative == max(r["n_negative"] for r in rows)


# --- the energy ---------------------------------------------------------------


@pytest.fixture(scope="module")
def kf(t14):
    Z = endpoints(t14.config)
    F_ = build_F([z.X for z in Z], [z.Y for z in Z], t14.c, t14.d)
    return Z, F_


def test_build_F_and_check_KF_exact(kf):
    Z, F_ = kf
    rep = check_KF(Z, F_, tol=0)
    assert rep.passed and all(r == 0 for r in rep.residuals)
    for j, z in enumerate(Z):
        assert F_.active(z.X) == [j]


def test_auto_epsilon_inside_bound(t14):
    Z = endpoints(t14.config)
    X = [z.X for z in Z]
    res = t14.check()
    eps, bound = auto_epsilon(X, res), max_epsilon(X, res)
    assert 0 < eps < bound / 2 + 1e-30 or eps == bound / 2
    assert math.log2(eps).is_integer()
    with pytest.raises(ValueError):
        build_F(X, [z.Y for z in Z], t14.c, t14.d, epsilon=2 * bound)


def test_polyF_json_roundtrip(kf):
    Z, F_ = kf
    G = PolyF.from_json(F_.to_json())
    assert G.F(Z[3].X) == F_.F(Z[3].X)
    assert (G.DF(Z[3].X) == F_.DF(Z[3].X)).all()


def test_build_G_rejects_non_strict():
    anchors = [np.array([0.0]), np.array([1.0])]
    with pytest.raises(ValueError):
        build_G(anchors, [0.0, 0.0], [np.array([0.0]), np.array([0.0])])


def test_LH_estimates():
    assert check_LH(np.eye(4), 2, 2).estimate == pytest.approx(1.0)
    est = check_LH(-np.eye(6), 2, 3, lam_target=0.5)
    assert est.estimate == pytest.approx(-1.0) and est.meets_target is False
    # ⟨H(ξ⊗η), ξ⊗η⟩ = ξ₁²η₁² has minimum 0
    H = np.zeros((4, 4))
    H[0, 0] = 1.0
    assert check_LH(H, 2, 2).estimate == pytest.approx(0.0, abs=1e-6)


# --- lifting ------------------------------------------------------------------


def test_lift_embeds_top_left(t5):
    big = lift(t5.config, 3, 4)
    for z2, z in zip(endpoints(t5.config), endpoints(big)):
        assert (z.X[:2, :2] == z2.X).all() and core.is_zero(z.X[2:, :]) and core.is_zero(z.X[:, 2:])
    with pytest.raises(ValueError, match="invalid source"):
        lift(big, 4, 4)
    with pytest.raises(ValueError):
        lift(t5.config, 1, 2)


def test_lift_cert_keeps_values(t5):
    base = t5.check()
    lifted = lift_cert(t5, 2, 3).check()
    assert lifted.values == base.values


# --- splitting ---------------------------------------------------------------


@settings(max_examples=50, deadline=None)
@given(st.floats(1.01, 50.0))
def test_kappa_lambda_balances(kappa):
    lam = kappa_lambda(kappa)
    assert 0 < lam < 1
    k1, k2 = split_kappas(kappa, lam)
    assert k1 == pytest.approx(k2, rel=1e-9)


def test_exact_sqrt():
    assert exact_sqrt(F(9, 16)) == F(3, 4)
    with pytest.raises(ValueError):
        exact_sqrt(F(2))


def _split_inputs():
    c = certdata.config("t5-sz04")
    d = choose_direction(c, 1, 2, exact=True)
    return c.steps[0], d


def test_rank_one_split_exact_decomposition():
    C, d = _split_inputs()
    au = core.array([F(1, 100), F(1, 50)], core.Mode.EXACT)
    for dl in (F(1, 4), F(1, 64)):
        r = rank_one_split(C, au, d.abar_v, d.bbar, None, F(2, 5), dl)
        assert r.diagnostics["decomposition_exact"]
        assert r.diagnostics["eta1"] == F(2, 5)


def test_rank_one_split_asymptotics():
    C, d = _split_inputs()
    Cf = RParam(core.to_float(C.b), core.to_float(C.u), core.to_float(C.v))
    au = np.array([0.01, 0.02])
    res = []
    for dl in (1e-2, 1e-4, 1e-6):
        r = rank_one_split(Cf, au, core.to_float(d.abar_v), core.to_float(d.bbar), None, 0.4, dl)
        diag = r.diagnostics
        assert abs(diag["eta1"] - 0.4) <= 10 * dl
        assert diag["decomposition_residual"] < 1e-10
        res.append(diag["lead_residual_1"])
    assert res[0] >= 3 * res[1] and res[1] >= 3 * res[2]


def test_rank_one_split_degenerate_inputs():
    C, d = _split_inputs()
    with pytest.raises(ValueError, match="p = 0"):
        rank_one_split(C, d.abar_u, d.abar_v, C.b, None, F(1, 2), F(1, 4))
    with pytest.raises(ValueError):
        rank_one_split(C, d.abar_u, d.abar_v, d.bbar, None, F(1), F(1, 4))


# --- extension ----------------------------------------------------------------


def test_choose_direction_rejects_orthogonal_b(t14):
    with pytest.raises(ValueError, match="orthogonal"):
        choose_direction(t14.config, 1, 2)


def test_extension_conditions_sign_conventions_agree(t5):
    d = choose_direction(t5.config, 1, 2)
    a = check_extension_conditions(t5, 1, 2, d, rhs_sign=1)
    b = check_extension_conditions(t5, 1, 2, d, rhs_sign=-1)
    assert a.passed and a.as_tuple() == b.as_tuple()


@pytest.fixture(scope="module")
def t7(t5):
    return extend(lift_cert(t5, 2, 3), 1, 2)


def test_extend_once(t7):
    cert, diag = t7.cert, t7.diagnostics
    assert cert.config.N == 7
    res = cert.check()
    assert res.passed and res.margin > 0
    nd = check_nondegenerate(cert.config)
    assert all(c.passed for c in nd.conditions if c.name != "span")
    # without ξ every b stays in the first two coordinates: the third column
    # never moves and span{b} misses e3
    assert [check_wild(cert.config, b) for b in (1, 2, 3)] == [True, True, False]
    assert not next(c for c in nd.conditions if c.name == "span").passed
    assert diag["split1"]["decomposition_exact"] and diag["split2"]["decomposition_exact"]
    # the spliced steps still sum to zero
    total = assemble(cert.config.steps[0])
    for s in cert.config.steps[1:]:
        total = total + assemble(s)
    assert core.is_zero(total.X) and core.is_zero(total.Y)


def test_extend_json_roundtrip(t7):
    back = PolyCert.from_json(t7.cert.to_json())
    assert back.check().values == t7.cert.check().values


def test_extend_argument_checks(t5):
    with pytest.raises(ValueError):
        extend(t5, 2, 2)
