from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tconfig import certdata, core
from tconfig.exterior import PairPoint
from tconfig.laminate import (Laminate, Region, SplitNode, barycenter, rconvexity_probe,
                              scaled_multipliers, split, split_node, split_ratios, staircase,
                              tn_laminate, weights_vector)
from tconfig.rconn import assemble, random_rparam
from tconfig.tnconfig import base_points, endpoints

F = Fraction


@pytest.fixture(scope="module")
def t14():
    return certdata.config("t14-2d")


def pt(seed: int, M: int = 2, n: int = 2) -> PairPoint:
    rng = np.random.default_rng(seed)
    return PairPoint(core.to_exact(rng.integers(-5, 6, (M, n)).astype(float)),
                     core.to_exact(rng.integers(-5, 6, (M, n)).astype(float)))


def test_dirac_and_midpoint():
    A, B = pt(1), pt(2)
    assert barycenter(Laminate.dirac(A)) == A
    assert barycenter(Laminate([(F(1, 2), A), (F(1, 2), B)])) == (A + B).scale(F(1, 2))


def test_equal_atoms_merge_and_weights_checked():
    A = pt(3)
    nu = Laminate([(F(1, 3), A), (F(2, 3), A)])
    assert len(nu) == 1 and nu.weight_of(A) == 1
    with pytest.raises(ValueError):
        Laminate([(F(1, 2), A)])
    with pytest.raises(ValueError):
        Laminate([(F(-1), A), (F(2), pt(4))])


def test_split_with_s_zero():
    A = pt(5)
    C = assemble(random_rparam(np.random.default_rng(0), 2, 2))
    nu = split(Laminate.dirac(A), 0, A, A + C, F(0))
    assert nu.atoms == [(F(1), A)]


def test_split_rejects_non_R_segment():
    A = pt(6)
    B1, B2 = A - PairPoint(core.eye(2, True), core.zeros((2, 2), True)), A + PairPoint(
        core.eye(2, True), core.zeros((2, 2), True))
    with pytest.raises(ValueError, match="ℛ-segment"):
        split(Laminate.dirac(A), 0, B1, B2, F(1, 2))


def test_split_respects_region():
    A = pt(7)
    C = assemble(random_rparam(np.random.default_rng(1), 2, 2))
    region = Region(((A, 1e-3),))
    with pytest.raises(ValueError, match="region"):
        split(Laminate.dirac(A), 0, A - C, A + C, F(1, 2), region)
    big = Region(((A, 10 * C.norm() + 1),))
    nu = split(Laminate.dirac(A), 0, A - C, A + C, F(1, 2), big)
    assert barycenter(nu) == A


def test_first_staircase_split(t14):
    # P_k = s_k P_{k-1} + (1 - s_k) Z_{k-1}
    P, Z = base_points(t14), endpoints(t14)
    s = split_ratios(t14)
    assert all(x == F(1, 2) for x in s)
    for k in range(14):
        assert P[k] == P[k - 1].scale(s[k]) + Z[k - 1].scale(1 - s[k])


@st.composite
def random_splits(draw):
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    M, n = draw(st.integers(1, 3)), draw(st.integers(2, 3))
    nu = Laminate.dirac(pt(seed % 1000, M, n))
    for _ in range(draw(st.integers(1, 4))):
        i = draw(st.integers(0, len(nu) - 1))
        s = draw(st.fractions(min_value=0, max_value=1, max_denominator=50))
        C = assemble(random_rparam(rng, M, n))
        A = nu.atoms[i][1]
        # A = (1 - s)B1 + sB2 with B2 - B1 = C
        B1 = A - C.scale(s)
        nu = split(nu, i, B1, B1 + C, s)
    return nu


@settings(max_examples=500, deadline=None)
@given(st.integers(0, 2**32 - 1), st.fractions(min_value=0, max_value=1, max_denominator=60))
def test_split_conserves_barycenter(seed, s):
    rng = np.random.default_rng(seed)
    M, n = int(rng.integers(1, 4)), int(rng.integers(2, 4))
    atoms = [pt(int(rng.integers(0, 10**6)), M, n) for _ in range(3)]
    w = [F(1, 6), F(1, 3), F(1, 2)]
    nu = Laminate(list(zip(w, atoms)))
    before = barycenter(nu)
    i = int(rng.integers(0, len(nu)))
    A = nu.atoms[i][1]
    C = assemble(random_rparam(rng, M, n))
    B1 = A - C.scale(s)
    after = split(nu, i, B1, B1 + C, s)
    assert barycenter(after) == before
    assert sum(wt for wt, _ in after.atoms) == 1


@settings(max_examples=50, deadline=None)
@given(random_splits())
def test_chained_splits_are_laminates(nu):
    assert sum(w for w, _ in nu.atoms) == 1
    assert all(w >= 0 for w, _ in nu.atoms)


def test_tn_laminate_zero_steps(t14):
    nu, tr = tn_laminate(t14, 3, 0)
    assert nu.atoms == [(F(1), base_points(t14)[2])]


def test_tn_laminate_two_sweeps(t14):
    nu, tr = tn_laminate(t14, 1, 28)
    P = base_points(t14)
    assert barycenter(nu) == P[0]
    assert all(tr.barycenter_ok)
    assert tr.base_weights == [F(1, 2**m) for m in range(29)]
    assert all(w > 0 for w in tr.endpoint_weights[-1])
    # endpoint weights never decrease
    for a, b in zip(tr.endpoint_weights, tr.endpoint_weights[1:]):
        assert all(y >= x for x, y in zip(a, b))
    # one base atom at a time
    on_base = [w for w, p in nu.atoms if any(p == q for q in P)]
    assert len(on_base) == 1


def test_tn_laminate_contraction_general_kappas():
    c = certdata.config("t5-sz04")
    from tconfig.tnconfig import TNConfig
    c = TNConfig(c.P, c.steps, [F(3), F(2), F(5, 2), F(4), F(3, 2)])
    _, tr = tn_laminate(c, 2, 12)
    smax = tr.max_s
    for a, b in zip(tr.base_weights, tr.base_weights[1:]):
        assert b <= a * smax


def test_tn_laminate_json(t14):
    nu, tr = tn_laminate(t14, 1, 4)
    assert Laminate.from_json(nu.to_json()).atoms == nu.atoms
    assert tr.to_json()["base_weights"][1] == "1/2"


def test_staircase_degenerate_ratios(t14):
    mu = F(4, 5)
    nu, tree = staircase(t14, 1, mu, mu, 4)
    ct = scaled_multipliers(t14, mu)
    assert nu.atoms == [(F(1), endpoints(ct)[0])]
    nu0, _ = staircase(t14, 1, F(0), mu, 4)
    assert barycenter(nu0) == base_points(t14)[0]


def test_staircase_barycenter_and_P_mass(t14):
    lam, mu = F(2, 5), F(4, 5)
    nu, tree = staircase(t14, 1, lam, mu, 20)
    P, Z = base_points(t14), endpoints(t14)
    assert barycenter(nu) == P[0].scale(1 - lam) + Z[0].scale(lam)
    assert tree.laminate().atoms == nu.atoms
    ct = scaled_multipliers(t14, mu)
    smax = max(split_ratios(ct))
    p_mass = sum(w for w, p in nu.atoms if any(p == q for q in P))
    assert p_mass <= (1 - lam / mu) * smax ** 20
    allowed = P + endpoints(ct)
    assert all(any(p == q for q in allowed) for _, p in nu.atoms)


def test_staircase_parameter_checks(t14):
    with pytest.raises(ValueError):
        staircase(t14, 1, F(1, 2), F(1, 4), 2)
    with pytest.raises(ValueError):
        staircase(t14, 1, F(1, 4), F(1, 2), 2)  # μκ = 1


def test_split_tree_leaves():
    A = pt(9)
    C = assemble(random_rparam(np.random.default_rng(2), 2, 2))
    root = SplitNode(A)
    left, right = split_node(root, A - C.scale(F(1, 4)), A + C.scale(F(3, 4)), F(1, 4))
    assert root.depth() == 1
    assert barycenter(root.laminate()) == A
    with pytest.raises(ValueError):
        split_node(root, A, A, F(1, 2))


def test_probe_affine_and_max_of_affine_zero():
    rng = np.random.default_rng(0)
    W = [rng.normal(size=8) for _ in range(4)]
    aff = lambda p: float(W[0] @ p.to_float().vec())  # noqa: E731
    mx = lambda p: max(float(w @ p.to_float().vec()) + i for i, w in enumerate(W))  # noqa: E731
    assert rconvexity_probe(aff, 2, 2, samples=50).max_violation <= 1e-9
    assert rconvexity_probe(mx, 2, 2, samples=50).max_violation <= 1e-9


def test_probe_detects_concavity():
    f = lambda p: -p.norm() ** 2  # noqa: E731
    rep = rconvexity_probe(f, 2, 2, samples=20)
    assert rep.max_violation > 0 and rep.witness is not None


def test_probe_reproducible():
    f = lambda p: -abs(float(core.det2(p.to_float().X)))  # noqa: E731
    a = rconvexity_probe(f, 2, 2, samples=30, seed=5)
    b = rconvexity_probe(f, 2, 2, samples=30, seed=5)
    assert a.max_violation == b.max_violation


def test_weights_vector(t14):
    nu, _ = tn_laminate(t14, 1, 3)
    w = weights_vector(nu, endpoints(t14))
    assert sum(w) + nu.weight_of(base_points(t14)[11]) == 1
