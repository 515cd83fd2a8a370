from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tconfig import core
from tconfig.certdata import A2_DET

F = Fraction


def ex(a):
    return core.array(a, core.Mode.EXACT)


def leibniz_det(m) -> Fraction:
    """Permutation expansion; independent of the elimination code."""
    m = [[F(x) for x in row] for row in m]
    n = len(m)
    total = F(0)
    for perm in itertools.permutations(range(n)):
        inv = sum(1 for i in range(n) for j in range(i + 1, n) if perm[i] > perm[j])
        term = F(-1 if inv % 2 else 1)
        for i, p in enumerate(perm):
            term *= m[i][p]
        total += term
    return total


def test_rank_identity_and_rank_one():
    assert core.rank(core.eye(2, True)) == 2
    assert core.rank(core.outer(ex([1, 1]), ex([1, 2]))) == 1


def test_rank_empty_raises():
    with pytest.raises(ValueError, match="empty"):
        core.rank(np.zeros((0, 3)))


def test_exact_rank_rejects_tolerance():
    with pytest.raises(ValueError):
        core.rank(core.eye(2, True), 1e-9)


def test_det_table_rank_exact_and_float():
    # det(X_i - X_j) = det X_i + det X_j - <cof X_i, X_j> for 2x2 blocks, so the
    # table is a sum of two rank-one terms and a Gram matrix in R^4: rank <= 6
    m = ex(A2_DET)
    assert core.rank(m) == 6
    assert np.linalg.matrix_rank(np.array(A2_DET, dtype=float)) == 6


def test_nullspace_examples():
    assert core.nullspace(core.zeros((3, 3), True)).dim == 3
    ns = core.nullspace(core.outer(ex([1, 0]), ex([1, 0])))
    assert ns.dim == 1
    assert list(ns.basis[0]) == [0, 1]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.lists(st.integers(-3, 3), min_size=4, max_size=4), min_size=1, max_size=5))
def test_rank_nullity(rows):
    m = ex(rows)
    ns = core.nullspace(m)
    assert core.rank(m) + ns.dim == 4
    for v in ns.basis:
        assert core.is_zero(m.dot(v))


def test_float_rank_agrees_with_exact_on_random_integers():
    rng = np.random.default_rng(3)
    for _ in range(20):
        m = rng.integers(-2, 3, size=(4, 6))
        m[3] = m[0] + m[1]
        assert core.rank(m.astype(float)) == core.rank(ex(m.tolist()))


def test_det_matches_leibniz():
    rng = np.random.default_rng(0)
    for n in (1, 2, 3, 4):
        m = rng.integers(-9, 10, size=(n, n)).tolist()
        assert core.det(ex(m)) == leibniz_det(m)


def test_subspace_sums():
    e1 = core.Subspace.span([ex([1, 0])])
    e2 = core.Subspace.span([ex([0, 1])])
    assert core.subspace_sum_dim(e1, e2) == 2
    assert core.subspace_sum_dim(e1, e1) == 1
    with pytest.raises(ValueError, match="ambient"):
        core.subspace_sum_dim(e1, core.Subspace.span([ex([1, 0, 0])]))


def test_subspace_intersection():
    a = core.Subspace.span([ex([1, 0, 0]), ex([0, 1, 0])])
    b = core.Subspace.span([ex([0, 1, 0]), ex([0, 0, 1])])
    inter = core.subspace_intersection(a, b)
    assert inter.dim == 1
    assert inter.contains(ex([0, 1, 0]))


def test_det2_rank1_pair_examples():
    e1, e2 = ex([1, 0]), ex([0, 1])
    r = core.det2_rank1_pair(e1, e1, e1, e1)
    assert r.direct == 0 and r.agree
    r = core.det2_rank1_pair(e1, e1, e2, e2)
    assert r.direct == 1 and r.agree


def test_minus_variant_differs_from_closed_form():
    e1, e2 = ex([1, 0]), ex([0, 1])
    r = core.det2_rank1_difference(e1, e1, e2, e2)
    assert r.direct == -1 and r.closed == 1 and not r.agree


ints = st.integers(-50, 50)
vec2 = st.tuples(ints, ints)


@settings(max_examples=1000, deadline=None)
@given(vec2, vec2, vec2, vec2)
def test_det2_rank1_pair_property(a, b, c, d):
    r = core.det2_rank1_pair(ex(a), ex(b), ex(c), ex(d))
    m = [[a[0] * b[0] + c[0] * d[0], a[0] * b[1] + c[0] * d[1]],
         [a[1] * b[0] + c[1] * d[0], a[1] * b[1] + c[1] * d[1]]]
    assert r.direct == leibniz_det(m)
    assert r.agree


def test_times_J_examples():
    assert core.times_J(ex([1, 0]), ex([1, 0])).tolist() == [[0, -1], [0, 0]]
    assert core.is_zero(core.times_J(ex([0, 0]), ex([3, 4])))


def test_times_J_on_dataset_Y1():
    # Y_1 = [[0, 0], [-4780, 0]] written as (0, 1)⊗(-4780, 0)
    prod = core.times_J(ex([0, 1]), ex([-4780, 0]))
    assert prod.tolist() == [[0, 0], [0, 4780]]


def test_scalar_json_roundtrip():
    for x in (F(3, 7), F(-5, 2), F(0)):
        s = core.scalar_to_json(x)
        assert isinstance(s, str) and core.scalar_from_json(s, True) == x
    assert core.scalar_to_json(F(6, 4)) == "3/2"
    m = ex([[1, F(1, 3)], [F(-2, 5), 0]])
    assert (core.mat_from_json(core.mat_to_json(m), True) == m).all()


def test_float_and_exact_agree_on_dataset():
    m = ex(A2_DET)
    assert np.allclose(core.to_float(m), np.array(A2_DET, dtype=float), rtol=1e-12)
