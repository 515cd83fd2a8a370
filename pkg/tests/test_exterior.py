from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tconfig import core
from tconfig.exterior import (PairPoint, VForm, basis_indices, bivector_form, from_pair, hodge,
                              to_pair, wedge1, zero_form)

F = Fraction


def ex(a):
    return core.array(a, core.Mode.EXACT)


def sign_by_matrix(seq) -> int:
    """Sign of a permutation as the determinant of its permutation matrix."""
    n = len(seq)
    order = sorted(seq)
    P = np.zeros((n, n))
    for i, s in enumerate(seq):
        P[i, order.index(s)] = 1
    return int(round(np.linalg.det(P)))


def test_hodge_in_the_plane():
    e = ex([1])
    assert hodge(VForm(2, 1, 1, {(0,): e})) == VForm(2, 1, 1, {(1,): e})
    assert hodge(VForm(2, 1, 1, {(1,): e})) == VForm(2, 1, 1, {(0,): -e})


def test_hodge_of_dx2_in_three_dimensions():
    e = ex([1])
    assert hodge(VForm(3, 1, 1, {(1,): e})) == VForm(3, 1, 2, {(0, 2): -e})


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_wedge_with_star_is_plus_volume(n):
    # dx^I ∧ ⋆dx^I: sign of the concatenated index, computed by determinant
    for k in range(n + 1):
        for idx in basis_indices(n, k):
            st_ = hodge(VForm(n, 1, k, {idx: ex([1])}))
            (jdx, coef), = st_.coeffs.items()
            assert sign_by_matrix(idx + jdx) * coef[0] == 1


@st.composite
def exact_forms(draw):
    n = draw(st.integers(1, 5))
    k = draw(st.integers(0, n))
    M = draw(st.integers(1, 3))
    coeffs = {}
    for idx in basis_indices(n, k):
        if draw(st.booleans()):
            vals = draw(st.lists(st.fractions(max_denominator=20, min_value=-20, max_value=20),
                                 min_size=M, max_size=M))
            coeffs[idx] = np.array(vals, dtype=object)
    return VForm(n, M, k, coeffs)


@settings(max_examples=500, deadline=None)
@given(exact_forms())
def test_hodge_involution_sign_law(f):
    assert hodge(hodge(f)) == f.scale((-1) ** (f.k * (f.n - f.k)))


def test_wedge1_examples():
    u = ex([2, 3])
    e1 = ex([1, 0])
    assert wedge1(e1, VForm(2, 2, 1, {(0,): u})) == VForm(2, 2, 2, {})
    assert wedge1(e1, zero_form(2, 2, u)) == VForm(2, 2, 1, {(0,): u})


def test_wedge1_three_dimensional_lift_computation():
    a = ex([5, -1])
    f = bivector_form(_v3(a))  # a ⋆(dx^1 ∧ dx^2) = a dx^3
    assert f == VForm(3, 2, 1, {(2,): a})
    assert wedge1(ex([1, 0, 0]), f) == VForm(3, 2, 2, {(0, 2): a})


def _v3(a):
    v = core.zeros((3, 3, 2), True)
    v[0, 1] = a
    v[1, 0] = -a
    return v


@settings(max_examples=100, deadline=None)
@given(exact_forms(), st.lists(st.integers(-5, 5), min_size=5, max_size=5))
def test_wedge1_twice_vanishes(f, bvals):
    if f.k >= f.n - 1:
        return
    b = ex(bvals[: f.n])
    assert wedge1(b, wedge1(b, f)) == VForm(f.n, f.M, f.k + 2, {})


def test_to_pair_of_rank_one_one_form():
    u, b = ex([1, -2]), ex([3, 0, 1])
    w1 = VForm(3, 2, 1, {(a,): u * b[a] for a in range(3)})
    p = to_pair(w1, VForm(3, 2, 2, {}))
    assert (p.X == core.outer(u, b)).all()
    assert core.is_zero(p.Y)


def test_pair_roundtrip_and_linearity():
    rng = np.random.default_rng(1)
    for n in (2, 3, 4):
        for _ in range(10):
            X = ex(rng.integers(-9, 10, size=(2, n)).tolist())
            Y = ex(rng.integers(-9, 10, size=(2, n)).tolist())
            p = PairPoint(X, Y)
            w1, w2 = from_pair(p)
            assert w1.k == 1 and w2.k == n - 1
            assert to_pair(w1, w2) == p
            q = PairPoint(Y, X)
            v1, v2 = from_pair(q)
            s = F(3, 7)
            assert to_pair(w1.scale(s) + v1, w2.scale(s) + v2) == p.scale(s) + q


def test_to_pair_rejects_wrong_degree():
    with pytest.raises(ValueError):
        to_pair(VForm(3, 1, 2, {}), VForm(3, 1, 2, {}))


def test_vform_json_roundtrip():
    f = VForm(4, 2, 2, {(0, 3): ex([1, F(-1, 2)]), (1, 2): ex([0, 7])})
    assert VForm.from_json(f.to_json()) == f
    assert f.to_json()["coeffs"][0]["idx"] == [1, 4]


def test_vform_validation():
    with pytest.raises(ValueError):
        VForm(2, 1, 3, {})
    with pytest.raises(ValueError):
        VForm(3, 1, 2, {(2, 1): ex([1])})


def test_all_basis_indices_increasing():
    for n in range(1, 6):
        for k in range(n + 1):
            idx = basis_indices(n, k)
            assert idx == sorted(idx)
            assert len(idx) == len(list(itertools.combinations(range(n), k)))
