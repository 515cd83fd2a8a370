from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest

from tconfig import certdata, core
from tconfig.exterior import PairPoint
from tconfig.polyfactory import lift
from tconfig.rconn import RParam, assemble, random_rparam
from tconfig.tnconfig import (HessianSet, TNConfig, base_point, check_condition_C,
                              check_nondegenerate, check_wild, constraint_nullity, endpoint,
                              endpoints, find_L, frakz_directions, im_p_intersection_dim,
                              is_wild, kappa_directions, ker_dpi1, ker_dpi1_dim, l_violations,
                              n0_feasibility, n0_search, perturb_hessians, scale)

F = Fraction


def ex(a):
    return core.array(a, core.Mode.EXACT)


@pytest.fixture(scope="module")
def t14():
    return certdata.config("t14-2d")


@pytest.fixture(scope="module")
def t5():
    return certdata.config("t5-sz04")


def random_config(seed: int, M: int = 2, n: int = 2) -> TNConfig:
    """Two pairs of opposite steps: a valid (degenerate) configuration for identities."""
    rng = np.random.default_rng(seed)
    steps = []
    for _ in range(2):
        p = random_rparam(rng, M, n)
        steps += [p, RParam(p.b, -p.u, -p.v)]
    kap = [F(int(rng.integers(2, 5))) for _ in steps]
    return TNConfig(PairPoint.zero(M, n), steps, kap)


def test_endpoints_match_printed_X(t14):
    X = certdata.load("t14-2d").tables["X"]
    assert endpoint(t14, 1).X.tolist() == [[2, 0], [2, 0]] == X[0]
    assert endpoint(t14, 2).X.tolist() == [[1, 2], [1, 4]] == X[1]
    assert [z.X.tolist() for z in endpoints(t14)] == X


def test_kappa_one_limit_is_next_base_point(t14):
    c1 = TNConfig(t14.P, t14.steps, [F(3, 2)] * 14)
    for k in range(1, 14):
        lim = base_point(c1, k) + t14.C(k)
        assert lim == base_point(c1, k + 1)


def test_index_range(t14):
    with pytest.raises(IndexError):
        endpoint(t14, 0)
    with pytest.raises(IndexError):
        endpoint(t14, 15)


def test_invalid_configs():
    p = random_rparam(np.random.default_rng(0), 2, 2)
    with pytest.raises(ValueError, match="sum to zero"):
        TNConfig(PairPoint.zero(2, 2), [p, p], [F(2), F(2)])
    q = RParam(p.b, -p.u, -p.v)
    with pytest.raises(ValueError, match="> 1"):
        TNConfig(PairPoint.zero(2, 2), [p, q], [F(2), F(1)])


def test_step_sum_exact(t14, t5):
    for c in (t14, t5):
        assert c.step_sum() == PairPoint.zero(2, 2)


def test_dataset_nondegenerate(t14):
    rep = check_nondegenerate(t14)
    assert rep.passed, rep.to_json()
    assert [c.name for c in rep.conditions] == ["R_circ", "span", "b_pairs", "a_pairs",
                                                "no_R_connection"]


def test_repeated_b_simple():
    # two opposite steps share b: b-pair independence fails at i = 1
    p = RParam.make(ex([1, 0]), ex([1, 2]), {(0, 1): ex([1, 0])}, exact=True)
    q = RParam(p.b, -p.u, -p.v)
    rep = check_nondegenerate(TNConfig(PairPoint.zero(2, 2), [p, q], [F(2), F(2)]))
    assert not rep["b_pairs"].passed and [1, 2] in rep["b_pairs"].witnesses


def test_scaling_keeps_nondegeneracy(t14):
    half = scale(t14, F(1, 2))
    assert check_nondegenerate(half).passed
    assert endpoint(half, 1).X.tolist() == [[1, 0], [1, 0]]
    assert scale(t14, 1) == t14
    with pytest.raises(ValueError):
        scale(t14, 0)


def test_scaling_midpoint_identity():
    for seed in range(5):
        c = random_config(seed)
        mu = F(2, 5)
        s = scale(c, mu)
        for k in range(1, c.N + 1):
            assert endpoint(s, k) == c.P.scale(1 - mu) + endpoint(c, k).scale(mu)


def test_float_roundtrip_stable(t14):
    assert check_nondegenerate(t14.to_float(), 1e-9).passed


def test_wildness(t14, t5):
    assert check_wild(t14, 1) and check_wild(t14, 2) and is_wild(t14)
    lifted = lift(t5, 2, 3)
    assert check_wild(lifted, 1)
    assert not check_wild(lifted, 3)
    with pytest.raises(IndexError):
        check_wild(t14, 3)


def test_not_wild_when_column_vanishes():
    b = ex([0, 1])
    p = RParam.make(b, ex([1, 2]), {(0, 1): ex([1, 0])}, exact=True)
    q = RParam(b, -p.u, -p.v)
    c = TNConfig(PairPoint(ex([[3, 1], [4, 1]]), ex([[0, 0], [0, 0]])), [p, q], [F(2), F(3)])
    assert not check_wild(c, 1)


def test_constraint_nullity_t5(t5):
    # N(n(M+1) − 1) − 2Mn at M = n = 2, N = 5
    assert constraint_nullity(t5, exact=True) == 5 * (2 * 3 - 1) - 8 == 17
    assert constraint_nullity(t5) == 17


def test_ker_dpi1_dimensions(t5, t14):
    assert ker_dpi1_dim(2, 2, 5) == 22 and ker_dpi1_dim(2, 2, 14) == 76
    assert ker_dpi1(lift(t5, 2, 2)).dim == 22
    assert ker_dpi1(t14).dim == 76


def test_ker_dpi1_exact_small(t5):
    assert ker_dpi1(t5, exact=True).dim == 22


def test_kappa_and_frakz_directions_independent(t5):
    K = kappa_directions(t5)
    Z = frakz_directions(t5)
    assert K.dim == 5
    assert core.subspace_sum_dim(K, Z, 1e-8) == K.dim + Z.dim


def test_condition_C_rank_bound_identity_hessians(t5):
    c = lift(t5, 2, 2)
    rep = check_condition_C(c, HessianSet.identity(c.N, 2, 2))
    assert all(r <= rep.rank_target for r in rep.ranks)
    assert rep.necessary_bound


def test_condition_C_fails_when_N_below_2M(t5):
    c = lift(t5, 3, 2)
    assert c.N < 2 * c.M
    rep = check_condition_C(c, HessianSet.identity(c.N, 3, 2))
    assert not rep.passed and not rep.necessary_bound


def test_find_L_and_perturbation(t14):
    c = t14.to_float()
    L = find_L(c)
    assert L.dim == c.M * c.n * c.N
    ker = ker_dpi1(c)
    assert core.subspace_sum_dim(ker, L, 1e-8) == ker.dim
    H0 = HessianSet.identity(c.N, 2, 2)
    H = perturb_hessians(c, L, H0, 1e-3, seed=1)
    assert all(np.linalg.norm(a - b) < 1e-3 for a, b in zip(H.mats, H0.mats))
    assert H.positive_definite
    rep = check_condition_C(c, H)
    assert rep.passed, rep.to_json()


def test_perturbation_is_seeded(t14):
    c = t14.to_float()
    L = find_L(c)
    H0 = HessianSet.identity(c.N, 2, 2)
    a = perturb_hessians(c, L, H0, 1e-3, seed=4)
    b = perturb_hessians(c, L, H0, 1e-3, seed=4)
    assert all(np.array_equal(x, y) for x, y in zip(a.mats, b.mats))


def test_perturb_with_zero_L_returns_input(t14):
    H0 = HessianSet.identity(14, 2, 2)
    assert perturb_hessians(t14, core.Subspace.zero(112), H0, 1e-3) is H0


def test_find_L_needs_N_at_least_2M(t5):
    c = lift(t5, 3, 2)
    with pytest.raises(ValueError, match="N >= 2M"):
        find_L(c)


def test_kernel_dimension_inequality():
    for M in range(2, 5):
        for n in range(2, 5):
            for N in range(2, 12):
                assert (ker_dpi1_dim(M, n, N) >= M * n * N) == (N >= 2 * M)


def test_L_projection_bound_exhaustive_small():
    # a nondegenerate T_7 obtained by one extension of the T_5 seed; all 2^7
    # index sets are checked
    from tconfig.polyfactory import extend
    c7 = extend(certdata.cert("t5-sz04"), 1, 2).cert.config.to_float()
    L = find_L(c7)
    assert l_violations(L, c7, exhaustive=True) == []
    assert im_p_intersection_dim(L, 7, 8, tuple(range(1, 8))) == 0


def test_n0_feasibility():
    r = n0_search(2, 2, 14)
    assert r is not None and r["feasible"]
    assert n0_feasibility(2, 2, 14, r["lambda"])["feasible"]
    assert n0_search(5, 5, 2) is None


def test_config_json_roundtrip(t14):
    assert TNConfig.from_json(t14.to_json()) == t14
    f = t14.to_float()
    g = TNConfig.from_json(f.to_json())
    assert not g.exact
    assert np.allclose(endpoint(g, 3).vec(), endpoint(f, 3).vec())
