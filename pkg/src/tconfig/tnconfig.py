"""T_N-configurations: endpoints, nondegeneracy, tangent spaces, condition (C).

Indices in the public functions are 1-based, matching the usual way the
steps C_1, ..., C_N are written; everything internal is 0-based.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import core
from .exterior import PairPoint
from .rconn import RParam, assemble, in_R_circ, is_in_R, tangent_frakC


@dataclass(frozen=True)
class TNConfig:
    P: PairPoint
    steps: tuple[RParam, ...]
    kappas: tuple

    def __post_init__(self) -> None:
        object.__setattr__(self, "steps", tuple(self.steps))
        object.__setattr__(self, "kappas", tuple(self.kappas))
        if len(self.steps) != len(self.kappas):
            raise ValueError("one multiplier per step is required")
        if not self.steps:
            raise ValueError("a configuration needs at least one step")
        for s in self.steps:
            if (s.M, s.n) != (self.P.M, self.P.n):
                raise ValueError("step dimensions do not match the base point")
        for k in self.kappas:
            if not k > 1:
                raise ValueError(f"multiplier {k} is not > 1")
        total = self.step_sum()
        tol = 0.0 if self.exact else 1e-9 * max(1.0, max(self.C(i).norm() for i in range(1, self.N + 1)))
        if not (core.is_zero(total.X, tol) and core.is_zero(total.Y, tol)):
            raise ValueError("the steps do not sum to zero")

    @property
    def N(self) -> int:
        return len(self.steps)

    @property
    def M(self) -> int:
        return self.P.M

    @property
    def n(self) -> int:
        return self.P.n

    @property
    def exact(self) -> bool:
        return (self.P.exact and all(s.exact for s in self.steps)
                and all(isinstance(k, (Fraction, int)) for k in self.kappas))

    def C(self, i: int) -> PairPoint:
        return assemble(self.steps[i - 1])

    def step_sum(self) -> PairPoint:
        total = PairPoint.zero(self.M, self.n, self.P.exact)
        for s in self.steps:
            total = total + assemble(s)
        return total

    def to_float(self) -> "TNConfig":
        return TNConfig(self.P.to_float(), [s.to_float() for s in self.steps],
                        [float(k) for k in self.kappas])

    def to_json(self) -> dict:
        return {
            "v": 1, "M": self.M, "n": self.n, "N": self.N, "P": self.P.to_json(),
            "steps": [s.to_json() for s in self.steps],
            "kappas": [core.scalar_to_json(k) for k in self.kappas],
        }

    @classmethod
    def from_json(cls, data: dict, exact: bool | None = None) -> "TNConfig":
        if exact is None:
            exact = all(isinstance(k, str) for k in data["kappas"])
        P = PairPoint.from_json(data["P"], exact)
        steps = [RParam.from_json(s, exact) for s in data["steps"]]
        kappas = [core.scalar_from_json(k, exact) for k in data["kappas"]]
        return cls(P, steps, kappas)

    def __eq__(self, o: object) -> bool:
        if not isinstance(o, TNConfig):
            return NotImplemented
        return (self.P == o.P and len(self.steps) == len(o.steps)
                and all(a == b for a, b in zip(self.steps, o.steps))
                and all(a == b for a, b in zip(self.kappas, o.kappas)))

    __hash__ = None  # type: ignore[assignment]


def _check_index(c: TNConfig, k: int) -> None:
    if not 1 <= k <= c.N:
        raise IndexError(f"index {k} outside 1..{c.N}")


def base_point(c: TNConfig, k: int) -> PairPoint:
    """π_k = P + C_1 + ... + C_{k-1}."""
    _check_index(c, k)
    out = c.P
    for i in range(1, k):
        out = out + c.C(i)
    return out


def endpoint(c: TNConfig, k: int) -> PairPoint:
    """Z_k = π_k + κ_k C_k."""
    return base_point(c, k) + c.C(k).scale(c.kappas[k - 1])


def base_points(c: TNConfig) -> list[PairPoint]:
    out, run = [], c.P
    for s in c.steps:
        out.append(run)
        run = run + assemble(s)
    return out


def endpoints(c: TNConfig) -> list[PairPoint]:
    """All Z_k, accumulating the base points in a single pass."""
    out, run = [], c.P
    for s, k in zip(c.steps, c.kappas):
        C = assemble(s)
        out.append(run + C.scale(k))
        run = run + C
    return out


# ---------------------------------------------------------------------------
# nondegeneracy and wildness
# ---------------------------------------------------------------------------


@dataclass
class ConditionResult:
    name: str
    passed: bool
    witnesses: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {"name": self.name, "passed": self.passed, "witnesses": self.witnesses[:20]}


@dataclass
class NondegReport:
    conditions: list[ConditionResult]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    def __getitem__(self, name: str) -> ConditionResult:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_json(self) -> dict:
        return {"passed": self.passed, "conditions": [c.to_json() for c in self.conditions]}


def _independent(vs: Sequence[np.ndarray], tol: float | None) -> bool:
    m = np.vstack([np.asarray(v) for v in vs])
    return core.rank(m, tol) == len(vs)


def check_nondegenerate(c: TNConfig, tol: float | None = None) -> NondegReport:
    exact = c.exact
    rtol = None if exact else (tol if tol is not None else 1e-9)
    N = c.N
    circ = ConditionResult("R_circ", True)
    for i, s in enumerate(c.steps, 1):
        if not in_R_circ(s) or core.is_zero(s.u, 0 if exact else rtol):
            circ.passed = False
            circ.witnesses.append(i)
    span = ConditionResult("span", True)
    dim = core.rank(np.vstack([s.b for s in c.steps]), rtol)
    if dim < c.n:
        span.passed = False
        span.witnesses.append({"span_dim": dim, "n": c.n})
    bpairs = ConditionResult("b_pairs", True)
    apairs = ConditionResult("a_pairs", True)
    for i in range(N):
        j = (i + 1) % N
        if not _independent([c.steps[i].b, c.steps[j].b], rtol):
            bpairs.passed = False
            bpairs.witnesses.append([i + 1, j + 1])
        if not _independent([c.steps[i].u, c.steps[j].u], rtol):
            apairs.passed = False
            apairs.witnesses.append([i + 1, j + 1])
    norank = ConditionResult("no_R_connection", True)
    Z = endpoints(c)
    for k, l in itertools.combinations(range(N), 2):
        res = is_in_R(Z[k] - Z[l], rtol)
        if res.member:
            norank.passed = False
            norank.witnesses.append({"pair": [k + 1, l + 1], "param": res.param.to_json()})
    return NondegReport([circ, span, bpairs, apairs, norank])


def check_wild(c: TNConfig, beta: int, tol: float | None = None) -> bool:
    """True iff the columns X_k e_β take at least two distinct values."""
    if not 1 <= beta <= c.n:
        raise IndexError("β outside 1..n")
    cols = [z.X[:, beta - 1] for z in endpoints(c)]
    t = 0.0 if c.exact else (tol if tol is not None else 1e-12)
    return any(not core.is_zero(col - cols[0], t) for col in cols[1:])


def is_wild(c: TNConfig, tol: float | None = None) -> bool:
    return all(check_wild(c, b, tol) for b in range(1, c.n + 1))


def scale(c: TNConfig, mu) -> TNConfig:
    """Steps multiplied by μ; endpoints become (1 − μ)P + μZ_k."""
    if not 0 < mu <= 1:
        raise ValueError("μ must lie in (0, 1]")
    out = TNConfig(c.P, [s.scale(mu) for s in c.steps], c.kappas)
    for k in range(1, c.N + 1):
        want = c.P.scale(1 - mu) + endpoint(c, k).scale(mu)
        got = endpoint(out, k)
        if c.exact:
            assert got == want
        else:
            assert (got - want).norm() <= 1e-9 * max(1.0, want.norm())
    return out


# ---------------------------------------------------------------------------
# tangent spaces of the endpoint manifold
# ---------------------------------------------------------------------------


def ker_dpi1_dim(M: int, n: int, N: int) -> int:
    return N * (M * n + n) - 2 * M * n


@dataclass
class ManifoldTangent:
    """Parametrized tangent space of the endpoint manifold.

    ``theta`` columns are the parameter directions
    (δP coordinates, constrained step variations, δκ); ``image`` holds the
    corresponding endpoint variations in R^{2MnN} (rows).  ``pi`` maps a
    parameter direction to the variation of each base point.
    """

    image: np.ndarray       # (dim_theta, 2MnN)
    base_var: np.ndarray    # (dim_theta, N, 2Mn): variation of π_k
    n_P: int


def _frak_bases(c: TNConfig, exact: bool, tol: float | None) -> list[np.ndarray]:
    out = []
    for s in c.steps:
        sp = tangent_frakC(s if exact else s.to_float(), None if exact else tol)
        out.append(sp.basis)
    return out


def manifold_tangent(c: TNConfig, tol: float | None = 1e-8, exact: bool = False,
                     include_P: bool = True) -> ManifoldTangent:
    if exact and not c.exact:
        raise ValueError("exact tangent spaces need an exact configuration")
    cc = c if exact else c.to_float()
    N, M, n = c.N, c.M, c.n
    d = 2 * M * n
    F = _frak_bases(cc, exact, tol)
    sizes = [f.shape[0] for f in F]
    G = np.hstack([f.T for f in F])            # d × Σ sizes
    W = core.nullspace(G, None if exact else tol).basis   # each row: coefficients
    steps_C = [assemble(s).vec() for s in cc.steps]
    if not exact:
        # δκ is rescaled per step so the rows are comparable in float rank tests
        steps_C = [v / np.linalg.norm(v) for v in steps_C]
    kap = cc.kappas
    rows_img, rows_pi = [], []

    def emit(dP, dC, dk):
        img = core.zeros((N, d), exact)
        pis = core.zeros((N, d), exact)
        run = dP.copy()
        for k in range(N):
            pis[k] = run
            img[k] = run + kap[k] * dC[k] + dk[k] * steps_C[k]
            run = run + dC[k]
        rows_img.append(img.ravel())
        rows_pi.append(pis)

    zero_d = core.zeros(d, exact)
    zero_N = [0] * N
    n_P = 0
    if include_P:
        for j in range(d):
            dP = core.zeros(d, exact)
            dP[j] = 1
            emit(dP, [zero_d] * N, zero_N)
            n_P += 1
    offsets = np.cumsum([0] + sizes)
    for w in W:
        dC = [np.asarray(w[offsets[i]:offsets[i + 1]]).dot(F[i]) for i in range(N)]
        emit(zero_d, dC, zero_N)
    for k in range(N):
        dk = [0] * N
        dk[k] = 1
        emit(zero_d, [zero_d] * N, dk)
    return ManifoldTangent(np.vstack(rows_img), np.stack(rows_pi), n_P)


def constraint_nullity(c: TNConfig, tol: float | None = 1e-8, exact: bool = False) -> int:
    """Dimension of {(δC_i) ∈ Π 𝔉^i : Σ δC_i = 0}."""
    cc = c if exact else c.to_float()
    F = _frak_bases(cc, exact, tol)
    G = np.hstack([f.T for f in F])
    return core.nullspace(G, None if exact else tol).dim


def ker_dpi(c: TNConfig, k: int = 1, tol: float | None = 1e-8, exact: bool = False) -> core.Subspace:
    """ker Dπ_k inside the tangent space of the endpoint manifold."""
    _check_index(c, k)
    T = manifold_tangent(c, tol, exact)
    pi_k = T.base_var[:, k - 1, :]                 # (dim_theta, 2Mn)
    null = core.nullspace(pi_k.T, None if exact else tol)
    if null.dim == 0:
        return core.Subspace.zero(T.image.shape[1], exact)
    img = np.asarray(null.basis).dot(T.image)
    sp = core.row_space(img, None if exact else tol)
    want = ker_dpi1_dim(c.M, c.n, c.N)
    if sp.dim != want:
        raise ValueError(f"degenerate configuration: dim {sp.dim} != {want}")
    return sp


def ker_dpi1(c: TNConfig, tol: float | None = 1e-8, exact: bool = False) -> core.Subspace:
    return ker_dpi(c, 1, tol, exact)


def kappa_directions(c: TNConfig) -> core.Subspace:
    """The span of the multiplier variations (the κ-part of ker Dπ_1)."""
    cc = c.to_float()
    d = 2 * c.M * c.n
    rows = []
    for k in range(c.N):
        v = np.zeros((c.N, d))
        v[k] = assemble(cc.steps[k]).vec()
        rows.append(v.ravel())
    return core.row_space(np.vstack(rows))


def frakz_directions(c: TNConfig, tol: float | None = 1e-8) -> core.Subspace:
    """Variations of the steps alone (κ fixed, P fixed)."""
    T = manifold_tangent(c, tol, include_P=False)
    return core.row_space(T.image[: T.image.shape[0] - c.N], tol)


# ---------------------------------------------------------------------------
# Hessian surrogates and condition (C)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HessianSet:
    mats: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "mats", tuple(np.asarray(m, dtype=float) for m in self.mats))
        for m in self.mats:
            if m.shape[0] != m.shape[1] or not np.allclose(m, m.T, atol=1e-12):
                raise ValueError("Hessian surrogates must be symmetric")

    @classmethod
    def identity(cls, N: int, M: int, n: int, scale: float = 1.0) -> "HessianSet":
        return cls(tuple(scale * np.eye(M * n) for _ in range(N)))

    @property
    def positive_definite(self) -> bool:
        return all(np.linalg.eigvalsh(m)[0] > 0 for m in self.mats)

    def graph_basis(self) -> np.ndarray:
        """Rows spanning V_1 × ... × V_N with V_i = {(ξ, A_i ξ)}."""
        N = len(self.mats)
        mn = self.mats[0].shape[0]
        rows = []
        for i, A in enumerate(self.mats):
            for j in range(mn):
                v = np.zeros((N, 2 * mn))
                v[i, j] = 1.0
                v[i, mn:] = A[:, j]
                rows.append(v.ravel())
        return np.vstack(rows)


@dataclass
class ConditionCReport:
    transversal_dim: int
    target_dim: int
    ranks: list[int]
    rank_target: int
    sum_dims: list[int]
    necessary_bound: bool

    @property
    def transversal(self) -> bool:
        return self.transversal_dim == self.target_dim

    @property
    def passed(self) -> bool:
        return self.transversal and all(r == self.rank_target for r in self.ranks)

    def to_json(self) -> dict:
        return {
            "passed": self.passed, "transversal_dim": self.transversal_dim,
            "target_dim": self.target_dim, "pi_ranks": self.ranks,
            "rank_target": self.rank_target, "sum_dims": self.sum_dims,
            "N_ge_2M": self.necessary_bound,
        }


def check_condition_C(c: TNConfig, H: HessianSet, tol: float | None = 1e-8) -> ConditionCReport:
    if len(H.mats) != c.N:
        raise ValueError("one Hessian surrogate per endpoint is required")
    T = manifold_tangent(c, tol)
    V = H.graph_basis()
    D = 2 * c.M * c.n * c.N
    trans = core.rank(np.vstack([T.image, V]), tol)
    # intersection in parameter coordinates: T.image^T θ = V^T η
    K = core.nullspace(np.hstack([T.image.T, -V.T]), tol).basis
    theta = K[:, : T.image.shape[0]]
    ranks, sums = [], []
    for k in range(c.N):
        pik = theta.dot(T.base_var[:, k, :])
        ranks.append(core.rank(pik, tol) if pik.size and np.abs(pik).max() > 0 else 0)
        null = core.nullspace(T.base_var[:, k, :].T, tol).basis
        kerk = null.dot(T.image)
        sums.append(core.rank(np.vstack([kerk, V]), tol))
    return ConditionCReport(trans, D, ranks, 2 * c.M * c.n, sums, c.N >= 2 * c.M)


def im_p_intersection_dim(L: core.Subspace, N: int, slot: int, index_set: Sequence[int],
                          tol: float | None = 1e-8) -> int:
    """dim(L ∩ im p_I) where p_I zeroes the components with (1-based) indices I."""
    if L.dim == 0:
        return 0
    B = core.to_float(L.basis).reshape(L.dim, N, slot)
    cols = B[:, [i - 1 for i in index_set], :].reshape(L.dim, -1)
    r = core.rank(cols, tol) if np.abs(cols).max() > 0 else 0
    return L.dim - r


def _index_sets(N: int, exhaustive: bool, rng: np.random.Generator, samples: int = 64):
    if exhaustive:
        for k in range(1, N + 1):
            yield from itertools.combinations(range(1, N + 1), k)
        return
    for k in (1, N):
        yield from itertools.combinations(range(1, N + 1), k) if k == 1 else [tuple(range(1, N + 1))]
    for _ in range(samples):
        k = int(rng.integers(2, N))
        yield tuple(sorted(rng.choice(np.arange(1, N + 1), size=k, replace=False).tolist()))


def l_violations(L: core.Subspace, c: TNConfig, tol: float | None = 1e-8, seed: int = 0,
                 exhaustive: bool | None = None) -> list[tuple]:
    slot = 2 * c.M * c.n
    mn = c.M * c.n
    exhaustive = c.N <= 8 if exhaustive is None else exhaustive
    rng = np.random.default_rng(seed)
    bad = []
    for I in _index_sets(c.N, exhaustive, rng):
        if im_p_intersection_dim(L, c.N, slot, I, tol) > mn * (c.N - len(I)):
            bad.append(I)
    return bad


def _orthonormal_completion(S: np.ndarray, K: np.ndarray) -> np.ndarray:
    """Orthonormal basis of span(K) whose first rows span span(S) ⊂ span(K)."""
    basis = list(S)
    for v in K:
        w = v - sum(np.dot(v, o) * o for o in basis)
        w = w - sum(np.dot(w, o) * o for o in basis)
        if np.linalg.norm(w) > 1e-9:
            basis.append(w / np.linalg.norm(w))
    return np.vstack(basis)


def find_L(c: TNConfig, tol: float | None = 1e-8, k: int = 1,
           index_set: Sequence[int] | None = None, seed: int = 0) -> core.Subspace:
    """An MnN-dimensional L ⊂ ker Dπ_k with the projection-intersection bounds.

    With ``index_set`` the orthonormal-completion recipe is applied for
    that index set.  Without it, L is a seeded generic subspace of the
    kernel, which satisfies the bound for all index sets simultaneously
    whenever the kernel does.
    """
    MnN = c.M * c.n * c.N
    ker = ker_dpi(c, k, tol)
    if ker.dim < MnN:
        raise ValueError(f"ker Dπ_{k} has dimension {ker.dim} < MnN = {MnN}; needs N >= 2M")
    K = ker.basis
    if index_set is not None:
        slot = 2 * c.M * c.n
        m = len(index_set)
        mn = c.M * c.n
        B = K.reshape(ker.dim, c.N, slot)
        cols = B[:, [i - 1 for i in index_set], :].reshape(ker.dim, -1)
        coef = core.nullspace(cols.T, tol).basis
        S = core.row_space(coef.dot(K), tol).basis if coef.shape[0] else np.zeros((0, K.shape[1]))
        O = _orthonormal_completion(S, K)
        D = O.shape[0]
        keep = list(range(MnN - mn * m)) + list(range(D - mn * m, D))
        L = core.Subspace(K.shape[1], O[sorted(set(keep))])
    else:
        rng = np.random.default_rng(seed)
        Q, _ = np.linalg.qr(rng.normal(size=(ker.dim, MnN)))
        L = core.Subspace(K.shape[1], Q.T.dot(K))
    bad = l_violations(L, c, tol, seed) if index_set is None else [
        I for I in [tuple(index_set)]
        if im_p_intersection_dim(L, c.N, 2 * c.M * c.n, I, tol) > c.M * c.n * (c.N - len(I))]
    if bad:
        raise ValueError(f"projection-intersection bound violated for index set {bad[0]}")
    return L


def perturb_hessians(c: TNConfig, L, H0: HessianSet, delta: float, seed: int = 0,
                     max_retries: int = 10, tol: float | None = 1e-8) -> HessianSet:
    """Symmetric A_i within δ of H0 with (V_1 × ... × V_N) ∩ L = {0}.

    ``L`` may be a single subspace or a list (one per projection index).
    """
    Ls = [L] if isinstance(L, core.Subspace) else list(L)
    if all(x.dim == 0 for x in Ls):
        return H0
    if delta <= 0:
        raise ValueError("δ must be positive")
    rng = np.random.default_rng(seed)
    mn = H0.mats[0].shape[0]
    for _ in range(max_retries):
        mats = []
        for A0 in H0.mats:
            S = rng.normal(size=(mn, mn))
            S = S + S.T
            S *= 0.5 * delta / np.linalg.norm(S)
            mats.append(A0 + S)
        H = HessianSet(tuple(mats))
        V = H.graph_basis()
        if all(core.rank(np.vstack([V, core.to_float(x.basis)]), tol) == V.shape[0] + x.dim
               for x in Ls if x.dim):
            return H
    raise RuntimeError("max retries exceeded")


def n0_feasibility(M: int, n: int, N: int, lam: float) -> dict:
    """The two threshold inequalities on (n, M, N) for a given λ ∈ [1, 2)."""
    first = (2 - lam) * n * M - (lam - 1) * (n - 1) <= 0
    second = M * n <= N * (2 - lam) * (n * (M + 1) - 1) / 2
    return {"lambda": lam, "first": bool(first), "second": bool(second),
            "feasible": bool(first and second)}


def n0_search(M: int, n: int, N: int, grid: int = 1000) -> dict | None:
    """Smallest λ on a grid in [1, 2) for which both inequalities hold."""
    for j in range(grid):
        lam = 1 + j / grid
        r = n0_feasibility(M, n, N, lam)
        if r["feasible"]:
            return r
    return None

