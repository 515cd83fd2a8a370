"""Elements of the connection set ℛ: parametrization, membership and tangents.

An element is described by a direction ``b ∈ R^n``, an X-factor
``u ∈ R^M`` and an antisymmetric family ``v[α, β] ∈ R^M``.  Its matrix pair
is ``X = u⊗b`` and ``Y[:, α] = Σ_β v[α, β] b_β``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import core
from .exterior import PairPoint


@dataclass(frozen=True)
class RParam:
    b: np.ndarray
    u: np.ndarray
    v: np.ndarray  # shape (n, n, M), antisymmetric in the first two axes

    def __post_init__(self) -> None:
        n, M = len(self.b), len(self.u)
        if self.v.shape != (n, n, M):
            raise ValueError(f"v must have shape {(n, n, M)}, got {self.v.shape}")
        if not core.is_zero(self.v + self.v.transpose(1, 0, 2), 1e-12):
            raise ValueError("v must be antisymmetric")

    @property
    def n(self) -> int:
        return len(self.b)

    @property
    def M(self) -> int:
        return len(self.u)

    @property
    def exact(self) -> bool:
        return core.is_exact(self.b) and core.is_exact(self.u) and core.is_exact(self.v)

    @classmethod
    def make(cls, b, u, v_entries: dict[tuple[int, int], object] | None = None,
             exact: bool | None = None) -> "RParam":
        """Build from 0-based ``{(α, β): vector}`` entries with α < β."""
        b, u = np.asarray(b), np.asarray(u)
        if exact is None:
            exact = b.dtype == object or u.dtype == object
        mode = core.Mode.EXACT if exact else core.Mode.FLOAT
        b, u = core.array(b, mode), core.array(u, mode)
        n, M = len(b), len(u)
        v = core.zeros((n, n, M), exact)
        for (a, c), w in (v_entries or {}).items():
            w = core.array(w, mode)
            v[a, c] = w
            v[c, a] = -w
        return cls(b, u, v)

    def scale(self, s) -> "RParam":
        return RParam(self.b, s * self.u, s * self.v)

    def a_pair(self):
        """The coefficient pair (u, v) as one object, for readability."""
        return self.u, self.v

    def to_float(self) -> "RParam":
        return RParam(core.to_float(self.b), core.to_float(self.u), core.to_float(self.v))

    def to_exact(self, max_den: int | None = None) -> "RParam":
        return RParam(core.to_exact(self.b, max_den), core.to_exact(self.u, max_den),
                      core.to_exact(self.v, max_den))

    def __eq__(self, o: object) -> bool:
        if not isinstance(o, RParam):
            return NotImplemented
        return (self.b.shape == o.b.shape and self.u.shape == o.u.shape
                and core.is_zero(self.b - o.b) and core.is_zero(self.u - o.u)
                and core.is_zero(self.v - o.v))

    __hash__ = None  # type: ignore[assignment]

    def to_json(self) -> dict:
        entries = [[a + 1, c + 1, core.mat_to_json(self.v[a, c])]
                   for a, c in itertools.combinations(range(self.n), 2)
                   if not core.is_zero(self.v[a, c])]
        return {"b": core.mat_to_json(self.b), "u": core.mat_to_json(self.u), "v": entries}

    @classmethod
    def from_json(cls, data: dict, exact: bool = True) -> "RParam":
        b = core.mat_from_json(data["b"], exact)
        u = core.mat_from_json(data["u"], exact)
        ent = {(a - 1, c - 1): core.mat_from_json(w, exact) for a, c, w in data["v"]}
        return cls.make(b, u, ent, exact)


def assemble(p: RParam) -> PairPoint:
    X = core.outer(p.u, p.b)
    Y = np.einsum("abm,b->ma", p.v, p.b) if not p.exact else _exact_contract(p.v, p.b)
    return PairPoint(X, Y)


def _exact_contract(v: np.ndarray, b: np.ndarray) -> np.ndarray:
    n, _, M = v.shape
    Y = core.zeros((M, n), True)
    for a in range(n):
        col = core.zeros(M, True)
        for c in range(n):
            if b[c] != 0:
                col = col + v[a, c] * b[c]
        Y[:, a] = col
    return Y


def assemble_uvb(u, v, b) -> PairPoint:
    """assemble() without the antisymmetry validation (used for variations)."""
    X = core.outer(np.asarray(u), np.asarray(b))
    if core.is_exact(np.asarray(v)):
        Y = _exact_contract(np.asarray(v), np.asarray(b))
    else:
        Y = np.einsum("abm,b->ma", np.asarray(v, dtype=float), np.asarray(b, dtype=float))
    return PairPoint(X, Y)


def v_from_Y(Y: np.ndarray, b: np.ndarray) -> np.ndarray:
    """The canonical v with Σ_β v[α,β] b_β = Y[:, α], assuming Y b = 0."""
    M, n = Y.shape
    bb = core.dot(b, b)
    exact = core.is_exact(Y) and core.is_exact(b)
    v = core.zeros((n, n, M), exact)
    for a in range(n):
        for c in range(n):
            if a != c:
                v[a, c] = (Y[:, a] * b[c] - Y[:, c] * b[a]) / bb
    return v


@dataclass(frozen=True)
class RMembership:
    member: bool
    param: RParam | None = None
    witness: str = ""

    def __bool__(self) -> bool:
        return self.member


def _scale_tol(p: PairPoint, tol: float | None) -> float:
    t = core.DEFAULT_RTOL if tol is None else tol
    return t * max(1.0, p.norm())


def is_in_R(p: PairPoint, tol: float | None = None) -> RMembership:
    """Decide whether ``p`` is of the form assemble(b, u, v)."""
    if p.exact:
        return _is_in_R_exact(p)
    return _is_in_R_float(p.to_float(), tol)


def _is_in_R_exact(p: PairPoint) -> RMembership:
    X, Y = p.X, p.Y
    M, n = X.shape
    if core.is_zero(X):
        ker = core.nullspace(Y) if not core.is_zero(Y) else core.Subspace(n, core.eye(n, True))
        if ker.dim == 0:
            return RMembership(False, witness="X = 0 and Y has trivial kernel")
        b = ker.basis[0]
        return RMembership(True, RParam(b, core.zeros(M, True), v_from_Y(Y, b)))
    r = next(i for i in range(M) if not core.is_zero(X[i]))
    b = X[r].copy()
    u = X.dot(b) / core.dot(b, b)
    if not core.is_zero(X - core.outer(u, b)):
        return RMembership(False, witness=f"X has rank {core.rank(X)} > 1")
    Yb = Y.dot(b)
    if not core.is_zero(Yb):
        return RMembership(False, witness="Y b != 0 for the X direction b")
    return RMembership(True, RParam(b, u, v_from_Y(Y, b)))


def _is_in_R_float(p: PairPoint, tol: float | None) -> RMembership:
    X, Y = p.X, p.Y
    M, n = X.shape
    t = _scale_tol(p, tol)
    U, s, Vt = np.linalg.svd(X)
    if s[0] <= t:
        _, sy, Vy = np.linalg.svd(Y)
        sy_full = np.zeros(n)
        sy_full[: len(sy)] = sy
        if sy_full[-1] > t:
            return RMembership(False, witness="X = 0 and Y has trivial kernel")
        b = Vy[-1]
        return RMembership(True, RParam(b, np.zeros(M), v_from_Y(Y, b)))
    if len(s) > 1 and s[1] > t:
        return RMembership(False, witness=f"X has second singular value {s[1]:.3g}")
    b = Vt[0]
    u = X @ b
    if np.linalg.norm(Y @ b) > t:
        return RMembership(False, witness="Y b != 0 for the X direction b")
    return RMembership(True, RParam(b, u, v_from_Y(Y, b)))


def canonical(p: RParam) -> RParam:
    """Fix the sign and scale of b: first nonzero entry positive.

    Float mode makes b a unit vector; exact mode scales b so that its
    first nonzero entry is 1, which keeps everything rational.
    """
    b = p.b
    j = next((i for i in range(len(b)) if b[i] != 0), None)
    if j is None:
        raise ValueError("b vanishes")
    if p.exact:
        s = b[j]
    else:
        s = float(np.linalg.norm(b)) * (1.0 if b[j] > 0 else -1.0)
    nb = b / s
    u = p.u * s
    v = p.v * s
    return RParam(nb, u, v)


def recover(p: PairPoint, tol: float | None = None) -> RParam:
    res = is_in_R(p, tol)
    if not res:
        raise ValueError(f"not in ℛ: {res.witness}")
    q = canonical(res.param)
    if core.is_zero(q.u, 0 if q.exact else _scale_tol(p, tol)):
        raise ValueError("not in ℛ°, X part vanishes")
    # the gauge: v is rebuilt from Y so no component along o_a⊗o_b (a,b ≥ 2)
    return RParam(q.b, q.u, v_from_Y(p.Y, q.b))


def gauge_component(p: RParam) -> np.ndarray:
    """Components of v on o_a⊗o_b − o_b⊗o_a, a < b, both orthogonal to b.

    The orthonormal completion is Gram–Schmidt over the standard basis,
    smallest index first.  The result vanishes in the canonical gauge.
    """
    b = core.to_float(p.b)
    basis = [b / np.linalg.norm(b)]
    for e in np.eye(len(b)):
        w = e - sum(np.dot(e, o) * o for o in basis)
        if np.linalg.norm(w) > 1e-10:
            basis.append(w / np.linalg.norm(w))
    v = core.to_float(p.v)
    comps = []
    for a, c in itertools.combinations(range(1, len(b)), 2):
        oa, oc = basis[a], basis[c]
        comps.append(np.einsum("abm,a,b->m", v, oa, oc))
    return np.array(comps)


def chain_connect(A: PairPoint, B: PairPoint) -> list[PairPoint]:
    """A chain from A to B whose consecutive differences lie in ℛ."""
    if A.X.shape != B.X.shape:
        raise ValueError("dimension mismatch")
    D = B - A
    M, n = D.X.shape
    exact = D.exact
    chain = [A]
    cur = A
    for a in range(n):
        e_a = core.zeros(n, exact)
        e_a[a] = 1
        col = D.X[:, a]
        if not core.is_zero(col):
            step = assemble(RParam.make(e_a, col, exact=exact))
            cur = cur + step
            chain.append(cur)
        ycol = D.Y[:, a]
        if not core.is_zero(ycol):
            g = 1 if a == 0 else 0
            e_g = core.zeros(n, exact)
            e_g[g] = 1
            key, w = ((a, g), ycol) if a < g else ((g, a), -ycol)
            step = assemble(RParam.make(e_g, core.zeros(M, exact), {key: w}, exact=exact))
            cur = cur + step
            chain.append(cur)
    if not chain[-1] == B and exact:
        raise AssertionError("chain does not telescope")
    if not exact:
        chain[-1] = B
    return chain


def chain_constant(n: int) -> int:
    return 2 * n


def in_R_circ(p: RParam) -> bool:
    return not core.is_zero(p.b) and not (core.is_zero(p.u) and core.is_zero(p.v))


def _antisym_basis(n: int, M: int, exact: bool) -> list[np.ndarray]:
    out = []
    for a, c in itertools.combinations(range(n), 2):
        for m in range(M):
            v = core.zeros((n, n, M), exact)
            v[a, c, m] = 1
            v[c, a, m] = -1
            out.append(v)
    return out


def frakC_generators(p: RParam) -> list[np.ndarray]:
    """Images of all first-order variations (δb, δu, δv) as vectors in R^{2Mn}."""
    n, M = p.n, p.M
    exact = p.exact
    gens = []
    for i in range(n):
        db = core.zeros(n, exact)
        db[i] = 1
        gens.append(assemble_uvb(p.u, p.v, db).vec())
    for m in range(M):
        du = core.zeros(M, exact)
        du[m] = 1
        gens.append(assemble_uvb(du, core.zeros((n, n, M), exact), p.b).vec())
    for dv in _antisym_basis(n, M, exact):
        gens.append(assemble_uvb(core.zeros(M, exact), dv, p.b).vec())
    return gens


def tangent_frakC(p: RParam, tol: float | None = None) -> core.Subspace:
    """The tangent space of ℛ at p; its dimension is n(M+1) − 1."""
    if not in_R_circ(p):
        raise ValueError("parameter is not in ℛ°")
    gens = frakC_generators(p)
    return core.row_space(np.vstack(gens), None if p.exact else tol)


def frakC_dim(M: int, n: int) -> int:
    return n * (M + 1) - 1


def random_rparam(rng: np.random.Generator, M: int, n: int, exact: bool = True,
                  bound: int = 5) -> RParam:
    """A random element with integer (exact) or Gaussian (float) data."""
    if exact:
        b = rng.integers(-bound, bound + 1, n)
        while not b.any():
            b = rng.integers(-bound, bound + 1, n)
        u = rng.integers(-bound, bound + 1, M)
        ent = {(a, c): rng.integers(-bound, bound + 1, M)
               for a, c in itertools.combinations(range(n), 2)}
        return RParam.make([Fraction(int(x)) for x in b], [Fraction(int(x)) for x in u],
                           {k: [Fraction(int(x)) for x in w] for k, w in ent.items()}, exact=True)
    b = rng.normal(size=n)
    b /= np.linalg.norm(b)
    ent = {(a, c): rng.normal(size=M) for a, c in itertools.combinations(range(n), 2)}
    return RParam.make(b, rng.normal(size=M), ent, exact=False)
