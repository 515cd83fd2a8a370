"""Polyconvex energies, the inequality system and T_N extension machinery.

The energy is ``F(X) = ε|X|²/2 + δ G(X̃)`` with ``X̃`` the vector of all
minors of X and G a maximum of affine functions.  A certificate for a
configuration consists of numbers ``c_i`` and coefficients ``d_i`` on the
minors of order at least two such that every value of the inequality
system is negative.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import core
from .exterior import PairPoint, from_pair, hodge, to_pair
from .rconn import RParam, assemble
from .tnconfig import (TNConfig, check_nondegenerate, check_wild, endpoints)

MinorIndex = tuple[int, tuple[int, ...], tuple[int, ...]]

# ---------------------------------------------------------------------------
# minors
# ---------------------------------------------------------------------------


def minor_indices(M: int, n: int, kmin: int = 1) -> list[MinorIndex]:
    """Order: k, then row set I, then column set A (both lexicographic)."""
    out = []
    for k in range(kmin, min(M, n) + 1):
        for I in itertools.combinations(range(M), k):
            for A in itertools.combinations(range(n), k):
                out.append((k, I, A))
    return out


def minors_length(M: int, n: int) -> int:
    return sum(math.comb(n, k) * math.comb(M, k) for k in range(1, min(M, n) + 1))


@dataclass(frozen=True)
class MinorsVec:
    M: int
    n: int
    values: np.ndarray

    @property
    def index(self) -> list[MinorIndex]:
        return minor_indices(self.M, self.n)

    def __getitem__(self, key: MinorIndex):
        return self.values[self.index.index(key)]


def _submatrix(X: np.ndarray, I, A) -> np.ndarray:
    return X[np.ix_(list(I), list(A))]


def minors(X: np.ndarray) -> MinorsVec:
    X = np.asarray(X)
    M, n = X.shape
    vals = [core.det(_submatrix(X, I, A)) if k > 1 else X[I[0], A[0]]
            for k, I, A in minor_indices(M, n)]
    arr = np.array(vals, dtype=object if core.is_exact(X) else float)
    return MinorsVec(M, n, arr)


def _cofactor(S: np.ndarray) -> np.ndarray:
    k = S.shape[0]
    exact = core.is_exact(S)
    C = core.zeros((k, k), exact)
    if k == 1:
        C[0, 0] = 1
        return C
    for i in range(k):
        for j in range(k):
            sub = np.delete(np.delete(S, i, 0), j, 1)
            C[i, j] = (-1) ** (i + j) * core.det(sub)
    return C


def minors_grad(X: np.ndarray, k: int, I: Sequence[int], A: Sequence[int]) -> np.ndarray:
    """Gradient of X ↦ det X_{I,A}: the cofactor matrix placed on (I, A)."""
    X = np.asarray(X)
    M, n = X.shape
    I, A = tuple(I), tuple(A)
    if len(I) != k or len(A) != k or list(I) != sorted(set(I)) or list(A) != sorted(set(A)) \
            or any(not 0 <= i < M for i in I) or any(not 0 <= a < n for a in A):
        raise ValueError("bad index sets")
    G = core.zeros((M, n), core.is_exact(X))
    G[np.ix_(list(I), list(A))] = _cofactor(_submatrix(X, I, A))
    return G


def _det_remainder(Xi, Xj, k, I, A):
    """det X_j,IA − det X_i,IA − ⟨D det(X_i,IA), X_j − X_i⟩."""
    dj = core.det(_submatrix(Xj, I, A))
    di = core.det(_submatrix(Xi, I, A))
    g = minors_grad(Xi, k, I, A)
    return dj - di - core.dot(g, Xj - Xi)


# ---------------------------------------------------------------------------
# inequality systems
# ---------------------------------------------------------------------------


@dataclass
class IneqResult:
    values: list[list]
    form: str
    convention: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return len(self.values)

    def offdiag(self):
        return [(i, j, self.values[i][j]) for i in range(self.N) for j in range(self.N) if i != j]

    @property
    def n_negative(self) -> int:
        return sum(1 for _, _, v in self.offdiag() if v < 0)

    @property
    def passed(self) -> bool:
        return self.n_negative == self.N * (self.N - 1)

    @property
    def max_value(self):
        return max(v for _, _, v in self.offdiag())

    @property
    def margin(self):
        return -self.max_value

    def failing(self) -> list[tuple[int, int, object]]:
        return [(i + 1, j + 1, v) for i, j, v in self.offdiag() if not v < 0]

    def to_json(self) -> dict:
        return {
            "form": self.form, "passed": self.passed, "n_negative": self.n_negative,
            "n_total": self.N * (self.N - 1), "margin": core.scalar_to_json(self.margin),
            "failing": [[i, j, core.scalar_to_json(v)] for i, j, v in self.failing()[:50]],
            "convention": self.convention,
        }


def ineq_value_general(Xi, Xj, Yi, ci, cj, di: dict) -> object:
    v = ci - cj + core.dot(Yi, Xj - Xi)
    for (k, I, A), coef in di.items():
        if coef != 0:
            v = v + coef * _det_remainder(Xi, Xj, k, I, A)
    return v


def ineq_value_app2d(Xi, Xj, Yi, ci, cj, di) -> object:
    J = core.J_matrix(core.is_exact(Xi))
    D = Xi - Xj
    return ci - cj + di * core.det2(D) + core.dot(D, Yi.dot(J))


MINOR_CONVENTIONS = ("delsign", "del", "keep", "keepT")
_PAIRS3 = ((0, 1), (0, 2), (1, 2))


def minor2_3d(D: np.ndarray, k: int, l: int, convention: str):
    """The 2×2 minor labelled (k, ℓ) of a 3×3 matrix (0-based labels)."""
    if convention in ("del", "delsign"):
        r = [x for x in range(3) if x != k]
        s = [x for x in range(3) if x != l]
        v = D[r[0], s[0]] * D[r[1], s[1]] - D[r[0], s[1]] * D[r[1], s[0]]
        return v * (-1) ** (k + l) if convention == "delsign" else v
    if convention == "keep":
        r, s = _PAIRS3[k], _PAIRS3[l]
    elif convention == "keepT":
        r, s = _PAIRS3[l], _PAIRS3[k]
    else:
        raise ValueError(f"unknown minor convention {convention}")
    return D[r[0], s[0]] * D[r[1], s[1]] - D[r[0], s[1]] * D[r[1], s[0]]


def ineq_value_app3d(Xi, Xj, Yi, ci, cj, di, mi, convention="delsign", eval_at="i"):
    D = Xj - Xi
    v = ci - cj + core.dot(Yi, D)
    for k in range(3):
        for l in range(3):
            coef = di[3 * k + l]
            if coef != 0:
                v = v + coef * minor2_3d(D, k, l, convention)
    if mi != 0:
        Xe = Xi if eval_at == "i" else Xj
        grad = _cofactor(Xe)
        v = v + mi * (core.det(Xj) - core.det(Xi) - core.dot(grad, D))
    return v


def check_ineq_system(X: Sequence[np.ndarray], Y: Sequence[np.ndarray], c: Sequence, d: Sequence,
                      form: str = "general", m: Sequence | None = None,
                      convention: str = "delsign", eval_at: str = "i") -> IneqResult:
    """Evaluate every inequality value; the system passes iff all i≠j are < 0.

    ``general``: ``d[i]`` maps minor indices (k ≥ 2) to coefficients and
    ``Y`` are the Ŷ-blocks.  ``app2d``: scalar ``d[i]`` and the 2×2 Y
    blocks in the J-rotated convention.  ``app3d``: ``d[i]`` has 9 entries
    labelled (k, ℓ) row-major, ``m`` the 3×3 determinant coefficients.
    """
    N = len(X)
    if not (len(Y) == len(c) == len(d) == N):
        raise ValueError("inconsistent lengths")
    vals = [[0] * N for _ in range(N)]
    for i in range(N):
        for j in range(N):
            if i == j:
                continue
            if form == "general":
                vals[i][j] = ineq_value_general(X[i], X[j], Y[i], c[i], c[j], d[i])
            elif form == "app2d":
                vals[i][j] = ineq_value_app2d(X[i], X[j], Y[i], c[i], c[j], d[i])
            elif form == "app3d":
                if m is None:
                    raise ValueError("app3d needs the m coefficients")
                vals[i][j] = ineq_value_app3d(X[i], X[j], Y[i], c[i], c[j], d[i], m[i],
                                              convention, eval_at)
            else:
                raise ValueError(f"unknown form {form}")
    conv = {"minor": convention, "eval_at": eval_at} if form == "app3d" else {}
    return IneqResult(vals, form, conv)


def detect_app3d(X, Y_app, c, d, m) -> tuple[IneqResult, list[dict]]:
    """Try the minor labellings, both gradient points and both Y signs.

    Returns the best result (most negative values) and a summary row per
    convention tried.
    """
    rows = []
    best = None
    for conv in MINOR_CONVENTIONS:
        for ev in ("i", "j"):
            for ys in (-1, 1):
                Yh = [ys * y for y in Y_app]
                r = check_ineq_system(X, Yh, c, d, "app3d", m, conv, ev)
                r.convention["y_sign"] = ys
                rows.append({"minor": conv, "eval_at": ev, "y_sign": ys,
                             "n_negative": r.n_negative})
                key = (r.n_negative, -float(r.max_value))
                if best is None or key > best[0]:
                    best = (key, r)
    return best[1], rows


# ---------------------------------------------------------------------------
# certificates attached to configurations
# ---------------------------------------------------------------------------


@dataclass
class PolyCert:
    """A configuration with inequality data (c_i, d_i) in the general form."""

    config: TNConfig
    c: list
    d: list  # list of dict MinorIndex -> coefficient

    def to_float(self) -> "PolyCert":
        return PolyCert(self.config.to_float(), [float(x) for x in self.c],
                        [{k: float(v) for k, v in di.items()} for di in self.d])

    def check(self) -> IneqResult:
        Z = endpoints(self.config)
        return check_ineq_system([z.X for z in Z], [z.Y for z in Z], self.c, self.d, "general")

    def to_json(self) -> dict:
        return {
            "v": 1, "config": self.config.to_json(),
            "c": [core.scalar_to_json(x) for x in self.c],
            "d": [[[k, [i + 1 for i in I], [a + 1 for a in A], core.scalar_to_json(v)]
                   for (k, I, A), v in sorted(di.items())] for di in self.d],
        }

    @classmethod
    def from_json(cls, data: dict) -> "PolyCert":
        cfg = TNConfig.from_json(data["config"])
        exact = cfg.exact
        c = [core.scalar_from_json(x, exact) for x in data["c"]]
        d = [{(k, tuple(i - 1 for i in I), tuple(a - 1 for a in A)): core.scalar_from_json(v, exact)
              for k, I, A, v in di} for di in data["d"]]
        return cls(cfg, c, d)


# ---------------------------------------------------------------------------
# the energy
# ---------------------------------------------------------------------------


@dataclass
class Piece:
    c: object
    B: np.ndarray
    anchor: np.ndarray

    def value(self, xt: np.ndarray):
        return self.c + core.dot(self.B, xt - self.anchor)


@dataclass
class PolyF:
    epsilon: object
    delta: object
    pieces: list[Piece]
    M: int
    n: int

    def G(self, xt: np.ndarray):
        return max(p.value(xt) for p in self.pieces)

    def active(self, X: np.ndarray) -> list[int]:
        xt = minors(X).values
        vals = [p.value(xt) for p in self.pieces]
        top = max(vals)
        return [i for i, v in enumerate(vals) if v == top]

    def F(self, X: np.ndarray):
        return self.epsilon * core.dot(X, X) / 2 + self.delta * self.G(minors(X).values)

    def DF(self, X: np.ndarray, piece: int | None = None) -> np.ndarray:
        """Gradient on the region where ``piece`` is the active affine part."""
        if piece is None:
            act = self.active(X)
            if len(act) != 1:
                raise ValueError("kink at anchor")
            piece = act[0]
        B = self.pieces[piece].B
        out = self.epsilon * X
        for coef, (k, I, A) in zip(B, minor_indices(self.M, self.n)):
            if coef != 0:
                out = out + (self.delta * coef) * minors_grad(X, k, I, A)
        return out

    def to_json(self) -> dict:
        return {
            "v": 1, "epsilon": core.scalar_to_json(self.epsilon),
            "delta": core.scalar_to_json(self.delta), "M": self.M, "n": self.n,
            "pieces": [{"c": core.scalar_to_json(p.c), "B": core.mat_to_json(p.B),
                        "anchor": core.mat_to_json(p.anchor)} for p in self.pieces],
        }

    @classmethod
    def from_json(cls, data: dict) -> "PolyF":
        exact = isinstance(data["epsilon"], str)
        pieces = [Piece(core.scalar_from_json(p["c"], exact), core.mat_from_json(p["B"], exact),
                        core.mat_from_json(p["anchor"], exact)) for p in data["pieces"]]
        return cls(core.scalar_from_json(data["epsilon"], exact),
                   core.scalar_from_json(data["delta"], exact), pieces, data["M"], data["n"])


def build_G(anchors: Sequence[np.ndarray], c: Sequence, B: Sequence[np.ndarray]) -> list[Piece]:
    """Pieces c_i + ⟨B_i, X̃ − X̃_i⟩ with G(X̃_j) = c_j uniquely attained."""
    N = len(anchors)
    bad = []
    for i in range(N):
        for j in range(N):
            if i != j and not c[j] > c[i] + core.dot(B[i], anchors[j] - anchors[i]):
                bad.append((i + 1, j + 1))
    if bad:
        raise ValueError(f"strict piece inequalities violated at {bad[:10]}")
    return [Piece(c[i], np.asarray(B[i]), np.asarray(anchors[i])) for i in range(N)]


def solve_d0(X: Sequence[np.ndarray], Yh: Sequence[np.ndarray], d: Sequence[dict], epsilon, delta,
             F0_grad=None) -> list[np.ndarray]:
    """B_i = (d₁^i, d^i) with δ d₁^i = Ŷ^i − εX^i − DF₀(X^i) − δ Σ d^i D det."""
    if delta == 0:
        raise ValueError("δ must be nonzero")
    out = []
    for Xi, Yi, di in zip(X, Yh, d):
        M, n = Xi.shape
        rhs = Yi - epsilon * Xi
        if F0_grad is not None:
            rhs = rhs - F0_grad(Xi)
        for (k, I, A), coef in di.items():
            if coef != 0:
                rhs = rhs - (delta * coef) * minors_grad(Xi, k, I, A)
        d1 = (rhs / delta).ravel()
        higher = [di.get(idx, 0) for idx in minor_indices(M, n, 2)]
        exact = core.is_exact(Xi)
        B = np.array(list(d1) + [Fraction(x) if exact else float(x) for x in higher],
                     dtype=object if exact else float)
        out.append(B)
    return out


def max_epsilon(X: Sequence[np.ndarray], res: IneqResult):
    """Largest ε for which V_ij + ε|X_j − X_i|²/2 < 0 still holds for all pairs."""
    best = None
    for i, j, v in res.offdiag():
        D = X[j] - X[i]
        nn = core.dot(D, D)
        if nn == 0:
            continue
        bound = -2 * v / nn
        best = bound if best is None or bound < best else best
    return best


def auto_epsilon(X: Sequence[np.ndarray], res: IneqResult):
    """Half the admissible bound, rounded down to a power of two in exact mode."""
    bound = max_epsilon(X, res)
    if bound is None:
        return Fraction(1) if core.is_exact(X[0]) else 1.0
    if not core.is_exact(X[0]):
        return bound / 2
    e = Fraction(1)
    while e >= bound / 2:
        e /= 2
    while 2 * e < bound / 2:
        e *= 2
    return e


def build_F(X: Sequence[np.ndarray], Yh: Sequence[np.ndarray], c: Sequence, d: Sequence[dict],
            epsilon=None, delta=1) -> PolyF:
    """F from inequality data: G coefficients are the data divided by δ.

    The pieces stay strict iff V_ij + ε|X_j − X_i|²/2 < 0 for all pairs; with
    ``epsilon=None`` half of the largest admissible ε is used.
    """
    res = check_ineq_system(X, Yh, c, d, "general")
    if not res.passed:
        raise ValueError(f"inequality system fails at {res.failing()[:5]}")
    if epsilon is None:
        epsilon = auto_epsilon(X, res)
    dG = [{k: v / delta for k, v in di.items()} for di in d]
    B = solve_d0(X, Yh, dG, epsilon, delta)
    anchors = [minors(x).values for x in X]
    cG = [(c[i] - epsilon * core.dot(X[i], X[i]) / 2) / delta for i in range(len(X))]
    pieces = build_G(anchors, cG, B)
    M, n = X[0].shape
    return PolyF(epsilon, delta, pieces, M, n)


@dataclass
class KFReport:
    per_endpoint: list[bool]
    residuals: list

    @property
    def passed(self) -> bool:
        return all(self.per_endpoint)

    def to_json(self) -> dict:
        return {"passed": self.passed, "per_endpoint": self.per_endpoint,
                "residuals": [core.scalar_to_json(r) for r in self.residuals]}


def check_KF(Z: Sequence[PairPoint], F: PolyF, tol: float = 0.0) -> KFReport:
    """Compare Y with the Hodge image of Σ_α ∂_α F dx^α at each endpoint."""
    ok, res = [], []
    for z in Z:
        act = F.active(z.X)
        if len(act) != 1:
            raise ValueError("kink at anchor")
        G = F.DF(z.X, act[0])
        w1, _ = from_pair(PairPoint(G, core.zeros(G.shape, core.is_exact(G))))
        star = hodge(w1)
        _, y = from_pair(PairPoint(z.X, z.Y))
        Ypred = to_pair(w1, star).Y  # the ⋆dx^α coefficients of ⋆(DF)
        diff = Ypred - z.Y
        if core.is_exact(diff):
            r = max(abs(x) for x in diff.ravel())
            ok.append(r <= tol)
        else:
            r = float(np.abs(diff).max())
            ok.append(r <= tol)
        res.append(r)
    return KFReport(ok, res)


def hat_from_app2d(Y_app: np.ndarray) -> np.ndarray:
    """Ŷ = −Y·J for the 2×2 J-rotated convention."""
    return -Y_app.dot(core.J_matrix(core.is_exact(Y_app)))


def app2d_from_hat(Yh: np.ndarray) -> np.ndarray:
    return Yh.dot(core.J_matrix(core.is_exact(Yh)))


# ---------------------------------------------------------------------------
# Legendre–Hadamard estimate
# ---------------------------------------------------------------------------


def _sphere_samples(dim: int, count: int, rng: np.random.Generator) -> np.ndarray:
    if dim == 1:
        return np.array([[1.0]])
    if dim == 2:
        t = np.linspace(0, np.pi, count, endpoint=False)
        return np.stack([np.cos(t), np.sin(t)], 1)
    pts = rng.normal(size=(count, dim))
    pts = np.vstack([np.eye(dim), pts])
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


@dataclass
class LHEstimate:
    estimate: float
    xi: np.ndarray
    eta: np.ndarray
    grid: int
    target: float | None

    @property
    def meets_target(self) -> bool | None:
        return None if self.target is None else self.estimate >= self.target


def check_LH(H: np.ndarray, M: int, n: int, lam_target: float | None = None, grid: int = 64,
             seed: int = 0) -> LHEstimate:
    """min over unit ξ, η of ⟨H(ξ⊗η), ξ⊗η⟩ on a sample grid plus one refinement.

    This is an estimate from above of the true minimum, not a certificate.
    """
    H = np.asarray(H, dtype=float)
    rng = np.random.default_rng(seed)
    xs, es = _sphere_samples(M, grid, rng), _sphere_samples(n, grid, rng)

    def q(x, e):
        v = np.outer(x, e).ravel()
        return float(v @ H @ v)

    best = min(((q(x, e), x, e) for x in xs for e in es), key=lambda t: t[0])
    val, x, e = best
    step = np.pi / grid
    for _ in range(60):
        improved = False
        for trial in range(8):
            dx = rng.normal(size=M) * step
            de = rng.normal(size=n) * step
            x2 = (x + dx) / np.linalg.norm(x + dx)
            e2 = (e + de) / np.linalg.norm(e + de)
            v2 = q(x2, e2)
            if v2 < val:
                val, x, e, improved = v2, x2, e2, True
        if not improved:
            step /= 2
    return LHEstimate(val, x, e, grid, lam_target)


# ---------------------------------------------------------------------------
# lifting 2×2 configurations
# ---------------------------------------------------------------------------


def lift_param(p: RParam, M: int, n: int) -> RParam:
    if (p.M, p.n) != (2, 2):
        raise ValueError("lift expects 2×2 steps")
    exact = p.exact
    b = core.zeros(n, exact)
    b[:2] = p.b
    u = core.zeros(M, exact)
    u[:2] = p.u
    v = core.zeros((n, n, M), exact)
    v[0, 1, :2] = p.v[0, 1]
    v[1, 0, :2] = p.v[1, 0]
    return RParam(b, u, v)


def lift(c2: TNConfig, M: int, n: int) -> TNConfig:
    if (c2.M, c2.n) != (2, 2):
        raise ValueError("invalid source: lift expects a configuration in (M, n) = (2, 2)")
    if M < 2 or n < 2:
        raise ValueError("M, n must be at least 2")
    exact = c2.exact
    P = PairPoint.zero(M, n, exact)
    X, Y = P.X.copy(), P.Y.copy()
    X[:2, :2] = c2.P.X
    Y[:2, :2] = c2.P.Y
    return TNConfig(PairPoint(X, Y), [lift_param(s, M, n) for s in c2.steps], c2.kappas)


TOPLEFT: MinorIndex = (2, (0, 1), (0, 1))


def lift_cert(cert: PolyCert, M: int, n: int) -> PolyCert:
    cfg = lift(cert.config, M, n)
    d = [{TOPLEFT: di.get(TOPLEFT, 0)} for di in cert.d]
    return PolyCert(cfg, list(cert.c), d)


# ---------------------------------------------------------------------------
# rank-one splitting
# ---------------------------------------------------------------------------


def kappa_lambda(kappa) -> float:
    """λ solving κ/λ = (κ − λ)/(1 − λ), i.e. λ = κ − √(κ² − κ)."""
    k = float(kappa)
    return k - math.sqrt(k * k - k)


def split_kappas(kappa, lam):
    """Multipliers for the two halves: κ/λ and (κ − λ)/(1 − λ)."""
    return kappa / lam, (kappa - lam) / (1 - lam)


def exact_sqrt(x: Fraction) -> Fraction:
    x = Fraction(x)
    rn, rd = math.isqrt(x.numerator), math.isqrt(x.denominator)
    if rn * rn != x.numerator or rd * rd != x.denominator:
        raise ValueError("δ must be the square of a rational in exact mode")
    return Fraction(rn, rd)


@dataclass
class SplitResult:
    C1: RParam
    C2: RParam
    diagnostics: dict


def _assemble_b_a(b, u, v) -> PairPoint:
    return assemble(RParam(b, u, v))


def rank_one_split(C: RParam, abar_u, abar_v, bbar, xi, lam, delta) -> SplitResult:
    """Write C + δ·assemble(ā, b̄ + δ²ξ) as C̃¹ + C̃² with C̃¹ ≈ λC, C̃² ≈ (1−λ)C."""
    exact = C.exact
    mode = core.Mode.EXACT if exact else core.Mode.FLOAT
    b, u, v = C.b, C.u, C.v
    if not exact:
        nb = float(np.linalg.norm(core.to_float(b)))
        b, u, v = core.to_float(b) / nb, core.to_float(u) * nb, core.to_float(v) * nb
    bbar = core.array(bbar, mode)
    xi = core.array(xi, mode) if xi is not None else core.zeros(len(b), exact)
    abar_u, abar_v = core.array(abar_u, mode), core.array(abar_v, mode)
    lam = Fraction(lam) if exact else float(lam)
    delta = Fraction(delta) if exact else float(delta)
    if not 0 < lam < 1:
        raise ValueError("λ must lie in (0, 1)")
    r = exact_sqrt(delta) if exact else math.sqrt(delta)
    B2 = core.dot(b, b)
    p = bbar - (core.dot(bbar, b) / B2) * b
    if core.is_zero(p, 0 if exact else 1e-14):
        raise ValueError("p = 0")
    target = bbar + delta ** 2 * xi
    beta0 = core.dot(target, b) / B2
    q = target - beta0 * b
    sigma = -r * lam / (1 - lam)
    bh1, bh2 = b + r * q, b + sigma * q
    y1 = (delta - sigma * delta * beta0) / (r - sigma)
    y2 = delta * beta0 - y1
    x1, x2 = lam, 1 - lam
    u1, v1 = x1 * u + y1 * abar_u, x1 * v + y1 * abar_v
    u2, v2 = x2 * u + y2 * abar_u, x2 * v + y2 * abar_v
    if exact:
        C1, C2 = RParam(bh1, u1, v1), RParam(bh2, u2, v2)
        N1 = N2 = None
        eta1, eta2, mu1, mu2 = x1, x2, y1, y2
    else:
        N1, N2 = float(np.linalg.norm(bh1)), float(np.linalg.norm(bh2))
        C1 = RParam(bh1 / N1, u1 * N1, v1 * N1)
        C2 = RParam(bh2 / N2, u2 * N2, v2 * N2)
        eta1, eta2, mu1, mu2 = x1 * N1, x2 * N2, y1 * N1, y2 * N2
    Cp = _assemble_b_a(b, u, v)
    Cbar = _assemble_b_a(target, abar_u, abar_v)
    lead = _assemble_b_a(b, abar_u, abar_v).scale(1 - lam) + _assemble_b_a(p, u, v).scale(lam)
    P1, P2 = assemble(C1), assemble(C2)
    resid = Cp + Cbar.scale(delta) - P1 - P2
    diag = {
        "p": p, "q": q, "eta1": eta1, "eta2": eta2, "mu1": mu1, "mu2": mu2,
        "sqrt_delta": r, "leading": lead,
        "lead_residual_1": (P1 - Cp.scale(lam) - lead.scale(r)).norm() / float(r),
        "lead_residual_2": (P2 - Cp.scale(1 - lam) + lead.scale(r)).norm() / float(r),
        "decomposition_residual": resid.norm(),
        "decomposition_exact": exact and resid == PairPoint.zero(resid.M, resid.n, True),
    }
    return SplitResult(C1, C2, diag)


# ---------------------------------------------------------------------------
# extension T_N -> T_{N+2}
# ---------------------------------------------------------------------------


@dataclass
class Direction:
    abar_u: np.ndarray
    abar_v: np.ndarray
    bbar: np.ndarray


def _unit(v) -> np.ndarray:
    v = core.to_float(np.asarray(v))
    return v / np.linalg.norm(v)


def choose_direction(c: TNConfig, i1: int, i2: int, exact: bool | None = None,
                     max_den: int = 1000) -> Direction:
    """b̄ from the rotated b's and ā″ from the normalized a′'s; ā′ = 0."""
    exact = c.exact if exact is None else exact
    s1, s2 = c.steps[i1 - 1], c.steps[i2 - 1]
    b1, b2 = _unit(core.to_float(s1.b)[:2]), _unit(core.to_float(s2.b)[:2])
    a1, a2 = core.to_float(s1.u)[:2], core.to_float(s2.u)[:2]
    if abs(b1[0] * b2[1] - b1[1] * b2[0]) < 1e-12:
        raise ValueError(f"b_{i1}, b_{i2} are linearly dependent")
    if abs(np.dot(b1, b2)) < 1e-12:
        raise ValueError(f"b_{i1}, b_{i2} are orthogonal")
    if abs(a1[0] * a2[1] - a1[1] * a2[0]) < 1e-12:
        raise ValueError(f"a'_{i1}, a'_{i2} are linearly dependent")
    rot = lambda w: np.array([-w[1], w[0]])
    bb2 = (rot(b1) + rot(b2)) / np.linalg.norm(b1 + b2)
    a2d = -a1 / np.linalg.norm(a1) + a2 / np.linalg.norm(a2)
    n, M = c.n, c.M
    bbar = np.zeros(n)
    bbar[:2] = bb2
    av = np.zeros((n, n, M))
    av[0, 1, :2] = a2d
    av[1, 0, :2] = -a2d
    au = np.zeros(M)
    if exact:
        return Direction(core.to_exact(au), core.to_exact(av, max_den), core.to_exact(bbar, max_den))
    return Direction(au, av, bbar)


def _perp2(w):
    return np.array([-w[1], w[0]], dtype=w.dtype)


@dataclass
class ExtensionCheck:
    lhs1: object
    rhs1: object
    lhs2: object
    rhs2: object

    @property
    def passed(self) -> bool:
        return self.lhs1 > self.rhs1 and self.lhs2 < self.rhs2

    def as_tuple(self):
        return self.lhs1, self.rhs1, self.lhs2, self.rhs2, self.passed


def _ext_side(step: RParam, d_i, direction: Direction, rhs_sign: int):
    b = step.b
    exact = step.exact and core.is_exact(direction.bbar)
    if not exact:
        b = core.to_float(b)
    bbar = direction.bbar if exact else core.to_float(direction.bbar)
    au = direction.abar_u if exact else core.to_float(direction.abar_u)
    av = direction.abar_v if exact else core.to_float(direction.abar_v)
    u = step.u if exact else core.to_float(step.u)
    v = step.v if exact else core.to_float(step.v)
    p = bbar - (core.dot(bbar, b) / core.dot(b, b)) * b
    factor = core.dot(bbar, p) / core.dot(p, p)
    n = len(b)
    S = 0
    for a in range(n):
        for be in range(n):
            S = S + (core.dot(v[a, be], au) - core.dot(av[a, be], u)) * p[be] * b[a]
    lhs = factor * S
    rhs = rhs_sign * 2 * d_i * factor * core.dot(_perp2(u[:2]), au[:2]) * core.dot(_perp2(p[:2]), b[:2])
    return lhs, rhs


def check_extension_conditions(cert: PolyCert, i1: int, i2: int, direction: Direction,
                               rhs_sign: int = 1) -> ExtensionCheck:
    """The two strict inequalities deciding whether a splice at (i1, i2) works.

    ``rhs_sign = +1`` uses det(a⊗b + c⊗d) = +⟨a^⊥,c⟩⟨b^⊥,d⟩; ``-1``
    reproduces the opposite sign convention.  Both agree when ā′ = 0.
    """
    c = cert.config
    d1 = cert.d[i1 - 1].get(TOPLEFT, 0)
    d2 = cert.d[i2 - 1].get(TOPLEFT, 0)
    l1, r1 = _ext_side(c.steps[i1 - 1], d1, direction, rhs_sign)
    l2, r2 = _ext_side(c.steps[i2 - 1], d2, direction, rhs_sign)
    return ExtensionCheck(l1, r1, l2, r2)


@dataclass
class ExtendResult:
    cert: PolyCert
    diagnostics: dict


def tilt_abar_u(cert: PolyCert, i1: int, i2: int, direction: Direction, tau0: float = 1e-2,
                max_halvings: int = 40) -> tuple[Direction, object]:
    """Give ā′ a small nonzero value so the split halves get independent u's.

    With ā′ = 0 both halves of a split carry multiples of the same u.  The
    tilt direction w avoids being parallel to u^{i1} and u^{i2}; its size τ is
    halved until the two extension inequalities still hold strictly.
    """
    c = cert.config
    exact = c.exact and core.is_exact(direction.bbar)
    M = c.M
    u1 = _unit(c.steps[i1 - 1].u)
    u2 = _unit(c.steps[i2 - 1].u)

    def parallel(w, u):
        w = w / np.linalg.norm(w)
        return abs(abs(float(np.dot(w, u))) - 1) < 1e-9

    cands = []
    for k in range(M):
        e = np.zeros(M)
        e[k] = 1.0
        cands.append(e)
    if M >= 2:
        p1 = np.zeros(M)
        p1[:2] = [-u1[1], u1[0]]
        p2 = np.zeros(M)
        p2[:2] = [-u2[1], u2[0]]
        cands = [p1, p2, p1 + p2, p1 - p2] + cands
    cands = [w for w in cands if np.linalg.norm(w) > 1e-9 and not parallel(w, u1)
             and not parallel(w, u2)]
    if not cands:
        raise ValueError("no tilt direction for ā′")
    tau = Fraction(1, 100) if exact else tau0
    for _ in range(max_halvings):
        for w in cands:
            for sgn in (1, -1):
                wv = core.to_exact(w / np.linalg.norm(w), 1000) if exact else w / np.linalg.norm(w)
                trial = Direction(sgn * tau * wv, direction.abar_v, direction.bbar)
                if check_extension_conditions(cert, i1, i2, trial).passed:
                    return trial, tau
        tau = tau / 2
    raise ValueError("extension conditions fail for every tilt of ā′")


def _rational_lambda(kappa, max_den: int = 1000) -> Fraction:
    lam = Fraction(kappa_lambda(kappa)).limit_denominator(max_den)
    return lam


def _rotate_xi(xi, c: TNConfig, theta: float, exact: bool):
    if xi is None or theta == 0:
        return xi
    unwild = [b for b in range(1, c.n + 1) if not check_wild(c, b)]
    xf = core.to_float(np.asarray(xi))
    xf = xf / np.linalg.norm(xf)
    w = np.zeros(c.n)
    for b in unwild:
        w[b - 1] = 1.0
    w = w - np.dot(w, xf) * xf
    if np.linalg.norm(w) < 1e-12:
        return xi
    w /= np.linalg.norm(w)
    out = math.cos(theta) * xf + math.sin(theta) * w
    return core.to_exact(out, 10**6) if exact else out


def extend(cert: PolyCert, i1: int, i2: int, direction: Direction | None = None, xi=None,
           delta=None, lam1=None, lam2=None, theta: float = 0.0, max_j: int = 24,
           min_j: int = 1) -> ExtendResult:
    """Splice two pairs of steps in, producing a T_{N+2} certificate.

    δ runs through (1/2^j)² for j = min_j, min_j+1, ... until every check
    passes (or ``delta`` fixes it).
    """
    c = cert.config
    if not 1 <= i1 < i2 <= c.N:
        raise ValueError("need 1 <= i1 < i2 <= N")
    exact = c.exact
    if direction is None:
        direction = choose_direction(c, i1, i2, exact)
    ext = check_extension_conditions(cert, i1, i2, direction)
    if not ext.passed:
        raise ValueError(f"extension conditions fail: {ext.as_tuple()}")
    tau = None
    if core.is_zero(direction.abar_u):
        direction, tau = tilt_abar_u(cert, i1, i2, direction)
        ext = check_extension_conditions(cert, i1, i2, direction)
    base = cert.check()
    if not base.passed:
        raise ValueError("the input certificate does not satisfy its inequality system")
    gamma0 = base.margin
    xi = _rotate_xi(xi, c, theta, exact)
    k1, k2 = c.kappas[i1 - 1], c.kappas[i2 - 1]
    if exact:
        lam1 = Fraction(lam1) if lam1 is not None else _rational_lambda(k1)
        lam2 = Fraction(lam2) if lam2 is not None else _rational_lambda(k2)
    else:
        lam1 = float(lam1) if lam1 is not None else kappa_lambda(k1)
        lam2 = float(lam2) if lam2 is not None else kappa_lambda(k2)
    deltas = [delta] if delta is not None else [
        Fraction(1, 2 ** j) ** 2 if exact else (0.5 ** j) ** 2 for j in range(min_j, max_j + 1)]
    tried = []
    fcert = cert.to_float() if exact else None
    fdir = Direction(*(core.to_float(x) for x in (direction.abar_u, direction.abar_v,
                                                   direction.bbar))) if exact else None
    fxi = core.to_float(np.asarray(xi)) if exact and xi is not None else None
    for dl in deltas:
        if exact:
            # a float pass only rules a δ out when the failure is clear-cut
            _, fd = _extend_once(fcert, i1, i2, fdir, fxi, float(dl), float(lam1), float(lam2),
                                 float(gamma0))
            mv = fd.get("max_value")
            if not fd["ok"] and (mv is None or mv > 1e-6 * float(gamma0)):
                tried.append({"delta": core.scalar_to_json(dl), "ok": False,
                              "reason": "float screen: " + fd.get("reason", "")})
                continue
        out = _extend_once(cert, i1, i2, direction, xi, dl, lam1, lam2, gamma0)
        tried.append({"delta": core.scalar_to_json(dl), "ok": out[1]["ok"],
                      "reason": out[1].get("reason", "")})
        if out[1]["ok"]:
            diag = out[1]
            diag["tried"] = tried
            diag["abar_u_scale"] = tau
            diag["extension_check"] = [core.scalar_to_json(x) for x in ext.as_tuple()[:4]]
            return ExtendResult(out[0], diag)
    raise ValueError(f"δ too large for strictness margins (tried {len(tried)} values)")


def _extend_once(cert, i1, i2, direction, xi, dl, lam1, lam2, gamma0):
    c = cert.config
    neg_u, neg_v = -direction.abar_u, -direction.abar_v
    try:
        s1 = rank_one_split(c.steps[i1 - 1], direction.abar_u, direction.abar_v,
                            direction.bbar, xi, lam1, dl)
        s2 = rank_one_split(c.steps[i2 - 1], neg_u, neg_v, direction.bbar, xi, lam2, dl)
    except ValueError as e:
        return None, {"ok": False, "reason": str(e)}
    k1, k2 = c.kappas[i1 - 1], c.kappas[i2 - 1]
    ka, kb = split_kappas(k1, lam1)
    kc, kd = split_kappas(k2, lam2)
    steps, kappas, cs, ds = [], [], [], []
    for i in range(1, c.N + 1):
        s, k, ci, di = c.steps[i - 1], c.kappas[i - 1], cert.c[i - 1], cert.d[i - 1]
        if i == i1:
            steps += [s1.C1, s1.C2]
            kappas += [ka, kb]
            cs += [ci, ci]
            ds += [dict(di), dict(di)]
        elif i == i2:
            steps += [s2.C1, s2.C2]
            kappas += [kc, kd]
            cs += [ci, ci]
            ds += [dict(di), dict(di)]
        else:
            steps.append(s)
            kappas.append(k)
            cs.append(ci)
            ds.append(dict(di))
    try:
        new = TNConfig(c.P, steps, kappas)
    except ValueError as e:
        return None, {"ok": False, "reason": str(e)}
    # new 0-based positions of the inserted second halves
    j1 = i1            # C̃^{i1+1}
    j2 = i2 + 1        # C̃^{i2+2}
    Z = endpoints(new)
    Xs, Ys = [z.X for z in Z], [z.Y for z in Z]

    def R(i, j):
        return ineq_value_general(Xs[i], Xs[j], Ys[i], 0, 0, ds[i])

    lo1, hi1 = R(j1 - 1, j1), -R(j1, j1 - 1)
    lo2, hi2 = R(j2 - 1, j2), -R(j2, j2 - 1)
    if not (lo1 < hi1 and lo2 < hi2):
        return None, {"ok": False, "reason": "empty γ interval"}
    g1, g2 = (lo1 + hi1) / 2, (lo2 + hi2) / 2
    cs[j1] = cs[j1] + g1
    cs[j2] = cs[j2] + g2
    newcert = PolyCert(new, cs, ds)
    res = newcert.check()
    inside = abs(g1) < gamma0 / 2 and abs(g2) < gamma0 / 2
    nd = check_nondegenerate(new)
    nd_ok = all(cond.passed for cond in nd.conditions if cond.name != "span")
    diag = {
        "ok": bool(res.passed and nd_ok), "delta": dl, "gamma": (g1, g2),
        "gamma_intervals": ((lo1, hi1), (lo2, hi2)), "gamma0": gamma0,
        "gamma_inside_half_margin": bool(inside), "margin": res.margin if res.passed else None,
        "max_value": res.max_value, "nondegenerate_except_span": nd_ok,
        "split1": s1.diagnostics, "split2": s2.diagnostics,
    }
    if not res.passed:
        diag["reason"] = "inequality system not strictly negative"
    elif not nd_ok:
        diag["reason"] = "nondegeneracy lost"
    return newcert, diag


def _span_complement(c: TNConfig):
    B = np.vstack([s.b for s in c.steps])
    ker = core.nullspace(B, None if c.exact else 1e-9)
    if ker.dim == 0:
        return None
    v = ker.basis[0]
    return v


def admissible_pairs(cert: PolyCert):
    c = cert.config
    for i1 in range(1, c.N + 1):
        for i2 in range(i1 + 1, c.N + 1):
            try:
                dirn = choose_direction(c, i1, i2)
            except ValueError:
                continue
            if check_extension_conditions(cert, i1, i2, dirn).passed:
                yield i1, i2, dirn


def extend_to(cert: PolyCert, target_n: int, first: tuple[int, int] | None = None,
              theta: float = 1e-2, max_j: int = 24) -> tuple[PolyCert, list[dict]]:
    """Apply extend until the configuration has at least ``target_n`` steps."""
    logs = []
    cur = cert
    while cur.config.N < target_n:
        xi = _span_complement(cur.config)
        if first is not None and not logs:
            candidates = [(first[0], first[1], None)]
        else:
            candidates = list(admissible_pairs(cur))
        last_err = None
        for i1, i2, dirn in candidates:
            try:
                r = extend(cur, i1, i2, dirn, xi=xi, theta=theta if xi is not None else 0.0,
                           max_j=max_j)
            except ValueError as e:
                last_err = e
                continue
            logs.append({"i1": i1, "i2": i2, "N": r.cert.config.N,
                         "delta": core.scalar_to_json(r.diagnostics["delta"]),
                         "margin": core.scalar_to_json(r.diagnostics["margin"])})
            cur = r.cert
            break
        else:
            raise ValueError(f"no admissible splice found: {last_err}")
    return cur, logs
