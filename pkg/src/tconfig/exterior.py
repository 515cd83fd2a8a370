"""Vector-valued exterior algebra on R^n and the matrix-pair identification.

Multi-indices are stored 0-based internally as strictly increasing tuples;
the JSON format uses 1-based indices.  A k-form is a dictionary from
multi-index to an R^M coefficient vector.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import core

Index = tuple[int, ...]


def perm_sign(seq: tuple[int, ...]) -> int:
    """Sign of the permutation sorting ``seq`` (distinct entries)."""
    sign = 1
    s = list(seq)
    for i in range(len(s)):
        for j in range(i + 1, len(s)):
            if s[i] > s[j]:
                sign = -sign
    return sign


def complement(idx: Index, n: int) -> Index:
    return tuple(i for i in range(n) if i not in idx)


def hodge_sign(idx: Index, n: int) -> int:
    """The sign c with ⋆dx^I = c·dx^{I^c}, fixed by dx^I ∧ ⋆dx^I = +vol."""
    return perm_sign(tuple(idx) + complement(idx, n))


def basis_indices(n: int, k: int) -> list[Index]:
    return list(itertools.combinations(range(n), k))


@dataclass
class VForm:
    """An R^M-valued constant-coefficient k-form on R^n."""

    n: int
    M: int
    k: int
    coeffs: dict[Index, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0 <= self.k <= self.n:
            raise ValueError(f"degree {self.k} outside [0, {self.n}]")
        clean: dict[Index, np.ndarray] = {}
        for idx, v in self.coeffs.items():
            idx = tuple(idx)
            if len(idx) != self.k or list(idx) != sorted(set(idx)) or any(
                    not 0 <= i < self.n for i in idx):
                raise ValueError(f"bad multi-index {idx} for degree {self.k}")
            v = np.asarray(v)
            if v.shape != (self.M,):
                raise ValueError(f"coefficient of {idx} must have length {self.M}")
            if not core.is_zero(v):
                clean[idx] = v
        self.coeffs = clean

    @property
    def exact(self) -> bool:
        return all(core.is_exact(v) for v in self.coeffs.values()) if self.coeffs else True

    def coeff(self, idx: Index) -> np.ndarray:
        v = self.coeffs.get(tuple(idx))
        if v is None:
            return core.zeros(self.M, self.exact)
        return v

    def items(self) -> Iterator[tuple[Index, np.ndarray]]:
        return iter(sorted(self.coeffs.items()))

    def _combine(self, other: "VForm", sgn: int) -> "VForm":
        if (self.n, self.M, self.k) != (other.n, other.M, other.k):
            raise ValueError("form shapes differ")
        out = dict(self.coeffs)
        for idx, v in other.coeffs.items():
            out[idx] = out[idx] + sgn * v if idx in out else sgn * v
        return VForm(self.n, self.M, self.k, out)

    def __add__(self, other: "VForm") -> "VForm":
        return self._combine(other, 1)

    def __sub__(self, other: "VForm") -> "VForm":
        return self._combine(other, -1)

    def scale(self, s) -> "VForm":
        return VForm(self.n, self.M, self.k, {i: s * v for i, v in self.coeffs.items()})

    def __neg__(self) -> "VForm":
        return self.scale(-1)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, VForm):
            return NotImplemented
        if (self.n, self.M, self.k) != (other.n, other.M, other.k):
            return False
        keys = set(self.coeffs) | set(other.coeffs)
        return all(core.is_zero(self.coeff(i) - other.coeff(i)) for i in keys)

    def allclose(self, other: "VForm", tol: float = 1e-12) -> bool:
        keys = set(self.coeffs) | set(other.coeffs)
        return all(core.norm(core.to_float(self.coeff(i) - other.coeff(i))) <= tol for i in keys)

    def to_json(self) -> dict:
        return {
            "n": self.n, "M": self.M, "k": self.k,
            "coeffs": [{"idx": [i + 1 for i in idx], "v": core.mat_to_json(v)}
                       for idx, v in self.items()],
        }

    @classmethod
    def from_json(cls, data: dict, exact: bool = True) -> "VForm":
        coeffs = {tuple(i - 1 for i in c["idx"]): core.mat_from_json(c["v"], exact)
                  for c in data["coeffs"]}
        return cls(data["n"], data["M"], data["k"], coeffs)


def hodge(f: VForm) -> VForm:
    out = {}
    for idx, v in f.coeffs.items():
        out[complement(idx, f.n)] = hodge_sign(idx, f.n) * v
    return VForm(f.n, f.M, f.n - f.k, out)


def wedge_basis(alpha: int, idx: Index) -> tuple[int, Index]:
    """dx^α ∧ dx^I = sign · dx^J with J sorted; sign 0 if α ∈ I."""
    if alpha in idx:
        return 0, idx
    before = sum(1 for i in idx if i < alpha)
    return (-1) ** before, tuple(sorted(idx + (alpha,)))


def wedge1(b, f: VForm) -> VForm:
    """Σ_α b_α dx^α ∧ f."""
    b = np.asarray(b)
    if b.shape != (f.n,):
        raise ValueError("b must have length n")
    if f.k >= f.n:
        raise ValueError("wedge1 needs degree at most n-1")
    out: dict[Index, np.ndarray] = {}
    for idx, v in f.coeffs.items():
        for alpha in range(f.n):
            if b[alpha] == 0:
                continue
            sgn, new = wedge_basis(alpha, idx)
            if sgn == 0:
                continue
            term = (sgn * b[alpha]) * v
            out[new] = out[new] + term if new in out else term
    return VForm(f.n, f.M, f.k + 1, out)


def star_basis(n: int, M: int, idx: Index, v) -> VForm:
    """The form v·⋆dx^I."""
    return hodge(VForm(n, M, len(idx), {tuple(idx): np.asarray(v)}))


@dataclass(frozen=True)
class PairPoint:
    """An element Z = (X, Y) of the paired space.

    ``X`` holds the coefficients of the 1-form part and ``Y`` the
    coefficients of the (n-1)-form part in the basis ⋆dx^1, ..., ⋆dx^n.
    Both are M×n matrices.
    """

    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self) -> None:
        if np.shape(self.X) != np.shape(self.Y) or np.ndim(self.X) != 2:
            raise ValueError("X and Y must be M×n matrices of the same shape")

    @property
    def M(self) -> int:
        return int(self.X.shape[0])

    @property
    def n(self) -> int:
        return int(self.X.shape[1])

    @property
    def exact(self) -> bool:
        return core.is_exact(self.X) and core.is_exact(self.Y)

    @classmethod
    def zero(cls, M: int, n: int, exact: bool = True) -> "PairPoint":
        return cls(core.zeros((M, n), exact), core.zeros((M, n), exact))

    def __add__(self, o: "PairPoint") -> "PairPoint":
        return PairPoint(self.X + o.X, self.Y + o.Y)

    def __sub__(self, o: "PairPoint") -> "PairPoint":
        return PairPoint(self.X - o.X, self.Y - o.Y)

    def __neg__(self) -> "PairPoint":
        return PairPoint(-self.X, -self.Y)

    def scale(self, s) -> "PairPoint":
        return PairPoint(s * self.X, s * self.Y)

    def __mul__(self, s) -> "PairPoint":
        return self.scale(s)

    __rmul__ = __mul__

    def __eq__(self, o: object) -> bool:
        if not isinstance(o, PairPoint):
            return NotImplemented
        return (self.X.shape == o.X.shape and core.is_zero(self.X - o.X)
                and core.is_zero(self.Y - o.Y))

    def __hash__(self) -> int:
        return hash((tuple(self.X.ravel()), tuple(self.Y.ravel())))

    def vec(self) -> np.ndarray:
        """Flatten to (X row-major, Y row-major)."""
        return np.concatenate([self.X.ravel(), self.Y.ravel()])

    @classmethod
    def from_vec(cls, v, M: int, n: int) -> "PairPoint":
        v = np.asarray(v)
        return cls(v[: M * n].reshape(M, n), v[M * n:].reshape(M, n))

    def norm(self) -> float:
        return core.norm(self.vec())

    def to_float(self) -> "PairPoint":
        return PairPoint(core.to_float(self.X), core.to_float(self.Y))

    def to_exact(self, max_den: int | None = None) -> "PairPoint":
        return PairPoint(core.to_exact(self.X, max_den), core.to_exact(self.Y, max_den))

    def to_json(self) -> dict:
        return {"X": core.mat_to_json(self.X), "Y": core.mat_to_json(self.Y)}

    @classmethod
    def from_json(cls, data: dict, exact: bool = True) -> "PairPoint":
        return cls(core.mat_from_json(data["X"], exact), core.mat_from_json(data["Y"], exact))


def to_pair(w1: VForm, w2: VForm) -> PairPoint:
    """The linear bijection from (1-form, (n-1)-form) to matrix pairs."""
    if w1.k != 1 or w2.k != w2.n - 1:
        raise ValueError("to_pair expects degrees 1 and n-1")
    if (w1.n, w1.M) != (w2.n, w2.M):
        raise ValueError("form shapes differ")
    n, M = w1.n, w1.M
    exact = w1.exact and w2.exact
    X = core.zeros((M, n), exact)
    Y = core.zeros((M, n), exact)
    for a in range(n):
        X[:, a] = w1.coeff((a,))
        comp = complement((a,), n)
        Y[:, a] = hodge_sign((a,), n) * w2.coeff(comp)
    return PairPoint(X, Y)


def from_pair(p: PairPoint) -> tuple[VForm, VForm]:
    n, M = p.n, p.M
    w1 = VForm(n, M, 1, {(a,): p.X[:, a] for a in range(n)})
    w2 = VForm(n, M, n - 1, {complement((a,), n): hodge_sign((a,), n) * p.Y[:, a]
                              for a in range(n)})
    return w1, w2


def zero_form(n: int, M: int, u) -> VForm:
    """The R^M-valued 0-form with constant value u."""
    return VForm(n, M, 0, {(): np.asarray(u)})


def bivector_form(v: np.ndarray) -> VForm:
    """Σ_{α<β} v_{αβ} ⋆(dx^α∧dx^β) for an antisymmetric (n, n, M) array."""
    n, _, M = v.shape
    out = VForm(n, M, n - 2, {})
    for a, b in itertools.combinations(range(n), 2):
        if not core.is_zero(v[a, b]):
            out = out + star_basis(n, M, (a, b), v[a, b])
    return out
