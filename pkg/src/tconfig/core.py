"""Scalar backends, dense matrices and subspace arithmetic.

Two numeric modes coexist.  Exact matrices are numpy arrays with
``dtype=object`` whose entries are :class:`fractions.Fraction`; float
matrices are ordinary ``float64`` arrays.  Every routine dispatches on the
dtype, so callers never pass the mode around explicitly once data exists.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence, Union

import numpy as np

Scalar = Union[Fraction, float, int]

DEFAULT_RTOL = 1e-8


class Mode(str, enum.Enum):
    EXACT = "exact"
    FLOAT = "float"


# ---------------------------------------------------------------------------
# scalars and conversion
# ---------------------------------------------------------------------------


def is_exact(a: np.ndarray) -> bool:
    return isinstance(a, np.ndarray) and a.dtype == object


def to_fraction(x) -> Fraction:
    """Convert ints, Fractions, ``"p/q"`` strings and floats to a Fraction.

    Floats are converted by their exact binary value; use
    :func:`rationalize` for a short approximation instead.
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, str):
        return Fraction(x)
    if isinstance(x, (float, np.floating)):
        return Fraction(float(x))
    raise TypeError(f"cannot convert {type(x).__name__} to Fraction")


def rationalize(x: float, max_den: int = 10**6) -> Fraction:
    return Fraction(float(x)).limit_denominator(max_den)


def array(data, mode: Mode | str = Mode.EXACT) -> np.ndarray:
    """Build a matrix or vector in the requested mode."""
    mode = Mode(mode)
    if mode is Mode.EXACT:
        a = np.asarray(data, dtype=object)
        flat = [to_fraction(x) for x in a.ravel()]
        out = np.empty(a.shape, dtype=object)
        for i, v in enumerate(flat):
            out.flat[i] = v
        return out
    a = np.asarray(data, dtype=object)
    return np.array([float(x) if not isinstance(x, str) else float(Fraction(x)) for x in a.ravel()],
                    dtype=float).reshape(a.shape)


def zeros(shape, exact: bool) -> np.ndarray:
    if exact:
        out = np.empty(shape, dtype=object)
        out.fill(Fraction(0))
        return out
    return np.zeros(shape, dtype=float)


def eye(n: int, exact: bool) -> np.ndarray:
    out = zeros((n, n), exact)
    for i in range(n):
        out[i, i] = Fraction(1) if exact else 1.0
    return out


def to_float(a: np.ndarray) -> np.ndarray:
    if is_exact(a):
        return np.array([float(x) for x in a.ravel()], dtype=float).reshape(a.shape)
    return np.asarray(a, dtype=float)


def to_exact(a: np.ndarray, max_den: int | None = None) -> np.ndarray:
    if is_exact(a):
        return a
    conv = (lambda x: rationalize(x, max_den)) if max_den else (lambda x: Fraction(float(x)))
    out = np.empty(np.shape(a), dtype=object)
    for i, x in enumerate(np.ravel(a)):
        out.flat[i] = conv(x)
    return out


def like(a: np.ndarray, exact: bool) -> np.ndarray:
    return to_exact(a) if exact else to_float(a)


def is_zero(a, tol: float = 0.0) -> bool:
    arr = np.asarray(a)
    if arr.dtype == object:
        return all(x == 0 for x in arr.ravel())
    return bool(np.all(np.abs(arr) <= tol))


def norm(a) -> float:
    return float(np.linalg.norm(to_float(np.asarray(a)).ravel()))


def dot(a, b):
    """Euclidean inner product of two equally shaped arrays."""
    s = (np.asarray(a) * np.asarray(b)).sum()
    return s


def outer(a, b) -> np.ndarray:
    return np.multiply.outer(np.asarray(a), np.asarray(b))


# ---------------------------------------------------------------------------
# exact elimination
# ---------------------------------------------------------------------------


def rref(m: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Reduced row echelon form over the rationals with pivot columns."""
    a = array(m, Mode.EXACT).copy() if not is_exact(m) else m.copy()
    rows, cols = a.shape
    pivots: list[int] = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        piv = next((i for i in range(r, rows) if a[i, c] != 0), None)
        if piv is None:
            continue
        if piv != r:
            a[[r, piv]] = a[[piv, r]]
        inv = 1 / a[r, c]
        a[r] = a[r] * inv
        for i in range(rows):
            if i != r and a[i, c] != 0:
                a[i] = a[i] - a[i, c] * a[r]
        pivots.append(c)
        r += 1
    return a, pivots


def det(m: np.ndarray):
    """Determinant; exact by fraction-free elimination for object arrays."""
    if not is_exact(m):
        return float(np.linalg.det(np.asarray(m, dtype=float)))
    a = m.copy()
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("determinant of a non-square matrix")
    sign = 1
    result = Fraction(1)
    for c in range(n):
        piv = next((i for i in range(c, n) if a[i, c] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != c:
            a[[c, piv]] = a[[piv, c]]
            sign = -sign
        p = a[c, c]
        result *= p
        for i in range(c + 1, n):
            if a[i, c] != 0:
                a[i] = a[i] - (a[i, c] / p) * a[c]
    return sign * result


def _check_tol(m: np.ndarray, tol: float | None) -> None:
    if m.size == 0:
        raise ValueError("empty")
    if is_exact(m) and tol not in (None, 0):
        raise ValueError("exact mode requires tol = 0")
    if tol is not None and tol < 0:
        raise ValueError("tolerance must be nonnegative")


def rank(m: np.ndarray, tol: float | None = None) -> int:
    """Rank by exact pivots or by singular values above ``tol``·σ_max."""
    m = np.asarray(m)
    _check_tol(m, tol)
    if is_exact(m):
        return len(rref(m)[1])
    s = np.linalg.svd(np.asarray(m, dtype=float), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    rtol = DEFAULT_RTOL if tol is None else tol
    return int(np.sum(s > rtol * s[0]))


@dataclass(frozen=True)
class Subspace:
    """A linear subspace given by independent basis vectors (rows)."""

    ambient_dim: int
    basis: np.ndarray

    def __post_init__(self) -> None:
        b = np.asarray(self.basis)
        if b.ndim != 2 or b.shape[1] != self.ambient_dim:
            raise ValueError("basis rows must have length ambient_dim")

    @property
    def dim(self) -> int:
        return int(self.basis.shape[0])

    @property
    def exact(self) -> bool:
        return is_exact(self.basis)

    @classmethod
    def zero(cls, ambient_dim: int, exact: bool = False) -> "Subspace":
        return cls(ambient_dim, zeros((0, ambient_dim), exact))

    @classmethod
    def span(cls, vectors: Sequence, ambient_dim: int | None = None,
             tol: float | None = None) -> "Subspace":
        """Subspace spanned by possibly dependent vectors."""
        vecs = list(vectors)
        if not vecs:
            if ambient_dim is None:
                raise ValueError("ambient_dim needed for an empty span")
            return cls.zero(ambient_dim)
        m = np.vstack([np.asarray(v).ravel() for v in vecs])
        if m.dtype != object and any(np.asarray(v).dtype == object for v in vecs):
            m = np.vstack([to_exact(np.asarray(v).ravel()) for v in vecs])
        return row_space(m, tol)

    def contains(self, v, tol: float | None = None) -> bool:
        if self.dim == 0:
            return is_zero(v, 0 if self.exact else (tol or DEFAULT_RTOL))
        return rank(np.vstack([self.basis, np.asarray(v).ravel()]), tol) == self.dim


def row_space(m: np.ndarray, tol: float | None = None) -> Subspace:
    m = np.asarray(m)
    _check_tol(m, tol)
    if is_exact(m):
        r, piv = rref(m)
        return Subspace(m.shape[1], r[: len(piv)])
    u, s, vt = np.linalg.svd(np.asarray(m, dtype=float), full_matrices=False)
    k = rank(m, tol)
    return Subspace(m.shape[1], vt[:k])


def nullspace(m: np.ndarray, tol: float | None = None) -> Subspace:
    """Basis of ``{v : m v = 0}``."""
    m = np.asarray(m)
    _check_tol(m, tol)
    cols = m.shape[1]
    if is_exact(m):
        r, piv = rref(m)
        free = [c for c in range(cols) if c not in piv]
        basis = zeros((len(free), cols), True)
        for j, f in enumerate(free):
            basis[j, f] = Fraction(1)
            for i, p in enumerate(piv):
                basis[j, p] = -r[i, f]
        return Subspace(cols, basis)
    k = rank(m, tol)
    _, _, vt = np.linalg.svd(np.asarray(m, dtype=float), full_matrices=True)
    return Subspace(cols, vt[k:])


def _same_ambient(a: Subspace, b: Subspace) -> None:
    if a.ambient_dim != b.ambient_dim:
        raise ValueError(f"ambient mismatch: {a.ambient_dim} vs {b.ambient_dim}")


def _stack(*mats: np.ndarray) -> np.ndarray:
    mats = [m for m in mats if m.shape[0] > 0]
    if not mats:
        raise ValueError("empty")
    if any(is_exact(m) for m in mats) and not all(is_exact(m) for m in mats):
        mats = [to_float(m) for m in mats]
    return np.vstack(mats)


def subspace_sum_dim(a: Subspace, b: Subspace, tol: float | None = None) -> int:
    _same_ambient(a, b)
    if a.dim + b.dim == 0:
        return 0
    return rank(_stack(a.basis, b.basis), tol)


def subspace_sum(a: Subspace, b: Subspace, tol: float | None = None) -> Subspace:
    _same_ambient(a, b)
    if a.dim + b.dim == 0:
        return a
    return row_space(_stack(a.basis, b.basis), tol)


def subspace_intersection(a: Subspace, b: Subspace, tol: float | None = None) -> Subspace:
    """Intersection via the kernel of ``[A^T | -B^T]``."""
    _same_ambient(a, b)
    if a.dim == 0 or b.dim == 0:
        return Subspace.zero(a.ambient_dim, a.exact and b.exact)
    stacked = _stack(a.basis, -b.basis).T
    ker = nullspace(stacked, tol)
    if ker.dim == 0:
        return Subspace.zero(a.ambient_dim, is_exact(stacked))
    coeffs = ker.basis[:, : a.dim]
    basis = np.asarray(coeffs).dot(a.basis if is_exact(stacked) else to_float(a.basis))
    return row_space(basis, tol)


# ---------------------------------------------------------------------------
# 2x2 identities
# ---------------------------------------------------------------------------

J = ((0, -1), (1, 0))


def perp(a) -> np.ndarray:
    """Rotation by +90 degrees: (a1, a2) -> (-a2, a1)."""
    a = np.asarray(a)
    if a.shape != (2,):
        raise ValueError("perp expects a 2-vector")
    out = a.copy()
    out[0], out[1] = -a[1], a[0]
    return out


def det2(m) -> Scalar:
    m = np.asarray(m)
    return m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]


@dataclass(frozen=True)
class Det2Check:
    """Direct determinant of ``a⊗b + c⊗d`` next to the closed form."""

    direct: Scalar
    closed: Scalar

    @property
    def agree(self) -> bool:
        return self.direct == self.closed


def det2_rank1_pair(a, b, c, d) -> Det2Check:
    """det(a⊗b + c⊗d) directly and as ⟨a^⊥, c⟩⟨b^⊥, d⟩."""
    vs = [np.asarray(x) for x in (a, b, c, d)]
    if any(v.shape != (2,) for v in vs):
        raise ValueError("det2_rank1_pair expects 2-vectors")
    a, b, c, d = vs
    direct = det2(outer(a, b) + outer(c, d))
    closed = dot(perp(a), c) * dot(perp(b), d)
    return Det2Check(direct, closed)


def det2_rank1_difference(a, b, c, d) -> Det2Check:
    """The "minus" variant: det(a⊗b − c⊗d) against the same closed form.

    The two agree only when the closed form vanishes, which is why the
    "plus" form is the one used throughout.
    """
    a, b, c, d = (np.asarray(x) for x in (a, b, c, d))
    direct = det2(outer(a, b) - outer(c, d))
    closed = dot(perp(a), c) * dot(perp(b), d)
    return Det2Check(direct, closed)


def J_matrix(exact: bool = True) -> np.ndarray:
    return array(J, Mode.EXACT if exact else Mode.FLOAT)


def times_J(a, b) -> np.ndarray:
    """(a⊗b)·J, checked against −a⊗b^⊥."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != (2,) or b.shape != (2,):
        raise ValueError("times_J expects 2-vectors")
    exact = is_exact(a) or is_exact(b)
    prod = outer(a, b).dot(J_matrix(exact))
    closed = -outer(a, perp(b))
    if exact:
        assert (prod == closed).all()
    else:
        assert np.allclose(prod, closed)
    return prod


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def scalar_to_json(x):
    if isinstance(x, Fraction):
        return f"{x.numerator}/{x.denominator}"
    if isinstance(x, (int, np.integer)):
        return f"{int(x)}/1"
    return float(x)


def scalar_from_json(x, exact: bool):
    if exact:
        return to_fraction(x)
    return float(Fraction(x)) if isinstance(x, str) else float(x)


def mat_to_json(a: np.ndarray):
    a = np.asarray(a)
    if a.ndim == 0:
        return scalar_to_json(a.item())
    return [mat_to_json(x) for x in a]


def mat_from_json(data, exact: bool) -> np.ndarray:
    arr = np.asarray(data, dtype=object)
    out = np.empty(arr.shape, dtype=object if exact else float)
    for i, x in enumerate(arr.ravel()):
        out.flat[i] = scalar_from_json(x, exact)
    return out


def detect_exact(data: Iterable) -> bool:
    """True when a JSON payload stores its numbers as rational strings."""
    for x in np.asarray(data, dtype=object).ravel():
        return isinstance(x, str)
    return True
