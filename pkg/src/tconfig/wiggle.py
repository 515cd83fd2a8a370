"""Piecewise affine maps built from sawtooth cells.

A map here takes values in ℝ^M × (ℝ^M ⊗ Λ^{n−2}ℝⁿ).  The 0-form part is a
vector ``u`` and the (n−2)-form part is stored through its coefficients on
⋆(dx^α∧dx^β) as an antisymmetric array ``V`` of shape (n, n, M), the same
convention as the ``v`` of an ℛ-parameter.  Its exterior derivative is then
the pair (X, Ŷ) with X = ∇u and Ŷ[:, α] = Σ_γ ∂_γ V[α, γ].

The building block is one cell

    w(x) = σγ·s(q·(x − p)/(σγ)) − σ·Σ_i |o^i·(x − p)|,

positive on a bipyramid and zero on its boundary.  Adding w·a to an affine
map whose derivative is (1 − λ)A1 + λA2, where A2 − A1 = assemble(q, a),
produces derivative A2 + O(σ) on the side q·(x − p) < 0 and A1 + O(σ) on the
other side.  Disjoint scaled copies of the cell are packed greedily, and the
construction recurses into the affine pieces of each copy to realize a whole
split tree.

Derivatives are computed from the construction formulas.  The grid is only
used to estimate measures.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np
from scipy.spatial import ConvexHull

from .exterior import PairPoint
from .laminate import Laminate, SplitNode, staircase
from .rconn import canonical, is_in_R, v_from_Y
from .tnconfig import TNConfig, base_points, endpoints


# ---------------------------------------------------------------------------
# the profile
# ---------------------------------------------------------------------------


def s_profile(lam, t):
    """Return (s(t), s′(t)) for the tent supported on the open interval (−λ, 1 − λ).

    Scalars (including Fractions) are evaluated exactly; arrays in float.
    At the kink t = 0 the right derivative −λ is reported.
    """
    if not 0 < lam < 1:
        raise ValueError("λ must lie in (0, 1)")
    if np.ndim(t) == 0:
        zero = t * 0
        if -lam < t < 0:
            return lam * (1 - lam) + (1 - lam) * t, (1 - lam) + zero
        if 0 <= t < 1 - lam:
            return lam * (1 - lam) - lam * t, -lam + zero
        return zero, zero
    lam = float(lam)
    t = np.asarray(t, dtype=float)
    left = (t > -lam) & (t < 0)
    right = (t >= 0) & (t < 1 - lam)
    s = np.where(left, lam * (1 - lam) + (1 - lam) * t,
                 np.where(right, lam * (1 - lam) - lam * t, 0.0))
    ds = np.where(left, 1 - lam, np.where(right, -lam, 0.0))
    return s, ds


# ---------------------------------------------------------------------------
# grids and polytopes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    """Cell-centred sampling grid; points within ``kink_tol`` of a kink are dropped."""

    resolution: tuple[int, ...]
    kink_tol: float = 1e-9

    def __post_init__(self) -> None:
        res = tuple(int(r) for r in self.resolution)
        object.__setattr__(self, "resolution", res)
        if not res or any(r < 8 for r in res):
            raise ValueError("grid resolution must be at least 8 per axis")

    @classmethod
    def uniform(cls, res: int, n: int = 2, kink_tol: float = 1e-9) -> "GridSpec":
        return cls((res,) * n, kink_tol)

    def refined(self, factor: int = 2) -> "GridSpec":
        return GridSpec(tuple(r * factor for r in self.resolution), self.kink_tol)

    def spacing(self, lo, hi) -> np.ndarray:
        return (np.asarray(hi, float) - np.asarray(lo, float)) / np.array(self.resolution)

    def points(self, lo, hi) -> np.ndarray:
        lo, hi = np.asarray(lo, float), np.asarray(hi, float)
        axes = [lo[i] + (np.arange(r) + 0.5) * (hi[i] - lo[i]) / r
                for i, r in enumerate(self.resolution)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


@dataclass
class Polytope:
    """A convex polytope with vertices V and half-spaces A x ≤ b (unit normals)."""

    vertices: np.ndarray
    A: np.ndarray
    b: np.ndarray
    volume: float

    @classmethod
    def box(cls, lo, hi) -> "Polytope":
        lo, hi = np.asarray(lo, float), np.asarray(hi, float)
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise ValueError("need lo < hi componentwise")
        n = len(lo)
        V = np.array([[hi[i] if bit else lo[i] for i, bit in enumerate(bits)]
                      for bits in itertools.product((0, 1), repeat=n)])
        A = np.vstack([np.eye(n), -np.eye(n)])
        return cls(V, A, np.concatenate([hi, -lo]), float(np.prod(hi - lo)))

    @classmethod
    def from_vertices(cls, V) -> "Polytope":
        V = np.asarray(V, float)
        hull = ConvexHull(V)
        eq = np.unique(np.round(hull.equations, 12), axis=0)
        return cls(V[hull.vertices], eq[:, :-1], -eq[:, -1], float(hull.volume))

    @property
    def n(self) -> int:
        return self.vertices.shape[1]

    @property
    def lo(self) -> np.ndarray:
        return self.vertices.min(axis=0)

    @property
    def hi(self) -> np.ndarray:
        return self.vertices.max(axis=0)

    def contains(self, pts, tol: float = 0.0) -> np.ndarray:
        return np.all(np.atleast_2d(pts) @ self.A.T <= self.b + tol, axis=1)

    def support(self, dirs) -> np.ndarray:
        return (np.atleast_2d(dirs) @ self.vertices.T).max(axis=1)

    def is_box(self) -> bool:
        n = self.n
        return self.A.shape == (2 * n, n) and np.array_equal(self.A, np.vstack([np.eye(n), -np.eye(n)]))


def _separating_axes(V: np.ndarray) -> np.ndarray:
    """Axes that separate any two disjoint homothets of conv(V).

    Facet normals suffice in the plane; in 3-D the cross products of edge
    directions are added.  In higher dimension the set may miss a separating
    direction, which only makes the packing more conservative.
    """
    hull = ConvexHull(V)
    axes = [e[:-1] for e in hull.equations]
    if V.shape[1] == 3:
        edges = set()
        for simplex in hull.simplices:
            for i, j in itertools.combinations(simplex, 2):
                edges.add((min(i, j), max(i, j)))
        dirs = [V[j] - V[i] for i, j in edges]
        for d1, d2 in itertools.combinations(dirs, 2):
            c = np.cross(d1, d2)
            if np.linalg.norm(c) > 1e-12:
                axes.append(c / np.linalg.norm(c))
    axes = np.array(axes)
    return np.unique(np.round(axes, 12), axis=0)


# ---------------------------------------------------------------------------
# Vitali packing
# ---------------------------------------------------------------------------


class PackingError(ValueError):
    def __init__(self, achieved: float, target: float):
        super().__init__(f"packing reached {achieved:.4f} of the domain, target {target}")
        self.achieved = achieved


@dataclass
class PackResult:
    copies: list[tuple[np.ndarray, float]]
    analytic_fraction: float
    grid_fraction: float | None
    levels: int


def _lattice_range(origin, rL_inv, lo, hi) -> list[range]:
    corners = np.array(list(itertools.product(*zip(lo, hi))))
    c = (corners - origin) @ rL_inv
    return [range(int(math.floor(a)) - 1, int(math.ceil(b)) + 2)
            for a, b in zip(c.min(axis=0), c.max(axis=0))]


def pack(domain: Polytope, cell: Polytope, *, gamma: float = 1.0, lattice=None,
         min_extent: float | None = None, cover_target: float | None = None,
         grid: GridSpec | None = None, max_levels: int = 30, offsets: int = 2,
         level_shift: float = 0.0, reflect_shift=None) -> PackResult:
    """Greedy largest-first packing of homothets p + r·cell inside ``domain``.

    Scales are γ·2^{−j}.  At each scale the candidates form a lattice
    (generated by the rows of ``lattice``, default the bounding box of the
    cell) and its half-shifted copy.  Between scales the lattice moves by
    ``level_shift`` times its first vector (scaled); a quarter makes the
    finer tiles of a rhombic cell subdivide the coarser ones.  ``offsets`` > 2 adds the shifts
    j/offsets of the lattice along every axis, tried in order, which fills
    the gaps left by cells that do not tile.

    ``reflect_shift`` (lattice coordinates) replaces the half-shifted copy by
    point reflections of the cell placed at that shift; they are stored with
    a negative ratio r, i.e. as p + r·cell.  A convex quadrilateral and its
    reflection through an edge midpoint tile the plane on the lattice of its
    diagonals, which is how a kite-shaped cell fills a planar domain.
    """
    n = domain.n
    V = cell.vertices
    L = np.diag(cell.hi - cell.lo) if lattice is None else np.asarray(lattice, float)
    L_inv = np.linalg.inv(L)
    axes = _separating_axes(V)
    h_lo = (V @ axes.T).min(axis=0)
    h_hi = (V @ axes.T).max(axis=0)
    cell_in_dom = {1: (V @ domain.A.T).max(axis=0), -1: (-V @ domain.A.T).max(axis=0)}
    ext = cell.hi - cell.lo
    d_ext = domain.hi - domain.lo
    r = float(gamma)
    while np.any(r * ext > d_ext + 1e-15):
        r /= 2
    if min_extent is None:
        if grid is not None:
            min_extent = 2.0 * float(grid.spacing(domain.lo, domain.hi).max())
        else:
            min_extent = r * ext.max() / 2 ** 8
    r_min = min_extent / ext.max()
    origin = domain.lo - r * cell.lo
    cell_vol = cell.volume
    copies: list[tuple[np.ndarray, float]] = []
    # per copy: interval bounds on every axis, used for the overlap test
    lo_list: list[np.ndarray] = []
    hi_list: list[np.ndarray] = []
    covered = 0.0
    pts = None
    if grid is not None:
        # one jittered sample per grid cell: cell centres sit on the faces of
        # dyadic copies and would bias an open-set count downwards
        pts = _sample_points(domain, grid, "jitter")
    grid_frac = None
    levels = 0
    lat_ext = np.abs(V @ L_inv).max(axis=0)

    def blocked_by(existing: Sequence[int], P: np.ndarray, kidx: np.ndarray, shape,
                   sub_origin: np.ndarray, rr: float) -> np.ndarray:
        mask = np.zeros(shape, dtype=bool)
        if not existing:
            return mask
        rL_inv = L_inv / abs(rr)
        offs = np.array([rg.start for rg in kidx])
        for e in existing:
            pe, re_ = copies[e]
            c = (pe + re_ * V - sub_origin) @ rL_inv
            a = np.floor(c.min(axis=0) - lat_ext).astype(int) - offs
            b = np.ceil(c.max(axis=0) + lat_ext).astype(int) - offs + 1
            a = np.maximum(a, 0)
            b = np.minimum(b, np.array(shape))
            if np.any(b <= a):
                continue
            sl = tuple(slice(i, j) for i, j in zip(a, b))
            sub = P[sl]
            proj = sub @ axes.T
            c_lo, c_hi = _proj_bounds(proj, rr, h_lo, h_hi)
            tol = 1e-9 * abs(rr) * float(ext.max())
            overlap = np.all((c_hi > lo_list[e] + tol) & (hi_list[e] > c_lo + tol), axis=-1)
            mask[sl] |= overlap
        return mask

    if offsets <= 2:
        shifts = [(np.zeros(n), 1), (0.5 * np.ones(n), 1)]
    else:
        grid_shifts = [np.array(t) / offsets for t in itertools.product(range(offsets), repeat=n)]
        grid_shifts.sort(key=lambda v: (abs(v - 0.5).sum() != 0 and v.any(), tuple(v)))
        shifts = [(v, 1) for v in grid_shifts]
    if reflect_shift is not None:
        refl = (np.asarray(reflect_shift, float), -1)
        shifts = [shifts[0], refl] + (shifts[2:] if offsets > 2 else [])
    while r >= r_min * (1 - 1e-12) and levels < max_levels:
        levels += 1
        rL = r * L
        prev = list(range(len(copies)))
        for shift, sign in shifts:
            sub_origin = origin + shift @ rL
            rs = sign * r
            kidx = _lattice_range(sub_origin, np.linalg.inv(rL), domain.lo, domain.hi)
            shape = tuple(len(k) for k in kidx)
            grids = np.meshgrid(*[np.array(k) for k in kidx], indexing="ij")
            K = np.stack(grids, axis=-1).astype(float)
            P = sub_origin + K @ rL
            inside = np.all(P @ domain.A.T + r * cell_in_dom[sign] <= domain.b + 1e-12, axis=-1)
            if not inside.any():
                continue
            block = blocked_by(prev, P, kidx, shape, sub_origin, rs)
            ok = inside & ~block
            for pos in np.argwhere(ok):
                p = P[tuple(pos)].copy()
                copies.append((p, rs))
                lo, hi = _proj_bounds(p @ axes.T, rs, h_lo, h_hi)
                lo_list.append(lo)
                hi_list.append(hi)
                covered += r ** n * cell_vol
            prev = list(range(len(copies)))
        if cover_target is not None and covered / domain.volume >= cover_target:
            if pts is None:
                break
            grid_frac = _grid_coverage(pts, copies, cell)
            if grid_frac >= cover_target:
                break
        origin = origin + level_shift * r * L[0]
        r /= 2
    frac = covered / domain.volume
    if pts is not None and grid_frac is None:
        grid_frac = _grid_coverage(pts, copies, cell)
    if cover_target is not None:
        achieved = grid_frac if grid_frac is not None else frac
        if achieved < cover_target:
            raise PackingError(achieved, cover_target)
    return PackResult(copies, frac, grid_frac, levels)


def _proj_bounds(proj, r: float, h_lo, h_hi):
    """Bounds of p + r·cell along the separating axes (r may be negative)."""
    return (proj + r * h_lo, proj + r * h_hi) if r > 0 else (proj + r * h_hi, proj + r * h_lo)


def _grid_coverage(pts: np.ndarray, copies, cell: Polytope) -> float:
    if not copies or not len(pts):
        return 0.0
    return float(covered_mask(pts, copies, cell).mean())


def covered_mask(pts: np.ndarray, copies, cell: Polytope, closed: bool = False) -> np.ndarray:
    """Points inside at least one copy (open unless ``closed``), swept along x."""
    order = np.argsort(pts[:, 0], kind="stable")
    xs = pts[order, 0]
    out = np.zeros(len(pts), dtype=bool)
    for p, r in copies:
        a, b = p + r * cell.lo, p + r * cell.hi
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        tol = 1e-12 * abs(r) if closed else -1e-12 * abs(r)
        i0 = np.searchsorted(xs, lo[0] - tol, "left" if closed else "right")
        i1 = np.searchsorted(xs, hi[0] + tol, "right" if closed else "left")
        if i1 <= i0:
            continue
        cand = order[i0:i1]
        q = pts[cand]
        sel = np.all((q >= lo - tol) & (q <= hi + tol), axis=1)
        cand, q = cand[sel], q[sel]
        if len(cand):
            y = (q - p) / r
            out[cand[np.all(y @ cell.A.T <= cell.b + tol / abs(r), axis=1)]] = True
    return out


def copy_masks(pts: np.ndarray, copies, cell: Polytope) -> np.ndarray:
    """Boolean (copies × points) membership in the open copies; for small checks only."""
    out = np.zeros((len(copies), len(pts)), dtype=bool)
    for i, (p, r) in enumerate(copies):
        out[i] = covered_mask(pts, [(p, r)], cell)
    return out


def vitali_pack(domain: Polytope, base_cell: Polytope, cover_target: float,
                grid: GridSpec | None = None, **kw) -> list[tuple[np.ndarray, float]]:
    """Disjoint copies p + r·base_cell (r ≤ 1) covering ≥ cover_target of the domain."""
    if not 0 < cover_target < 1:
        raise ValueError("cover_target must lie in (0, 1)")
    if grid is None:
        grid = GridSpec.uniform(256, domain.n)
    # the jittered count resolves copies below the grid spacing on average,
    # and cells that do not tile need several scales beyond it
    kw.setdefault("min_extent", 0.5 * float(grid.spacing(domain.lo, domain.hi).max()))
    return pack(domain, base_cell, cover_target=cover_target, grid=grid, **kw).copies


# ---------------------------------------------------------------------------
# affine maps
# ---------------------------------------------------------------------------


@dataclass
class AffineData:
    """x ↦ (u0 + U(x − x0), V0 + W·(x − x0))."""

    x0: np.ndarray
    u0: np.ndarray
    V0: np.ndarray
    U: np.ndarray
    W: np.ndarray

    @property
    def n(self) -> int:
        return len(self.x0)

    @property
    def M(self) -> int:
        return len(self.u0)

    def value(self, pts) -> tuple[np.ndarray, np.ndarray]:
        dx = np.atleast_2d(pts) - self.x0
        return self.u0 + dx @ self.U.T, self.V0 + np.einsum("abmg,pg->pabm", self.W, dx)

    def value_vec(self, pts) -> np.ndarray:
        u, V = self.value(pts)
        iu = np.triu_indices(self.n, 1)
        return np.concatenate([u, V[:, iu[0], iu[1], :].reshape(len(u), -1)], axis=1)

    def d(self) -> PairPoint:
        return PairPoint(self.U.copy(), np.einsum("agmg->ma", self.W))

    def grad_norm(self) -> float:
        return float(np.sqrt((self.U ** 2).sum() + (self.W ** 2).sum()))

    def plus(self, w0: float, g: np.ndarray, u: np.ndarray, v: np.ndarray) -> "AffineData":
        """Add w·(u, v) for the affine scalar w(x) = w0 + g·(x − x0)."""
        return AffineData(self.x0.copy(), self.u0 + w0 * u, self.V0 + w0 * v,
                          self.U + np.outer(u, g), self.W + v[..., None] * g)

    def rebased(self, x0) -> "AffineData":
        x0 = np.asarray(x0, float)
        u, V = self.value(x0[None])
        return AffineData(x0, u[0], V[0], self.U, self.W)


def affine_from_pair(C: PairPoint, x0=None, u0=None, V0=None) -> AffineData:
    """An affine map whose derivative is C."""
    C = C.to_float()
    M, n = C.M, C.n
    if n < 2:
        raise ValueError("need n ≥ 2")
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, float)
    u0 = np.zeros(M) if u0 is None else np.asarray(u0, float)
    V0 = np.zeros((n, n, M)) if V0 is None else np.asarray(V0, float)
    W = np.zeros((n, n, M, n))
    for a in range(n):
        g = 1 if a == 0 else 0
        W[a, g, :, g] += C.Y[:, a]
        W[g, a, :, g] -= C.Y[:, a]
    return AffineData(x0, u0, V0, np.array(C.X, float), W)


# ---------------------------------------------------------------------------
# cells
# ---------------------------------------------------------------------------


def _frame(q: np.ndarray) -> np.ndarray:
    n = len(q)
    if n == 2:
        return np.array([q, [-q[1], q[0]]])
    _, _, vt = np.linalg.svd(q[None])
    return np.vstack([q, vt[1:]])


def cell_local_vertices(lam, sigma, n: int) -> list[tuple]:
    """Vertices of {w > 0} for γ = 1 in the frame (q, o², …, oⁿ)."""
    zero = lam * 0
    out = [tuple([-lam * sigma] + [zero] * (n - 1)), tuple([(1 - lam) * sigma] + [zero] * (n - 1))]
    h = lam * (1 - lam)
    for i in range(1, n):
        for sg in (1, -1):
            v = [zero] * n
            v[i] = sg * h
            out.append(tuple(v))
    return out


def w_local(y: Sequence, lam, sigma, gamma):
    """w at local coordinates y (exact for Fractions)."""
    s, _ = s_profile(lam, y[0] / (sigma * gamma))
    return sigma * gamma * s - sigma * sum(abs(z) for z in y[1:])


def cell_polytope(lam: float, sigma: float, q: np.ndarray) -> Polytope:
    n = len(q)
    F = _frame(q)
    V = np.array([[float(c) for c in v] for v in cell_local_vertices(lam, sigma, n)]) @ F
    return Polytope.from_vertices(V)


@dataclass
class Piece:
    """A region on which the map is affine, minus the cells packed into it."""

    affine: AffineData
    node: SplitNode | None
    vertices: np.ndarray | None = None     # None for the whole domain
    cells: list["Cell"] = field(default_factory=list)
    tag: object = None

    @property
    def df(self) -> PairPoint:
        return self.affine.d()

    def polytope(self, domain: Polytope) -> Polytope:
        return domain if self.vertices is None else Polytope.from_vertices(self.vertices)

    def walk(self) -> Iterator["Piece"]:
        yield self
        for c in self.cells:
            for pc in c.pieces:
                yield from pc.walk()

    def leaves(self) -> Iterator["Piece"]:
        for pc in self.walk():
            if not pc.cells:
                yield pc


@dataclass
class Cell:
    """One copy p + γ·K of the cell, attached to an affine base."""

    p: np.ndarray
    gamma: float
    lam: float
    sigma: float
    frame: np.ndarray
    u: np.ndarray
    v: np.ndarray
    base: AffineData
    pieces: list[Piece] = field(default_factory=list)
    lam_exact: Fraction | None = None
    sigma_exact: Fraction | None = None

    @property
    def n(self) -> int:
        return len(self.p)

    def piece_index(self, side: int, signs: Sequence[int]) -> int:
        idx = side
        for s in signs:
            idx = 2 * idx + (1 if s > 0 else 0)
        return idx

    def piece_geometry(self, side: int, signs: Sequence[int]) -> tuple[float, np.ndarray, np.ndarray]:
        """(w at p, gradient of w, simplex vertices) for one linear piece.

        side 0 is q·(x − p) < 0, where df ≈ A2; side 1 the other half, df ≈ A1.
        """
        lam, sig, g = self.lam, self.sigma, self.gamma
        q, O = self.frame[0], self.frame[1:]
        slope = (1 - lam) if side == 0 else -lam
        grad = slope * q - sig * sum(s * o for s, o in zip(signs, O))
        apex = (-lam if side == 0 else 1 - lam) * sig * g * q
        h = lam * (1 - lam) * g
        verts = [self.p, self.p + apex] + [self.p + s * h * o for s, o in zip(signs, O)]
        return sig * g * lam * (1 - lam), grad, np.array(verts)

    def build_pieces(self, left: SplitNode | None, right: SplitNode | None) -> None:
        base = self.base.rebased(self.p)
        self.pieces = []
        for side in (0, 1):
            for signs in itertools.product((-1, 1), repeat=self.n - 1):
                w0, grad, verts = self.piece_geometry(side, signs)
                node = right if side == 0 else left
                self.pieces.append(Piece(base.plus(w0, grad, self.u, self.v), node, verts))

    def local(self, pts: np.ndarray) -> np.ndarray:
        return (pts - self.p) @ self.frame.T

    def classify(self, pts: np.ndarray, kink_tol: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Inside mask, piece index and kink mask for points."""
        y = self.local(pts)
        s, _ = s_profile(self.lam, y[:, 0] / (self.sigma * self.gamma))
        z = y[:, 1:]
        w = self.sigma * self.gamma * s - self.sigma * np.abs(z).sum(axis=1)
        scale = self.gamma
        inside = w > kink_tol * self.sigma * scale
        near = (np.abs(w) <= kink_tol * self.sigma * scale) | (
            (w > 0) & ((np.abs(y[:, 0]) < kink_tol * scale)
                       | np.any(np.abs(z) < kink_tol * scale, axis=1)))
        side = (y[:, 0] > 0).astype(int)
        idx = side
        for i in range(z.shape[1]):
            idx = 2 * idx + (z[:, i] > 0).astype(int)
        return inside & ~near, idx, near

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        V = np.array([[float(c) for c in v] for v in
                      cell_local_vertices(self.lam, self.sigma, self.n)]) * self.gamma
        G = self.p + V @ self.frame
        return G.min(axis=0), G.max(axis=0)

    def exact_boundary_check(self) -> bool:
        """w vanishes exactly on the boundary and the pieces agree on shared facets.

        Done in the local frame with rational λ, σ, γ: at every vertex,
        every edge midpoint of the outer surface and the centroid of every
        outer facet.
        """
        lam = self.lam_exact if self.lam_exact is not None else Fraction(self.lam)
        sig = self.sigma_exact if self.sigma_exact is not None else Fraction(self.sigma)
        g = Fraction(self.gamma)
        n = self.n
        verts = [tuple(c * g for c in v) for v in cell_local_vertices(lam, sig, n)]
        apexes, eq = verts[:2], verts[2:]
        pts = list(verts)
        for a in apexes:
            for e in eq:
                pts.append(tuple((x + y) / 2 for x, y in zip(a, e)))
            for signs in itertools.product((0, 1), repeat=n - 1):
                face = [a] + [eq[2 * i + s] for i, s in enumerate(signs)]
                pts.append(tuple(sum(c) / n for c in zip(*face)))
        if any(w_local(y, lam, sig, g) != 0 for y in pts):
            return False
        # on the equator both sides give the same linear function
        for signs in itertools.product((0, 1), repeat=n - 1):
            face = [tuple(0 * lam for _ in range(n))] + [eq[2 * i + s] for i, s in enumerate(signs)]
            cen = tuple(sum(c) / n for c in zip(*face))
            zs = sum(abs(z) for z in cen[1:])
            left = sig * g * lam * (1 - lam) + (1 - lam) * cen[0] - sig * zs
            right = sig * g * lam * (1 - lam) - lam * cen[0] - sig * zs
            if left != right or left != w_local(cen, lam, sig, g):
                return False
        return True

    def continuity_residual(self) -> float:
        """Largest |f_piece − f_base| at outer vertices, in float."""
        worst = 0.0
        for pc in self.pieces:
            outer = pc.vertices[1:]            # all but the centre p lie on ∂K
            a = pc.affine.value_vec(outer)
            b = self.base.value_vec(outer)
            worst = max(worst, float(np.abs(a - b).max()))
        return worst


# ---------------------------------------------------------------------------
# piecewise affine maps
# ---------------------------------------------------------------------------


@dataclass
class Evaluation:
    df: np.ndarray          # (P, 2Mn), X then Y row-major
    value: np.ndarray       # (P, M + M·C(n,2))
    excluded: np.ndarray    # kink points
    covered: np.ndarray     # inside at least one cell
    leaf: np.ndarray        # id of the leaf piece


@dataclass
class PwAffineMap:
    domain: Polytope
    root: Piece

    @property
    def aff(self) -> AffineData:
        return self.root.affine

    def cells(self) -> Iterator[Cell]:
        for pc in self.root.walk():
            yield from pc.cells

    def n_cells(self) -> int:
        return sum(1 for _ in self.cells())

    def leaves(self) -> list[Piece]:
        return list(self.root.leaves())

    def lipschitz(self) -> float:
        return max(pc.affine.grad_norm() for pc in self.root.walk())

    def evaluate(self, pts: np.ndarray, kink_tol: float = 1e-9) -> Evaluation:
        pts = np.atleast_2d(np.asarray(pts, float))
        P = len(pts)
        leaves = {id(pc): i for i, pc in enumerate(self.leaves())}
        d0 = self.root.df.vec()
        out = Evaluation(np.tile(d0, (P, 1)), self.aff.value_vec(pts),
                         np.zeros(P, bool), np.zeros(P, bool), np.full(P, -1))
        order = np.argsort(pts[:, 0], kind="stable")
        xs = pts[order, 0]
        self._eval_piece(self.root, pts, order, xs, out, kink_tol, leaves)
        return out

    def _eval_piece(self, piece: Piece, pts, order, xs, out: Evaluation, tol, leaves) -> None:
        if not piece.cells:
            out.leaf[order] = leaves.get(id(piece), -1)
            return
        out.leaf[order] = leaves.get(id(piece), -1)
        for cell in piece.cells:
            lo, hi = cell.bbox()
            i0, i1 = np.searchsorted(xs, lo[0], "left"), np.searchsorted(xs, hi[0], "right")
            if i1 <= i0:
                continue
            cand = order[i0:i1]
            sel = np.all((pts[cand] >= lo) & (pts[cand] <= hi), axis=1)
            cand = cand[sel]
            if not len(cand):
                continue
            inside, idx, near = cell.classify(pts[cand], tol)
            out.excluded[cand[near]] = True
            for j, pc in enumerate(cell.pieces):
                m = cand[inside & (idx == j)]
                if not len(m):
                    continue
                out.df[m] = pc.df.vec()
                out.value[m] = pc.affine.value_vec(pts[m])
                out.covered[m] = True
                sub = np.sort(m)
                sub = sub[np.argsort(pts[sub, 0], kind="stable")]
                self._eval_piece(pc, pts, sub, pts[sub, 0], out, tol, leaves)

    def exact_boundary_ok(self) -> bool:
        cache: dict[tuple, bool] = {}
        for c in self.cells():
            key = (c.lam, c.sigma, c.gamma, c.n)
            if key not in cache:
                cache[key] = c.exact_boundary_check()
            if not cache[key]:
                return False
        return True

    def continuity_residual(self) -> float:
        return max((c.continuity_residual() for c in self.cells()), default=0.0)

    def to_json(self, max_cells: int = 0) -> dict:
        cells = []
        for i, c in enumerate(self.cells()):
            if max_cells and i >= max_cells:
                break
            cells.append({"p": c.p.tolist(), "gamma": c.gamma, "lam": c.lam,
                          "sigma": c.sigma, "q": c.frame[0].tolist()})
        return {"domain": {"lo": self.domain.lo.tolist(), "hi": self.domain.hi.tolist()},
                "n_cells": self.n_cells(), "cells": cells,
                "aff_df": self.root.df.to_json()}


# ---------------------------------------------------------------------------
# the construction
# ---------------------------------------------------------------------------


def _unit_param(D: PairPoint) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    res = is_in_R(D.to_float(), 1e-9)
    if not res:
        raise ValueError(f"difference not in ℛ: {res.witness}")
    c = canonical(res.param)
    q = np.asarray(c.b, float)
    return q, np.asarray(c.u, float), v_from_Y(np.asarray(D.to_float().Y), q)


@dataclass
class WiggleParams:
    sigma: float
    gamma: float
    min_extent: float
    kink_tol: float
    max_depth: int = 8
    max_cells: int = 200_000
    level_shift: float = 0.25


def _wiggle_piece(piece: Piece, region: Polytope, params: WiggleParams, depth: int,
                  counter: list[int]) -> None:
    node = piece.node
    if node is None or node.is_leaf or depth >= params.max_depth or counter[0] >= params.max_cells:
        return
    s = node.s
    if s == 0 or s == 1:
        piece.node = node.left if s == 0 else node.right
        _wiggle_piece(piece, region, params, depth, counter)
        return
    D = node.right.point.to_float() - node.left.point.to_float()
    lam = float(s)
    q, u, v = _unit_param(D)
    shape = cell_polytope(lam, params.sigma, q)
    F = _frame(q)
    lattice = np.diag([params.sigma] + [2 * lam * (1 - lam)] * (len(q) - 1)) @ F
    n = len(q)
    symmetric = abs(lam - 0.5) < 1e-12
    # off λ = 1/2 the cell is a kite; its reflections through the midpoint of
    # the edge joining the apex (1 − λ)σq to the equator fill the gaps
    refl = None if symmetric else [1 - lam] + [0.5] * (n - 1)
    res = pack(region, shape, gamma=params.gamma, lattice=lattice,
               min_extent=params.min_extent, offsets=2 if symmetric or n == 2 else 4,
               level_shift=params.level_shift, reflect_shift=refl)
    lam_exact = s if isinstance(s, Fraction) else None
    for p, r in res.copies:
        if counter[0] >= params.max_cells:
            break
        counter[0] += 1
        # a reflected copy is the same cell for the pair (−q, −u, −v)
        sg = 1.0 if r > 0 else -1.0
        cell = Cell(p, abs(r), lam, params.sigma, sg * F, sg * u, sg * v, piece.affine,
                    lam_exact=lam_exact, sigma_exact=Fraction(params.sigma))
        cell.build_pieces(node.left, node.right)
        piece.cells.append(cell)
    for cell in piece.cells:
        for pc in cell.pieces:
            if pc.node is not None and not pc.node.is_leaf:
                _wiggle_piece(pc, Polytope.from_vertices(pc.vertices), params, depth + 1, counter)


def _default_sigma(delta: float, eps: float, tree: SplitNode) -> float:
    dmax = 1.0
    stack = [tree]
    while stack:
        nd = stack.pop()
        if not nd.is_leaf:
            dmax = max(dmax, (nd.right.point.to_float() - nd.left.point.to_float()).norm())
            stack += [nd.left, nd.right]
    raw = min(delta, eps) / (10 * dmax)
    return 2.0 ** math.floor(math.log2(raw))


def _atom_stats(ev: Evaluation, atoms: Sequence[tuple[float, PairPoint]], delta: float) -> dict:
    keep = ~ev.excluded
    df = ev.df[keep]
    fr, dists = [], []
    for w, A in atoms:
        dist = np.linalg.norm(df - A.to_float().vec(), axis=1)
        dists.append(dist)
        fr.append(float((dist < delta).mean()) if len(df) else 0.0)
    return {"fractions": fr, "weights": [float(w) for w, _ in atoms],
            "max_fraction_error": max(abs(f - float(w)) for f, (w, _) in zip(fr, atoms)),
            "min_dist": np.min(dists, axis=0) if dists else None}


def _realize(tree: SplitNode, Aff: AffineData, domain: Polytope, delta: float, eps: float,
             grid: GridSpec, sigma: float | None, gamma: float | None,
             min_cells: float = 2.0, max_depth: int = 8,
             sampling: str = "grid") -> tuple[PwAffineMap, dict]:
    t0 = time.perf_counter()
    if sigma is None:
        sigma = _default_sigma(delta, eps, tree)
    if gamma is None:
        gamma = float((domain.hi - domain.lo).max())
    h = float(grid.spacing(domain.lo, domain.hi).max())
    params = WiggleParams(sigma, gamma, min_cells * h, grid.kink_tol, max_depth)
    root = Piece(Aff, tree)
    counter = [0]
    _wiggle_piece(root, domain, params, 0, counter)
    f = PwAffineMap(domain, root)
    pts = _sample_points(domain, grid, sampling)
    ev = f.evaluate(pts, grid.kink_tol)
    leaves_all = tree.leaves()
    st = _atom_stats(ev, leaves_all, delta)
    min_dist = st.pop("min_dist")
    dev = np.abs(ev.value - Aff.value_vec(pts)).max(axis=1)
    sup_bound = 0.0
    for c in f.cells():
        amp = c.sigma * c.gamma * c.lam * (1 - c.lam)
        sup_bound = max(sup_bound, amp * float(np.sqrt((c.u ** 2).sum() + (c.v ** 2).sum() / 2)))
    target_err = 0.0
    for pc in f.leaves():
        if pc.node is not None and pc.node.is_leaf and pc is not root:
            target_err = max(target_err, (pc.df - pc.node.point.to_float()).norm())
    bpts = _boundary_samples(domain, grid)
    bdev = float(np.abs(f.evaluate(bpts, grid.kink_tol).value - Aff.value_vec(bpts)).max())
    keep = ~ev.excluded
    stats = {
        "sigma": sigma, "gamma": gamma, "delta": delta, "epsilon": eps,
        "grid": list(grid.resolution), "sampling": sampling, "n_points": int(len(pts)),
        "n_excluded": int(ev.excluded.sum()), "n_cells": counter[0],
        "coverage": float(ev.covered[keep].mean()) if keep.any() else 0.0,
        **st,
        "max_dist_to_atoms": target_err,
        "grid_max_dist": float(min_dist.max()) if min_dist is not None and len(min_dist) else 0.0,
        "sup_dev": float(dev.max()) if len(dev) else 0.0,
        "sup_dev_bound": sup_bound,
        "lipschitz": f.lipschitz(),
        "boundary_dev": bdev,
        "boundary_exact": f.exact_boundary_ok(),
        "continuity_residual": f.continuity_residual(),
        "seconds": time.perf_counter() - t0,
    }
    return f, stats


def _sample_points(domain: Polytope, grid: GridSpec, sampling: str) -> np.ndarray:
    """Grid cell centres, or one uniform sample per grid cell (seed 0) for "jitter".

    Cells thinner than the spacing that repeat on a lattice alias against the
    centres; the jittered points are unbiased for any cell size.
    """
    pts = grid.points(domain.lo, domain.hi)
    if sampling == "jitter":
        h = grid.spacing(domain.lo, domain.hi)
        pts = pts + (np.random.default_rng(0).random(pts.shape) - 0.5) * h
    elif sampling != "grid":
        raise ValueError(f"unknown sampling {sampling!r}")
    return pts[domain.contains(pts)]


def _boundary_samples(domain: Polytope, grid: GridSpec) -> np.ndarray:
    if not domain.is_box():
        return domain.vertices
    lo, hi = domain.lo, domain.hi
    out = []
    for i in range(domain.n):
        pts = grid.points(lo, hi)
        for val in (lo[i], hi[i]):
            q = pts.copy()
            q[:, i] = val
            out.append(np.unique(q, axis=0))
    return np.vstack(out)


def _domain(domain) -> Polytope:
    if isinstance(domain, Polytope):
        return domain
    lo, hi = domain
    return Polytope.box(lo, hi)


def basic_wiggle(A1: PairPoint, A2: PairPoint, lam, Aff: AffineData | None = None,
                 domain=None, sigma: float | None = None, gamma: float | None = None,
                 grid: GridSpec | None = None, delta: float | None = None,
                 epsilon: float | None = None, sampling: str = "grid") -> tuple[PwAffineMap, dict]:
    """Wiggle between A1 (weight 1 − λ) and A2 (weight λ) with A2 − A1 ∈ ℛ.

    ``domain`` is a Polytope or a (lo, hi) box, default the unit cube.
    Default δ is 0.4·|A2 − A1|, small enough to keep the two clusters apart.
    """
    n = A1.n
    dom = _domain(domain if domain is not None else (np.zeros(n), np.ones(n)))
    grid = grid or GridSpec.uniform(256, n)
    bar = A1.to_float().scale(1 - float(lam)) + A2.to_float().scale(float(lam))
    if Aff is None:
        Aff = affine_from_pair(bar)
    elif (Aff.d() - bar).norm() > 1e-9 * max(1.0, bar.norm()):
        raise ValueError("d(Aff) is not (1 − λ)A1 + λA2")
    D = A2.to_float() - A1.to_float()
    if D.norm() == 0 or A1 == A2:
        f = PwAffineMap(dom, Piece(Aff, SplitNode(A1)))
        return f, {"n_cells": 0, "fractions": [1.0], "identity": True}
    if not is_in_R(A2 - A1, None if (A1.exact and A2.exact) else 1e-9):
        raise ValueError("A2 − A1 is not in ℛ")
    if not 0 < lam < 1:
        raise ValueError("λ must lie in (0, 1)")
    delta = 0.4 * D.norm() if delta is None else delta
    epsilon = delta if epsilon is None else epsilon
    tree = SplitNode(A1.scale(1 - lam) + A2.scale(lam) if A1.exact and A2.exact else bar)
    tree.s, tree.left, tree.right = lam, SplitNode(A1), SplitNode(A2)
    f, st = _realize(tree, Aff, dom, delta, epsilon, grid, sigma, gamma, max_depth=1,
                     sampling=sampling)
    st["fraction_A1"], st["fraction_A2"] = st["fractions"]
    st["max_dist_to_pair"] = st["max_dist_to_atoms"]
    return f, st


def laminate_wiggle(nu: Laminate | SplitNode, Aff: AffineData | None = None, domain=None,
                    delta: float | None = None, epsilon: float | None = None,
                    grid: GridSpec | None = None, sigma: float | None = None,
                    gamma: float | None = None, max_depth: int = 8,
                    min_cells: float = 2.0, sampling: str = "grid") -> tuple[PwAffineMap, dict]:
    """Realize a finite-order laminate given by its split tree.

    Copies are packed down to a largest extent of ``min_cells`` grid spacings.
    """
    if isinstance(nu, Laminate):
        if len(nu) > 1:
            raise ValueError("a split tree is required; pass the SplitNode of the laminate")
        nu = SplitNode(nu.atoms[0][1])
    tree = nu
    bar = tree.point.to_float()
    n = bar.n
    dom = _domain(domain if domain is not None else (np.zeros(n), np.ones(n)))
    grid = grid or GridSpec.uniform(128, n)
    if Aff is None:
        Aff = affine_from_pair(bar)
    elif (Aff.d() - bar).norm() > 1e-9 * max(1.0, bar.norm()):
        raise ValueError("d(Aff) is not the barycenter of the laminate")
    if tree.is_leaf:
        f = PwAffineMap(dom, Piece(Aff, tree))
        return f, {"n_cells": 0, "fractions": [1.0], "weights": [1.0], "max_fraction_error": 0.0}
    atoms = [p for _, p in tree.leaves()]
    gaps = [(a.to_float() - b.to_float()).norm() for a, b in itertools.combinations(atoms, 2)]
    if delta is None:
        delta = 0.4 * min(gaps) if gaps else 1.0
    epsilon = delta if epsilon is None else epsilon
    return _realize(tree, Aff, dom, delta, epsilon, grid, sigma, gamma, min_cells=min_cells,
                    max_depth=max_depth, sampling=sampling)


# ---------------------------------------------------------------------------
# the bounded-depth iteration
# ---------------------------------------------------------------------------


DEFAULT_SCHEDULE = (0.90, 0.95, 0.975, 0.9875)


def _clusters(vals: np.ndarray, radius: float) -> int:
    centers: list[np.ndarray] = []
    for v in vals:
        if not any(np.linalg.norm(v - c) < radius for c in centers):
            centers.append(v)
            if len(centers) > 64:
                break
    return len(centers)


def _near(df: np.ndarray, targets: Sequence[PairPoint], rel: float) -> list[np.ndarray]:
    """Masks |df − T_j| < rel·ρ_j with ρ_j half the distance from T_j to the other targets."""
    vecs = np.array([t.vec() for t in targets])
    out = []
    for j, t in enumerate(vecs):
        others = np.delete(vecs, j, axis=0)
        gaps = np.linalg.norm(others - t, axis=1)
        gaps = gaps[gaps > 0]
        rho = 0.5 * gaps.min() if len(gaps) else 1.0
        out.append(np.linalg.norm(df - t, axis=1) < rel * rho)
    return out


def nearest_table(f: PwAffineMap, grid: GridSpec, targets: Sequence[PairPoint]) -> np.ndarray:
    """Rows (x_1, ..., x_n, index of the nearest target, distance) per kept grid point."""
    pts = grid.points(f.domain.lo, f.domain.hi)
    ev = f.evaluate(pts, grid.kink_tol)
    keep = ~ev.excluded
    vecs = np.array([t.to_float().vec() for t in targets])
    d = np.linalg.norm(ev.df[keep][:, None, :] - vecs[None, :, :], axis=2)
    j = d.argmin(axis=1)
    return np.column_stack([pts[keep], j, d[np.arange(len(j)), j]])


def ci_iterate(c: TNConfig, k: int = 1, schedule: Sequence[float] = DEFAULT_SCHEDULE,
               iters: int = 1, grid: GridSpec | None = None, m_steps: int = 2,
               rel_delta: float = 0.2, sigma: float = 1 / 32, inspect: int = 8,
               max_cells: int = 50_000) -> tuple[PwAffineMap, list[dict]]:
    """Iterate staircase wiggles with λ along ``schedule`` for a fixed budget.

    Iteration i replaces every leaf whose nominal gradient is
    Z̄_l = (1 − λ_i)P_l + λ_iZ_l by the wiggle of the staircase laminate from
    λ_i to λ_{i+1}; leaves near some P_l are kept.  Closeness to a target is
    measured relative to its separation from the other targets, since the
    entries of the appendix data span six orders of magnitude and an absolute
    δ would force cells far below any grid resolution.
    """
    sched = [float(x) for x in schedule]
    if not 0 < sched[0] < 1 or any(not a < b < 1 for a, b in zip(sched, sched[1:])):
        raise ValueError("the schedule must increase inside (0, 1)")
    if iters > len(sched) - 1:
        raise ValueError(f"at most {len(sched) - 1} iterations for this schedule")
    grid = grid or GridSpec.uniform(128, c.n)
    cf = c.to_float()
    P = [p.to_float() for p in base_points(cf)]
    Z = [z.to_float() for z in endpoints(cf)]
    n, M = c.n, c.M
    dom = Polytope.box(np.zeros(n), np.ones(n))

    def zbar(l: int, lam: float) -> PairPoint:
        return P[l].scale(1 - lam) + Z[l].scale(lam)

    h = float(grid.spacing(dom.lo, dom.hi).max())
    params = WiggleParams(sigma, 2.0 ** 10, 2 * h, grid.kink_tol, max_depth=1 + m_steps,
                          max_cells=max_cells)
    root = Piece(affine_from_pair(zbar(k - 1, sched[0])), None, tag=("Z", k - 1))
    f = PwAffineMap(dom, root)
    pts = grid.points(dom.lo, dom.hi)
    try:
        from .tnconfig import is_wild
        wild = bool(is_wild(cf))
    except (ValueError, np.linalg.LinAlgError):
        wild = None
    prev = f.evaluate(pts, grid.kink_tol)
    stats: list[dict] = [{"iter": 0, "cells": 0, "fractions_Z": [0.0] * c.N,
                          "clusters": 1, "wild": wild, "sigma": sigma}]
    counter = [0]
    scale = max(max(p.norm() for p in P), max(z.norm() for z in Z))
    for it in range(1, iters + 1):
        t0 = time.perf_counter()
        lo_lam, hi_lam = sched[it - 1], sched[it]
        targets = [zbar(l, hi_lam) for l in range(c.N)]
        trees: dict[int, SplitNode] = {}
        for leaf in list(f.leaves()):
            if not (isinstance(leaf.tag, tuple) and leaf.tag[0] == "Z"):
                continue
            l = leaf.tag[1]
            if l not in trees:
                trees[l] = staircase(c, l + 1, _rat(lo_lam), _rat(hi_lam), m_steps)[1]
            leaf.node = trees[l]
            _wiggle_piece(leaf, leaf.polytope(dom), params, 0, counter)
            _tag_leaves(leaf, targets, P)
        ev = f.evaluate(pts, grid.kink_tol)
        keep = ~(ev.excluded | prev.excluded)
        df = ev.df[keep]
        inc = float(np.linalg.norm(df - prev.df[keep], axis=1).mean()) * dom.volume
        near = _near(df, targets + P, rel_delta)
        frac_z = [float(m.mean()) for m in near[: c.N]]
        frac_p = [float(m.mean()) for m in near[c.N:]]
        # oscillation witness: clusters of ∂_β u over the affine pieces of the
        # largest top-level cells, read off analytically
        top = sorted(f.root.cells, key=lambda cc: -cc.gamma)[:inspect]
        per_beta, depths = [], [_depth(cell) for cell in top]
        for beta in range(n):
            cols_t = [t.X[:, beta] for t in targets + P]
            gaps = [np.linalg.norm(a - b) for a, b in itertools.combinations(cols_t, 2)]
            gaps = [g for g in gaps if g > 1e-12 * scale]
            radius = rel_delta * 0.5 * min(gaps) if gaps else 1.0
            counts = []
            for cell in top:
                cols = np.array([pc.df.X[:, beta] for piece in cell.pieces
                                 for pc in piece.leaves()])
                counts.append(_clusters(cols, radius))
            per_beta.append(counts)
        stats.append({
            "iter": it, "lambda": [lo_lam, hi_lam], "cells": counter[0],
            "fractions_Z": frac_z, "fractions_P": frac_p,
            "fraction_Z_total": float(sum(frac_z)), "fraction_P_total": float(sum(frac_p)),
            "coverage": float(ev.covered[keep].mean()),
            "l1_increment": inc, "l1_increment_rel": inc / scale,
            "K": inc * sched[0] / ((hi_lam - lo_lam) * dom.volume * scale),
            "clusters_per_beta": per_beta, "inspected_depths": depths,
            "oscillation_witness": bool(per_beta) and all(cnt and min(cnt) >= 2 for cnt in per_beta),
            "rel_delta": rel_delta, "sigma": sigma, "wild": wild,
            "budget_hit": counter[0] >= max_cells,
            "seconds": time.perf_counter() - t0,
        })
        prev = ev
    return f, stats


def _depth(cell: Cell) -> int:
    return 1 + max((_depth(c) for pc in cell.pieces for c in pc.cells), default=0)


def _rat(x: float) -> Fraction:
    return Fraction(x).limit_denominator(10 ** 6)


def _tag_leaves(piece: Piece, targets_Z: Sequence[PairPoint], P: Sequence[PairPoint]) -> None:
    for pc in piece.leaves():
        if pc.node is None:
            continue
        a = pc.node.point.to_float()
        pc.tag = None
        for kind, pool in (("Z", targets_Z), ("P", P)):
            for l, t in enumerate(pool):
                if (a - t).norm() <= 1e-9 * max(1.0, t.norm()):
                    pc.tag = (kind, l)
                    break
            if pc.tag is not None:
                break
