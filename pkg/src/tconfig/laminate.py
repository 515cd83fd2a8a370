"""Laminates of finite order built by elementary splittings.

A laminate is stored as a list of weighted atoms.  Every construction here
also records its split tree so that the wiggle module can realize it as a
piecewise affine map.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from . import core
from .exterior import PairPoint
from .rconn import is_in_R, random_rparam, assemble
from .tnconfig import TNConfig, base_points, endpoints


@dataclass(frozen=True)
class Region:
    """An optional open set given as a union of balls in the paired space."""

    balls: tuple[tuple[PairPoint, float], ...]

    def contains(self, p: PairPoint) -> bool:
        return any((p - c).norm() < r for c, r in self.balls)

    def contains_segment(self, a: PairPoint, b: PairPoint, samples: int = 17) -> bool:
        af, bf = a.to_float(), b.to_float()
        return all(self.contains(af.scale(1 - t) + bf.scale(t))
                   for t in np.linspace(0.0, 1.0, samples))


def _one(exact: bool):
    return Fraction(1) if exact else 1.0


@dataclass
class Laminate:
    atoms: list[tuple[object, PairPoint]]

    def __post_init__(self) -> None:
        merged: list[tuple[object, PairPoint]] = []
        for w, p in self.atoms:
            if w < 0:
                raise ValueError("negative weight")
            for i, (w2, q) in enumerate(merged):
                if q == p:
                    merged[i] = (w2 + w, q)
                    break
            else:
                merged.append((w, p))
        self.atoms = [(w, p) for w, p in merged if w != 0]
        if not self.atoms:
            raise ValueError("a laminate needs at least one atom")
        total = sum(w for w, _ in self.atoms)
        if self.exact:
            if total != 1:
                raise ValueError(f"weights sum to {total}, not 1")
        elif abs(float(total) - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {total}, not 1")

    @property
    def exact(self) -> bool:
        return all(isinstance(w, (Fraction, int)) and p.exact for w, p in self.atoms)

    @classmethod
    def dirac(cls, p: PairPoint) -> "Laminate":
        return cls([(_one(p.exact), p)])

    def __len__(self) -> int:
        return len(self.atoms)

    def weight_of(self, p: PairPoint):
        for w, q in self.atoms:
            if q == p:
                return w
        return 0

    def to_json(self) -> list:
        return [{"w": core.scalar_to_json(w), **p.to_json()} for w, p in self.atoms]

    @classmethod
    def from_json(cls, data: list) -> "Laminate":
        exact = all(isinstance(a["w"], str) for a in data)
        return cls([(core.scalar_from_json(a["w"], exact), PairPoint.from_json(a, exact))
                    for a in data])


def barycenter(nu: Laminate) -> PairPoint:
    w0, p0 = nu.atoms[0]
    out = p0.scale(w0)
    for w, p in nu.atoms[1:]:
        out = out + p.scale(w)
    return out


def _check_segment(A: PairPoint, B1: PairPoint, B2: PairPoint, s, region: Region | None) -> None:
    if not 0 <= s <= 1:
        raise ValueError("split parameter outside [0, 1]")
    recon = B1.scale(1 - s) + B2.scale(s)
    exact = A.exact and B1.exact and B2.exact
    if exact:
        ok = recon == A
    else:
        ok = (recon - A).norm() <= 1e-10 * max(1.0, A.norm())
    if not ok or not is_in_R(B2 - B1, None if exact else 1e-9).member:
        raise ValueError("not an ℛ-segment split")
    if region is not None and not region.contains_segment(B1, B2):
        raise ValueError("the splitting segment leaves the region")


def split(nu: Laminate, atom_index: int, B1: PairPoint, B2: PairPoint, s,
          region: Region | None = None) -> Laminate:
    """Replace atom A = (1 − s)B1 + sB2 of weight w by (1 − s)w δ_B1 + s w δ_B2."""
    w, A = nu.atoms[atom_index]
    _check_segment(A, B1, B2, s, region)
    rest = [a for i, a in enumerate(nu.atoms) if i != atom_index]
    return Laminate(rest + [((1 - s) * w, B1), (s * w, B2)])


# ---------------------------------------------------------------------------
# split trees
# ---------------------------------------------------------------------------


@dataclass
class SplitNode:
    """A point that is either a leaf or split as (1 − s)·left + s·right."""

    point: PairPoint
    s: object = None
    left: "SplitNode | None" = None
    right: "SplitNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def leaves(self, weight=None) -> list[tuple[object, PairPoint]]:
        if weight is None:
            weight = _one(self.point.exact)
        if self.is_leaf:
            return [(weight, self.point)]
        return (self.left.leaves(weight * (1 - self.s))
                + self.right.leaves(weight * self.s))

    def depth(self) -> int:
        return 0 if self.is_leaf else 1 + max(self.left.depth(), self.right.depth())

    def laminate(self) -> Laminate:
        return Laminate(self.leaves())


def split_node(node: SplitNode, B1: PairPoint, B2: PairPoint, s,
               region: Region | None = None) -> tuple[SplitNode, SplitNode]:
    if not node.is_leaf:
        raise ValueError("node already split")
    _check_segment(node.point, B1, B2, s, region)
    node.s, node.left, node.right = s, SplitNode(B1), SplitNode(B2)
    return node.left, node.right


# ---------------------------------------------------------------------------
# the T_N iteration
# ---------------------------------------------------------------------------


def split_ratios(c: TNConfig) -> list:
    """s_l with P_l = s_l P_{l−1} + (1 − s_l) Z_{l−1} (cyclic), i.e. 1 − 1/κ_{l−1}."""
    return [1 - 1 / c.kappas[(l - 2) % c.N] for l in range(1, c.N + 1)]


@dataclass
class LaminateTrace:
    base_weights: list            # t_m for m = 0..steps
    base_index: list[int]         # l with the base atom at P_l, per step
    max_s: object
    endpoint_weights: list[list]  # λ_{l;m} after each step
    tree: SplitNode
    barycenter_ok: list[bool] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "base_weights": [core.scalar_to_json(t) for t in self.base_weights],
            "base_index": self.base_index, "max_s": core.scalar_to_json(self.max_s),
            "endpoint_weights": [[core.scalar_to_json(w) for w in row]
                                 for row in self.endpoint_weights],
            "barycenter_ok": self.barycenter_ok,
        }


def tn_laminate(c: TNConfig, k: int, m_steps: int, region: Region | None = None,
                root: SplitNode | None = None) -> tuple[Laminate, LaminateTrace]:
    """Split the single base atom m_steps times, starting from δ_{P_k}.

    ``root`` may be given to graft the iteration onto an existing leaf at P_k.
    """
    if not 1 <= k <= c.N:
        raise IndexError("k outside 1..N")
    P = base_points(c)
    Z = endpoints(c)
    s = split_ratios(c)
    exact = c.exact
    one = _one(exact)
    node = root if root is not None else SplitNode(P[k - 1])
    top = node
    lam = [0 * one] * c.N
    t = one
    l = k
    trace = LaminateTrace([t], [l], max(s), [list(lam)], top, [True])
    target = P[k - 1]
    for _ in range(m_steps):
        prev = (l - 2) % c.N          # 0-based index of l − 1
        # P_l = s_l P_{l−1} + (1 − s_l) Z_{l−1}: weight on Z is 1 − s_l
        node, _ = split_node(node, P[prev], Z[prev], 1 - s[l - 1], region)
        lam[prev] = lam[prev] + t * (1 - s[l - 1])
        t = t * s[l - 1]
        l = prev + 1
        trace.base_weights.append(t)
        trace.base_index.append(l)
        trace.endpoint_weights.append(list(lam))
        nu = Laminate([(t, P[l - 1])] + [(w, z) for w, z in zip(lam, Z)])
        b = barycenter(nu)
        trace.barycenter_ok.append(b == target if exact else
                                   (b - target).norm() <= 1e-9 * max(1.0, target.norm()))
    nu = Laminate([(t, P[l - 1])] + [(w, z) for w, z in zip(lam, Z)])
    return nu, trace


def scaled_multipliers(c: TNConfig, mu) -> TNConfig:
    """The configuration with multipliers μκ_i; its endpoints are (1 − μ)P_l + μZ_l."""
    return TNConfig(c.P, c.steps, [mu * kk for kk in c.kappas])


def staircase(c: TNConfig, k: int, lam, mu, m_steps: int,
              region: Region | None = None) -> tuple[Laminate, SplitNode]:
    """A finite-order laminate with barycenter (1 − λ)P_k + λZ_k.

    The first split is along [P_k, Z̃_k] with Z̃_k = (1 − μ)P_k + μZ_k; the
    P_k part is then iterated on the configuration with multipliers μκ_i.
    """
    if not (0 <= lam <= mu < 1) or mu <= 0:
        raise ValueError("need 0 ≤ λ ≤ μ < 1 and μ > 0")
    if any(not mu * kk > 1 for kk in c.kappas):
        raise ValueError("need μκ_i > 1 for every i")
    ct = scaled_multipliers(c, mu)
    Pk = base_points(c)[k - 1]
    Zt = endpoints(ct)[k - 1]
    Zbar = Pk.scale(1 - lam) + endpoints(c)[k - 1].scale(lam)
    ratio = lam / mu
    if ratio == 1:
        return Laminate.dirac(Zt), SplitNode(Zt)
    if ratio == 0:
        nu, tr = tn_laminate(ct, k, m_steps, region)
        return nu, tr.tree
    root = SplitNode(Zbar)
    left, _ = split_node(root, Pk, Zt, ratio, region)
    tn_laminate(ct, k, m_steps, region, root=left)
    return root.laminate(), root


# ---------------------------------------------------------------------------
# ℛ-convexity sampling
# ---------------------------------------------------------------------------


@dataclass
class ProbeReport:
    max_violation: float
    witness: dict | None
    samples: int

    def to_json(self) -> dict:
        return {"max_violation": self.max_violation, "samples": self.samples,
                "witness": self.witness}


def rconvexity_probe(f: Callable[[PairPoint], float], M: int, n: int, samples: int = 200,
                     seed: int = 0, t_grid: int = 11, scale: float = 1.0) -> ProbeReport:
    """Largest value of f(tA + (1 − t)B) − t f(A) − (1 − t) f(B) on random ℛ-segments."""
    rng = np.random.default_rng(seed)
    worst, wit = 0.0, None
    ts = np.linspace(0.0, 1.0, t_grid)
    for _ in range(samples):
        A = PairPoint(rng.normal(size=(M, n)) * scale, rng.normal(size=(M, n)) * scale)
        C = assemble(random_rparam(rng, M, n, exact=False)).scale(scale)
        B = A + C
        fa, fb = float(f(A)), float(f(B))
        for t in ts:
            v = float(f(A.scale(t) + B.scale(1 - t))) - t * fa - (1 - t) * fb
            if v > worst:
                worst, wit = v, {"t": float(t), "A": A.to_json(), "B": B.to_json()}
    return ProbeReport(worst, wit, samples)


def weights_vector(nu: Laminate, points: Sequence[PairPoint]) -> list:
    return [nu.weight_of(p) for p in points]
