"""Embedded integer datasets and their one-command verification.

Three datasets are available:

``t5-sz04``
    The five-step seed in 2×2.  Only the X blocks of its steps are printed;
    the Y parts (a″), the multipliers and the inequality data below were
    reconstructed here by a linear program and rounded to integers, and are
    re-verified exactly on every load.
``t14-2d``
    The fourteen-step certificate in 2×2 together with the printed X, Y,
    determinant and inequality tables.
``t14-3d``
    The fourteen-step data in 3×3 (A, B, n, a, Q, c, m, d).  X and Y are not
    printed; they are rebuilt with κ_i = 2 from the 2-D recursion.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import core
from .exterior import PairPoint
from .polyfactory import (TOPLEFT, PolyCert, check_ineq_system, detect_app3d, hat_from_app2d)
from .rconn import RParam, assemble, is_in_R
from .tnconfig import TNConfig, endpoints

# fmt: off
A2_a = [[1, 1], [1, 2], [0, 1], [5, 2], [11, 9], [17, 7], [47, 19], [23, 9], [41, 18], [68, 1], [299, 171],
 [101, 21], [-3084, -1857], [2401, 1590]]

A2_n = [[1, 0], [0, 1], [2, 1], [3, 2], [1, 2], [1, 1], [1, 5], [1, 0], [0, 1], [1, 2], [1, 13], [2, 1],
 [1, 3], [1, 2]]

A2_A = [[[1, 0], [1, 0]], [[0, 1], [0, 2]], [[0, 0], [2, 1]], [[15, 10], [6, 4]], [[11, 22], [9, 18]],
 [[17, 17], [7, 7]], [[47, 235], [19, 95]], [[23, 0], [9, 0]], [[0, 41], [0, 18]],
 [[68, 136], [1, 2]], [[299, 3887], [171, 2223]], [[202, 101], [42, 21]],
 [[-3084, -9252], [-1857, -5571]], [[2401, 4802], [1590, 3180]]]

A2_X = [[[2, 0], [2, 0]], [[1, 2], [1, 4]], [[1, 1], [5, 4]], [[31, 21], [15, 11]], [[38, 55], [27, 43]],
 [[61, 67], [32, 39]], [[138, 520], [63, 222]], [[137, 285], [62, 127]], [[114, 367], [53, 163]],
 [[250, 598], [55, 149]], [[780, 8236], [396, 4593]], [[885, 4551], [309, 2412]],
 [[-5485, -14054], [-3447, -8751]], [[2401, 4802], [1590, 3180]]]

A2_DET = [[0, -2, -7, 46, 173, 291, -1528, 45, -461, 5258, 328370, 732639, -455509, 3244],
 [-2, 0, 4, -56, 65, 85, -2250, -535, -1013, 3921, 322401, 727580, -435158, -4800],
 [-7, 4, 0, 10, 255, 318, -236, 540, 399, 6255, 354946, 745472, -487930, 12815],
 [46, -56, 10, 0, -184, 58, -1375, -112, -532, 7142, 302003, 718634, -396458, -19545],
 [173, 65, 255, -184, 0, -152, 1160, 266, 1008, 7268, 357311, 738671, -445404, -6830],
 [291, 85, 318, 58, -152, 0, 48, 148, 272, 8577, 300810, 713284, -377619, -27190],
 [-1528, -2250, -236, -1375, 1160, 48, 0, -140, -114, -7552, 236754, 644304, -699561, 155340],
 [45, -535, 540, -112, 266, 148, -140, 0, -90, 4677, 216004, 655478, -403435, 10016],
 [-461, -1013, 399, -532, 1008, 272, -114, -90, 0, -2366, 251313, 662875, -564014, 83284],
 [5258, 3921, 6255, 7142, 7268, 8577, -7552, 4677, -2366, 0, -249238, 432943, -269804, 66541],
 [328370, 322401, 354946, 302003, 357311, 300810, 236754, 216004, 251313, -249238, 0, -549600,
  -2060310, 1809723],
 [732639, 727580, 745472, 718634, 738671, 713284, 644304, 655478, 662875, 432943, -549600, 0,
  1227930, 842757],
 [-455509, -435158, -487930, -396458, -445404, -377619, -699561, -403435, -564014, -269804,
  -2060310, 1227930, 0, -889806],
 [3244, -4800, 12815, -19545, -6830, -27190, 155340, 10016, 83284, 66541, 1809723, 842757, -889806,
  0]]

A2_b = [[0, -2390], [-478, 2665], [-550, 769], [167, -492], [-1240, 2977], [0, -293], [-2442, 5945],
 [-1086, 2706], [-2018, 4704], [2898, 6192], [-38226, 67612], [-197436, 313998], [-165154, 173736],
 [600721, -884543]]

A2_B = [[[0, 0], [-2390, 0]], [[0, -478], [0, 2665]], [[-1100, -550], [1538, 769]],
 [[501, 334], [-1476, -984]], [[-1240, -2480], [2977, 5954]], [[0, 0], [-293, -293]],
 [[-2442, -12210], [5945, 29725]], [[-1086, 0], [2706, 0]], [[0, -2018], [0, 4704]],
 [[2898, 5796], [6192, 12384]], [[-38226, -496938], [67612, 878956]],
 [[-394872, -197436], [627996, 313998]], [[-165154, -495462], [173736, 521208]],
 [[600721, 1201442], [-884543, -1769086]]]

A2_Y = [[[0, 0], [-4780, 0]], [[0, -956], [-2390, 5330]], [[-2200, -1578], [686, 4203]],
 [[-98, -360], [-3804, 1466]], [[-3079, -5654], [3626, 14358]], [[-1839, -3174], [63, 7818]],
 [[-6723, -27594], [12246, 67561]], [[-6453, -15384], [11713, 37836]],
 [[-5367, -19420], [9007, 47244]], [[429, -5810], [21391, 67308]],
 [[-78921, -1005482], [150423, 1812836]], [[-830439, -903416], [1338803, 1561876]],
 [[-765875, -1696904], [1058279, 2290294]], [[600721, 1201442], [-884543, -1769086]]]

A2_INEQ = [[0, -14094, -8, -84, -20318, -22264, -1591, -55202, -75998, -1111337, -65587591, -167102263,
  -61464611, -4646178],
 [-8, 0, -6942, -20256, -202, -8618, -21109, -8664, -886, -67141, -250717, -36763141, -144984275,
  -3687990],
 [-3838, -10, 0, -62, -291, -41937, -1703, -132411, -130913, -2399922, -111671426, -272490671,
  -369903, -3001900],
 [-68, -13720, -2848, 0, -9546, -266, -3327, -3264, -31950, -483619, -35079069, -102909587,
  -102243013, -4157616],
 [-34208, -5848, -57545, -6086, 0, -106, -3106, -1060, -38580, -1280328, -60252787, -171624418,
  -67043568, -1415309],
 [-491, -309, -9119, -242, -126, 0, -2729, -7504, -26058, -645499, -35937776, -110475298, -99454131,
  -3531578],
 [-60472, -81109, -48804, -69076, -30146, -34503, 0, -1597, -5980, -4718, -161415, -30415525,
  -152191972, -1832422],
 [-4374, -2198, -23573, -18270, -32330, -19876, -1953, 0, -946, -3408, -9449058, -55634422,
  -130221766, -5207692],
 [-11446, -30670, -2733, -31488, -2816, -11722, -2579, -4314, 0, -1106, -286694, -30537574,
  -149251076, -3155154],
 [-103250, -216455, -7784, -136018, -40558, -79267, -3849, -80239, -75380, 0, -149790, -316577,
  -171133360, -74451],
 [-585154, -767541, -82753, -1295659, -413553, -1533006, -3154731, -3530376, -2758743, -11458950, 0,
  -561952, -171398130, -147875],
 [-13265973, -6363564, -20766439, -2984648, -10736775, -334280, -74865005, -12298686, -42511131,
  -18539785, -379448, 0, -742748, -101297011],
 [-52307366, -45222386, -63419413, -26275272, -43020936, -16275094, -168954753, -34276306,
  -107134832, -18797070, -1409240700, -206702, 0, -908356],
 [-10654898, -10843506, -10290272, -11879017, -11087582, -12283048, -394405, -9564210, -4999540,
  -8915559, -1492927, -334307895, -44196336, 0]]

A3_A = [[[1, 0, 0], [1, 0, 0], [0, 0, 0]], [[0, 1, 0], [0, 2, 0], [0, 0, 0]],
 [[0, 0, 0], [2, 1, 0], [0, 0, 0]], [[15, 10, 0], [6, 4, 0], [0, 0, 0]],
 [[11, 22, 0], [9, 18, 0], [0, 0, 0]], [[17, 17, 0], [7, 7, 0], [0, 0, 0]],
 [[47, 235, 0], [19, 95, 0], [0, 0, 0]], [[23, 0, 0], [9, 0, 0], [0, 0, 0]],
 [[0, 41, 0], [0, 18, 0], [0, 0, 0]], [[-106, -212, 0], [-54, -108, 0], [0, 0, 0]],
 [[-9, -117, 0], [-4, -52, 0], [0, 0, 0]], [[-1, -1, -1], [-1, -1, -1], [-1, -1, -1]],
 [[1, 3, 0], [5, 15, 0], [0, 0, 0]], [[1, 1, 1], [1, 1, 1], [1, 1, 1]]]

A3_B = [[[0, 0, 1], [0, 43595, 0], [0, 0, 0]], [[61797, 0, 0], [-962, 0, -1], [0, 0, 0]],
 [[24101, -48202, 0], [155, -310, 0], [0, 0, 0]],
 [[112530, -168795, 0], [-285490, 428235, 0], [0, 0, 0]],
 [[534254, -267127, 0], [-705914, 352957, 0], [0, 0, 0]],
 [[198074, -198074, 0], [-484546, 484546, 0], [0, 0, 0]],
 [[2371885, -474377, 0], [-5869210, 1173842, 0], [0, 0, 0]],
 [[0, -217131, 0], [0, 558346, 0], [0, 0, 1]], [[475997, 0, 0], [-1086645, 0, 0], [0, 0, 0]],
 [[-2938894, 1469447, 0], [5747526, -2873763, 0], [0, 0, 0]],
 [[-1483326, 114102, 0], [3324373, -255721, 0], [0, 0, 1]],
 [[3, -3, 0], [383268, -383269, 1], [0, 0, 0]],
 [[1201149, -400383, -367028], [-1859523, 619841, 688669], [-6, 2, 2]],
 [[-557570, 190543, 367027], [836968, -148299, -688669], [6, -2, -4]]]

A3_n = [[1, 0, 0], [0, 1, 0], [2, 1, 0], [3, 2, 0], [1, 2, 0], [1, 1, 0], [1, 5, 0], [1, 0, 0], [0, 1, 0],
 [1, 2, 0], [1, 13, 0], [1, 1, 1], [1, 3, 0], [1, 1, 1]]

A3_a = [[1, 1, 0], [1, 2, 0], [0, 1, 0], [5, 2, 0], [11, 9, 0], [17, 7, 0], [47, 19, 0], [23, 9, 0],
 [41, 18, 0], [-106, -54, 0], [-9, -4, 0], [-1, -1, -1], [1, 5, 0], [1, 1, 1]]

A3_Q = [[[171, 1, 0], [-75, 0, -43595], [-155, 0, 0]], [[0, 8, 61797], [1, 58, -962], [0, -101, 0]],
 [[0, 0, 24101], [0, 0, 155], [0, 0, 0]], [[0, 0, 56265], [0, 0, -142745], [0, 0, 0]],
 [[0, 0, 267127], [0, 0, -352957], [0, 0, 0]], [[0, 0, 198074], [0, 0, -484546], [0, 0, 0]],
 [[0, 0, 474377], [0, 0, -1173842], [0, 0, 0]], [[65, 0, 217131], [91, 0, -558346], [-204, 1, 0]],
 [[0, -137, 475997], [0, -212, -1086645], [0, 1, 0]],
 [[0, 0, -1469447], [0, 0, 2873763], [0, 0, 0]], [[0, 0, -114102], [0, 0, 255721], [0, 1, 0]],
 [[0, 0, 3], [0, 1, 383269], [0, 0, 0]], [[0, -367028, 400383], [0, 688669, -619841], [0, 2, -2]],
 [[0, 367027, -190543], [0, -688669, 148299], [0, -4, 2]]]

A3_D = [[0, 0, 0, 0, 2, -182467, 0, 1033781, -25405], [0, 0, 0, 0, 3, 0, 0, 894424, -26015],
 [0, 0, 0, 0, 1, 0, 0, 863315, -29063], [0, 0, 0, 0, 1, 0, 121, -289167, -27231],
 [0, 0, 0, 0, 1, 0, 21110, 1278617, -28088], [0, 0, 0, 0, 1, 1, 19661, 320873, -27865],
 [0, 0, 0, 0, 0, 0, 2579165, -7138143, -24395], [0, 0, 0, 0, 1, 0, 47457, 785115, -25976],
 [0, 0, 0, 0, 0, 0, 257708, 327493, -25470], [0, 0, 0, 0, 1, 3, 1191038, -3050248, -27779],
 [0, 0, 0, 0, 0, 87, 3073, 555789, -27773], [0, 0, 0, 0, 266745, 611036, 766267, -1237038, -24914],
 [0, 0, 0, 0, -1556334, -573705, -1094427, 2661105, -49244],
 [0, 0, 0, 0, -103426, -37004, -235151, 639412, -27210]]

A2_c = [0, -4938, -18804, -54520, -192834, -176960, -992337, -553838, -682858, 167765, 29184771,
        123336787, 123336787, -10696958]
A2_d = [-44, 128, -189, 42, -59, 29, 140, 102, 140, 199, 241, -503, 186, -337]

A3_c = [0, -193352, -170909, -2127668, -8107342, -10761971, 32323016, -7686922, 5363342, -32272240,
        18951257, 2303591, 2997661, 277746]
A3_m = [-165, 85074, -3130948, -6333, 689, 134, 51, 907, 97, 40, -17, -16, 43, -221]

# seed: X blocks u⊗b as printed; a″, c, d reconstructed
S5_u = [[1, -1], [1, -2], [1, -3], [-3, 7], [0, -1]]
S5_b = [[1, 1], [1, 2], [1, 0], [1, 1], [1, 2]]
S5_a2 = [[77, 286], [307, 196], [462, 58], [-1001, -402], [155, -138]]
S5_c = [0, 1074, -2585, 1737, 315]
S5_d = [-460, -158, -463, -134, -457]
# fmt: on

NAMES = ("t5-sz04", "t14-2d", "t14-3d")


@dataclass
class Dataset:
    name: str
    M: int
    n: int
    N: int
    tables: dict = field(default_factory=dict)
    kappa: int = 2


def _ex(x) -> np.ndarray:
    return core.array(x, core.Mode.EXACT)


def load(name: str) -> Dataset:
    if name == "t14-2d":
        t = {"a": A2_a, "n": A2_n, "A": A2_A, "X": A2_X, "DET": A2_DET, "b": A2_b, "B": A2_B,
             "Y": A2_Y, "INEQ": A2_INEQ, "c": A2_c, "d": A2_d}
        return Dataset(name, 2, 2, 14, t)
    if name == "t14-3d":
        t = {"A": A3_A, "B": A3_B, "n": A3_n, "a": A3_a, "Q": A3_Q, "d": A3_D, "c": A3_c,
             "m": A3_m}
        return Dataset(name, 3, 3, 14, t)
    if name == "t5-sz04":
        t = {"u": S5_u, "b": S5_b, "a2": S5_a2, "c": S5_c, "d": S5_d}
        return Dataset(name, 2, 2, 5, t)
    raise ValueError(f"unknown dataset {name!r}; choose from {', '.join(NAMES)}")


def _rparam_2d(b, u, v12) -> RParam:
    return RParam.make(_ex(b), _ex(u), {(0, 1): _ex(v12)}, exact=True)


def config(name: str) -> TNConfig:
    """The dataset as a configuration with P = 0 and κ_i = 2 (2×2 datasets only)."""
    ds = load(name)
    if name == "t14-2d":
        t = ds.tables
        steps = [_rparam_2d(t["n"][i], t["a"][i], [-x for x in t["b"][i]]) for i in range(ds.N)]
    elif name == "t5-sz04":
        t = ds.tables
        steps = [_rparam_2d(t["b"][i], t["u"][i], t["a2"][i]) for i in range(ds.N)]
    else:
        raise ValueError("only the 2×2 datasets define a configuration")
    return TNConfig(PairPoint.zero(2, 2, True), steps, [Fraction(ds.kappa)] * ds.N)


def cert(name: str) -> PolyCert:
    """Configuration plus its inequality data in the general (minors) form."""
    ds = load(name)
    c = [Fraction(x) for x in ds.tables["c"]]
    d = [{TOPLEFT: Fraction(x)} for x in ds.tables["d"]]
    return PolyCert(config(name), c, d)


def rebuild_3d(kappa: int = 2) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """X_i = ΣA_{<i} + κA_i and Y_i = ΣB_{<i} + κB_i."""
    t = load("t14-3d").tables
    X, Y = [], []
    SA, SB = core.zeros((3, 3), True), core.zeros((3, 3), True)
    for A, B in zip(t["A"], t["B"]):
        A, B = _ex(A), _ex(B)
        X.append(SA + kappa * A)
        Y.append(SB + kappa * B)
        SA, SB = SA + A, SB + B
    return X, Y


def _cross(u, v):
    return np.array([u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2],
                     u[0] * v[1] - u[1] * v[0]], dtype=object)


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""

    def to_json(self) -> dict:
        return {"name": self.name, "passed": self.passed, "detail": self.detail}


@dataclass
class VerifyReport:
    dataset: str
    checks: list[Check]
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def first_failure(self) -> Check | None:
        return next((c for c in self.checks if not c.passed), None)

    def to_json(self) -> dict:
        return {"v": 1, "dataset": self.dataset, "passed": self.passed,
                "checks": [c.to_json() for c in self.checks], **self.extra}


def _compare(name: str, got, want) -> Check:
    """Entry-by-entry comparison of nested integer tables."""
    g, w = np.asarray(got, dtype=object), np.asarray(want, dtype=object)
    if g.shape != w.shape:
        return Check(name, False, f"shape {g.shape} != {w.shape}")
    for idx in np.ndindex(*g.shape):
        if g[idx] != w[idx]:
            one = tuple(i + 1 for i in idx)
            return Check(name, False, f"first mismatch at {one}: computed {g[idx]}, printed {w[idx]}")
    return Check(name, True, f"{g.size} entries match")


def _zero_sum(name: str, mats) -> Check:
    s = sum((_ex(m) for m in mats), core.zeros(np.shape(mats[0]), True))
    ok = core.is_zero(s)
    return Check(name, ok, "sum is zero" if ok else f"sum = {s.tolist()}")


def verify(name: str) -> VerifyReport:
    if name == "t14-2d":
        return _verify_2d()
    if name == "t14-3d":
        return _verify_3d()
    if name == "t5-sz04":
        return _verify_t5()
    raise ValueError(f"unknown dataset {name!r}; choose from {', '.join(NAMES)}")


def _verify_2d() -> VerifyReport:
    ds = load("t14-2d")
    t = ds.tables
    checks = []
    checks.append(_compare("A_i = a_i⊗n_i", [np.outer(_ex(a), _ex(n)) for a, n in zip(t["a"], t["n"])],
                           t["A"]))
    checks.append(_compare("B_i = b_i⊗n_i", [np.outer(_ex(b), _ex(n)) for b, n in zip(t["b"], t["n"])],
                           t["B"]))
    checks.append(_zero_sum("ΣA_i = 0", t["A"]))
    checks.append(_zero_sum("ΣB_i = 0", t["B"]))
    c = config("t14-2d")
    Z = endpoints(c)
    X = [z.X for z in Z]
    Yapp = [z.Y.dot(core.J_matrix(True)) for z in Z]
    checks.append(_compare("X_i", X, t["X"]))
    checks.append(_compare("det(X_i − X_j)",
                           [[core.det2(X[i] - X[j]) for j in range(14)] for i in range(14)], t["DET"]))
    checks.append(_compare("Y_i", Yapp, t["Y"]))
    cc = [Fraction(x) for x in t["c"]]
    dd = [Fraction(x) for x in t["d"]]
    res = check_ineq_system(X, Yapp, cc, dd, "app2d")
    checks.append(_compare("inequality matrix", res.values, t["INEQ"]))
    checks.append(Check("all off-diagonal values < 0", res.passed,
                        f"{res.n_negative}/{14 * 13} negative, margin {res.margin}"))
    gen = check_ineq_system(X, [z.Y for z in Z], cc, [{TOPLEFT: x} for x in dd], "general")
    checks.append(Check("general form agrees with the 2-D form",
                        gen.values == res.values, "minors route vs J route"))
    return VerifyReport("t14-2d", checks, {"margin": core.scalar_to_json(res.margin)})


def _verify_3d() -> VerifyReport:
    ds = load("t14-3d")
    t = ds.tables
    checks = []
    checks.append(_compare("A_i = a_i⊗n_i", [np.outer(_ex(a), _ex(n)) for a, n in zip(t["a"], t["n"])],
                           t["A"]))
    Bq = [np.array([_cross(_ex(n), _ex(q)) for q in Q]) for n, Q in zip(t["n"], t["Q"])]
    checks.append(_compare("B_i rows = n_i × q_i rows", Bq, t["B"]))
    checks.append(_zero_sum("ΣA_i = 0", t["A"]))
    checks.append(_zero_sum("ΣB_i = 0", t["B"]))
    X, Y = rebuild_3d(ds.kappa)
    c = [Fraction(x) for x in t["c"]]
    d = [[Fraction(x) for x in row] for row in t["d"]]
    m = [Fraction(x) for x in t["m"]]
    default = check_ineq_system(X, [-y for y in Y], c, d, "app3d", m, "delsign", "i")
    best, rows = detect_app3d(X, Y, c, d, m)
    conv = dict(best.convention)
    checks.append(Check("182 values strictly negative", best.passed,
                        f"{best.n_negative}/182 negative under the detected convention {conv}"))
    extra = {
        "assumptions": {"kappa": ds.kappa, "P": 0,
                        "X_i": "ΣA_{<i} + κA_i", "Y_i": "ΣB_{<i} + κB_i"},
        "detected_convention": conv, "n_negative": best.n_negative,
        "default_convention_n_negative": default.n_negative,
        "failing": [[i, j, core.scalar_to_json(v)] for i, j, v in best.failing()],
        "conventions_tried": rows,
    }
    return VerifyReport("t14-3d", checks, extra)


def _verify_t5() -> VerifyReport:
    ds = load("t5-sz04")
    c = config("t5-sz04")
    checks = []
    Cs = [assemble(s) for s in c.steps]
    t = ds.tables
    checks.append(_compare("X blocks = u_i⊗b_i", [C.X for C in Cs],
                           [np.outer(_ex(u), _ex(b)) for u, b in zip(t["u"], t["b"])]))
    checks.append(_zero_sum("ΣC_i = 0 (X block)", [C.X for C in Cs]))
    checks.append(_zero_sum("ΣC_i = 0 (Y block)", [C.Y for C in Cs]))
    checks.append(Check("every C_i ∈ ℛ", all(is_in_R(C).member for C in Cs), ""))
    res = cert("t5-sz04").check()
    checks.append(Check("inequality system strictly negative", res.passed,
                        f"{res.n_negative}/20 negative, margin {res.margin}"))
    return VerifyReport("t5-sz04", checks, {"margin": core.scalar_to_json(res.margin),
                                            "reconstructed": ["a2", "c", "d"]})
