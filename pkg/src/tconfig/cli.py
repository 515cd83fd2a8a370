"""The ``tconfig`` command line.

Every subcommand builds a JSON report (schema field ``"v": 1``), prints it
as JSON or CSV and, with ``--out``, writes its artifact to disk.  The
artifact is the object the command produced (a certificate for ``lift`` and
``extend``, the energy for ``build-F``) or otherwise the report itself.

Exit codes: 0 when every check passes, 2 on invalid input, 3 when a
verification fails (the report is still emitted).
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import io
import json
import os
import sys
import time
from dataclasses import dataclass
from typing import Callable, Sequence

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_MISMATCH = 3

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


class UsageError(ValueError):
    """Input that fails validation; maps to exit code 2."""


@dataclass(frozen=True)
class Session:
    M: int = 2
    n: int = 2
    mode: str = "exact"
    tol: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.M < 2 or self.n < 2:
            raise UsageError("M and n must be at least 2")
        if self.mode not in ("exact", "float"):
            raise UsageError(f"unknown mode {self.mode!r}")
        if self.mode == "exact" and self.tol != 0:
            raise UsageError("exact mode does not take a tolerance")
        if self.tol < 0:
            raise UsageError("tolerance must be non-negative")

    @property
    def exact(self) -> bool:
        return self.mode == "exact"

    @property
    def ftol(self) -> float | None:
        """Tolerance handed to float checks; None selects the module default."""
        return None if self.exact or self.tol == 0 else self.tol


def apply_thread_cap(env=os.environ) -> int | None:
    """Copy TCONFIG_THREADS into the BLAS/OpenMP variables; returns the cap."""
    raw = env.get("TCONFIG_THREADS")
    if raw is None or raw == "":
        return None
    try:
        cap = int(raw)
    except ValueError:
        raise UsageError(f"TCONFIG_THREADS must be a positive integer, got {raw!r}") from None
    if cap < 1:
        raise UsageError(f"TCONFIG_THREADS must be a positive integer, got {raw!r}")
    for var in _THREAD_VARS:
        env[var] = str(cap)
    return cap


# ---------------------------------------------------------------------------
# artifacts
# ---------------------------------------------------------------------------


def load_artifact(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise UsageError(f"no such file: {path}") from None
    except json.JSONDecodeError as e:
        raise UsageError(f"{path} is not valid JSON: {e}") from None
    if not isinstance(data, dict) or data.get("v") != 1:
        raise UsageError(f"{path} is not a version-1 artifact")
    return data


def _cert_or_config(data: dict):
    """A PolyCert when inequality data is present, else a bare TNConfig."""
    from .polyfactory import PolyCert
    from .tnconfig import TNConfig

    try:
        if "config" in data:
            return PolyCert.from_json(data)
        return TNConfig.from_json(data)
    except (KeyError, TypeError, ValueError) as e:
        raise UsageError(f"malformed configuration artifact: {e}") from None


def _input_cert(args: argparse.Namespace, session: Session, need_cert: bool = True):
    from . import certdata

    if getattr(args, "file", None):
        obj = _cert_or_config(load_artifact(args.file))
    elif args.dataset:
        if args.dataset not in certdata.NAMES:
            raise UsageError(f"unknown dataset {args.dataset!r}")
        if args.dataset == "t14-3d":
            raise UsageError("t14-3d carries no configuration; use verify-cert")
        obj = certdata.cert(args.dataset)
    else:
        raise UsageError("give an input file or --dataset")
    is_cert = hasattr(obj, "config")
    if need_cert and not is_cert:
        raise UsageError("this command needs inequality data (a certificate artifact)")
    if not session.exact:
        obj = obj.to_float()
    return obj


def _config_of(obj):
    return obj.config if hasattr(obj, "config") else obj


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _flatten(prefix: str, value, rows: list[tuple[str, str]]) -> None:
    if isinstance(value, dict):
        for k, v in value.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), v, rows)
    elif isinstance(value, list) and value and all(isinstance(v, (dict, list)) for v in value):
        for i, v in enumerate(value):
            _flatten(f"{prefix}[{i}]", v, rows)
    else:
        rows.append((prefix, json.dumps(value) if isinstance(value, list) else str(value)))


def to_csv(report: dict) -> str:
    rows: list[tuple[str, str]] = []
    _flatten("", report, rows)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["key", "value"])
    w.writerows(rows)
    return buf.getvalue()


def _emit(report: dict, fmt: str, stream) -> None:
    if fmt == "csv":
        stream.write(to_csv(report))
    else:
        stream.write(json.dumps(report, indent=2, default=str) + "\n")


def _write_out(path: str, data: dict, fmt: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if fmt == "csv" and not path.endswith(".json"):
            fh.write(to_csv(data))
        else:
            json.dump(data, fh, indent=1, default=str)
            fh.write("\n")


# ---------------------------------------------------------------------------
# subcommands: each returns (report, artifact or None)
# ---------------------------------------------------------------------------


def cmd_verify_cert(args, session: Session):
    from . import certdata

    if args.dataset not in certdata.NAMES:
        raise UsageError(f"unknown dataset {args.dataset!r}; choose from {', '.join(certdata.NAMES)}")
    t0 = time.perf_counter()
    rep = certdata.verify(args.dataset).to_json()
    rep["seconds"] = time.perf_counter() - t0
    return rep, None


def _nondeg_report(obj, session: Session) -> dict:
    from .tnconfig import check_nondegenerate, check_wild

    c = _config_of(obj)
    nd = check_nondegenerate(c, session.ftol)
    wild = {str(b): check_wild(c, b, session.ftol) for b in range(1, c.n + 1)}
    rep = {"v": 1, "M": c.M, "n": c.n, "N": c.N, "exact": c.exact,
           "nondegenerate": nd.to_json(), "wild": wild}
    passed = nd.passed and all(wild.values())
    if hasattr(obj, "check"):
        ineq = obj.check()
        rep["inequalities"] = ineq.to_json()
        passed = passed and ineq.passed
    rep["passed"] = passed
    return rep


def cmd_verify_tn(args, session: Session):
    obj = _input_cert(args, session, need_cert=False)
    return _nondeg_report(obj, session), None


def cmd_lift(args, session: Session):
    from . import certdata
    from .polyfactory import lift_cert

    if args.dataset not in certdata.NAMES or args.dataset == "t14-3d":
        raise UsageError("lift needs a 2×2 dataset: t5-sz04 or t14-2d")
    try:
        cert = lift_cert(certdata.cert(args.dataset), session.M, session.n)
    except ValueError as e:
        raise UsageError(str(e)) from None
    if not session.exact:
        cert = cert.to_float()
    rep = _nondeg_report(cert, session)
    rep["source"] = args.dataset
    # a lift is a construction step: incomplete nondegeneracy is expected here
    rep["passed"] = True
    return rep, cert.to_json()


def cmd_extend(args, session: Session):
    from .polyfactory import extend, extend_to

    cert = _input_cert(args, session)
    t0 = time.perf_counter()
    try:
        if args.target_n is not None:
            first = (args.i1, args.i2) if args.i1 is not None else None
            out, log = extend_to(cert, args.target_n, first=first)
        else:
            if args.i1 is None or args.i2 is None:
                raise UsageError("extend needs --i1 and --i2, or --target-n")
            res = extend(cert, args.i1, args.i2, delta=args.delta)
            out = res.cert
            log = [{"i1": args.i1, "i2": args.i2, "N": out.config.N,
                    "delta": str(res.diagnostics["delta"]),
                    "margin": str(res.diagnostics["margin"])}]
    except UsageError:
        raise
    except ValueError as e:
        rep = {"v": 1, "passed": False, "error": str(e)}
        return rep, None
    rep = _nondeg_report(out, session)
    rep["extensions"] = log
    rep["seconds"] = time.perf_counter() - t0
    return rep, out.to_json()


def _kf_inputs(cert):
    from .tnconfig import endpoints

    Z = endpoints(cert.config)
    return Z, [z.X for z in Z], [z.Y for z in Z]


def cmd_build_f(args, session: Session):
    from . import core
    from .polyfactory import build_F, check_KF

    cert = _input_cert(args, session)
    Z, X, Y = _kf_inputs(cert)
    eps = None if args.epsilon is None else (
        core.to_fraction(args.epsilon) if session.exact else float(args.epsilon))
    delta = 1 if args.delta is None else (
        core.to_fraction(args.delta) if session.exact else float(args.delta))
    try:
        F = build_F(X, Y, cert.c, cert.d, epsilon=eps, delta=delta)
        kf = check_KF(Z, F, tol=session.tol)
    except ValueError as e:
        return {"v": 1, "passed": False, "error": str(e)}, None
    rep = {"v": 1, "passed": kf.passed, "epsilon": core.scalar_to_json(F.epsilon),
           "delta": core.scalar_to_json(F.delta), "pieces": len(F.pieces), "K_F": kf.to_json()}
    return rep, F.to_json()


def cmd_laminate(args, session: Session):
    from . import core
    from .laminate import tn_laminate

    cert = _input_cert(args, session, need_cert=False)
    c = _config_of(cert)
    if not 1 <= args.k <= c.N:
        raise UsageError(f"k must lie in 1..{c.N}")
    steps = args.steps if args.steps is not None else 2 * c.N
    nu, trace = tn_laminate(c, args.k, steps)
    last = trace.endpoint_weights[-1]
    rep = {"v": 1, "k": args.k, "steps": steps, "trace": trace.to_json(),
           "atoms": len(nu), "all_endpoints_positive": all(w > 0 for w in last),
           "laminate": nu.to_json()}
    rep["passed"] = all(trace.barycenter_ok)
    rep["min_endpoint_weight"] = core.scalar_to_json(min(last))
    return rep, None


def _demo_pair():
    """Two points whose difference is the ℛ-element with b = e1, u = (1, 2), v = (1, −1)."""
    from . import core
    from .exterior import PairPoint
    from .rconn import RParam, assemble

    def ex(a):
        return core.array(a, core.Mode.EXACT)

    A1 = PairPoint(ex([[1, 0], [0, 1]]), ex([[0, 1], [2, 0]]))
    C = assemble(RParam.make(ex([1, 0]), ex([1, 2]), {(0, 1): ex([1, -1])}, exact=True))
    return A1, A1 + C


def cmd_wiggle(args, session: Session):
    from . import certdata
    from .tnconfig import base_points, endpoints
    from .wiggle import DEFAULT_SCHEDULE, GridSpec, basic_wiggle, ci_iterate

    if args.grid < 8:
        raise UsageError("--grid must be at least 8")
    grid = GridSpec.uniform(args.grid, 2)
    t0 = time.perf_counter()
    if args.dataset:
        if args.dataset not in ("t14-2d", "t5-sz04"):
            raise UsageError("wiggle iterates a 2×2 dataset: t14-2d or t5-sz04")
        if not 0 <= args.iters < len(DEFAULT_SCHEDULE):
            raise UsageError(f"--iters must lie in 0..{len(DEFAULT_SCHEDULE) - 1}")
        c = certdata.config(args.dataset)
        kw = {"sigma": args.sigma} if args.sigma is not None else {}
        f, stats = ci_iterate(c, k=args.k, iters=args.iters, grid=grid, **kw)
        lam = DEFAULT_SCHEDULE[args.iters]
        P = [p.to_float() for p in base_points(c)]
        targets = [p.scale(1 - lam) + z.to_float().scale(lam)
                   for p, z in zip(P, endpoints(c))] + P
        rep = {"v": 1, "dataset": args.dataset, "iterations": stats,
               "passed": all(s["oscillation_witness"] for s in stats[1:])}
    else:
        from fractions import Fraction

        A1, A2 = _demo_pair()
        lam = Fraction(args.lam).limit_denominator(10**6)
        if not 0 < lam < 1:
            raise UsageError("--lam must lie in (0, 1)")
        f, st = basic_wiggle(A1, A2, lam, sigma=args.sigma, grid=grid, delta=args.delta,
                             epsilon=args.epsilon)
        targets = [A1, A2]
        st.pop("weights", None)
        rep = {"v": 1, "lambda": float(lam), "stats": st,
               "passed": bool(st["boundary_exact"]) and st["max_fraction_error"] <= 0.02}
    rep["seconds"] = time.perf_counter() - t0
    if args.points_csv:
        from .wiggle import nearest_table

        rows = nearest_table(f, grid, targets)
        with open(args.points_csv, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x1", "x2", "target", "distance"])
            for x1, x2, j, d in rows:
                w.writerow([repr(float(x1)), repr(float(x2)), int(j), repr(float(d))])
        rep["points_csv"] = args.points_csv
    return rep, None


def cmd_condition_c(args, session: Session):
    from .tnconfig import HessianSet, check_condition_C, find_L, perturb_hessians

    cert = _input_cert(args, session, need_cert=False)
    c = _config_of(cert).to_float()
    tol = session.ftol if session.ftol is not None else 1e-8
    H = HessianSet.identity(c.N, c.M, c.n)
    rep = {"v": 1, "perturbed": False}
    if args.delta is not None:
        try:
            L = find_L(c, tol, seed=session.seed)
            H = perturb_hessians(c, L, H, args.delta, seed=session.seed, tol=tol)
            rep["perturbed"] = True
        except (ValueError, RuntimeError) as e:
            rep["perturb_error"] = str(e)
    res = check_condition_C(c, H, tol)
    rep.update(res.to_json())
    rep["rank_bound_ok"] = all(r <= res.rank_target for r in res.ranks)
    return rep, None


def cmd_report(args, session: Session):
    from . import certdata

    out = {"v": 1, "datasets": {}}
    for name in certdata.NAMES:
        t0 = time.perf_counter()
        r = certdata.verify(name).to_json()
        out["datasets"][name] = {"passed": r["passed"], "seconds": time.perf_counter() - t0,
                                 "checks": {c["name"]: c["passed"] for c in r["checks"]}}
    for name in ("t5-sz04", "t14-2d"):
        out["datasets"][name]["tn"] = _nondeg_report(certdata.cert(name), session)["passed"]
    out["passed"] = all(d["passed"] for d in out["datasets"].values())
    return out, None


COMMANDS: dict[str, Callable] = {
    "verify-cert": cmd_verify_cert,
    "verify-tn": cmd_verify_tn,
    "lift": cmd_lift,
    "extend": cmd_extend,
    "build-F": cmd_build_f,
    "laminate": cmd_laminate,
    "wiggle": cmd_wiggle,
    "condition-c": cmd_condition_c,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--mode", choices=("exact", "float"), default="exact")
    common.add_argument("--tol", type=float, default=0.0)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--dataset")

    p = argparse.ArgumentParser(prog="tconfig", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("verify-cert", parents=[common])
    v = sub.add_parser("verify-tn", parents=[common])
    v.add_argument("file", nargs="?")
    lf = sub.add_parser("lift", parents=[common])
    lf.add_argument("--M", type=int, default=2)
    lf.add_argument("--n", type=int, default=2)
    ex = sub.add_parser("extend", parents=[common])
    ex.add_argument("file", nargs="?")
    ex.add_argument("--i1", type=int)
    ex.add_argument("--i2", type=int)
    ex.add_argument("--target-n", type=int)
    ex.add_argument("--delta")
    bf = sub.add_parser("build-F", parents=[common])
    bf.add_argument("file", nargs="?")
    bf.add_argument("--epsilon")
    bf.add_argument("--delta")
    la = sub.add_parser("laminate", parents=[common])
    la.add_argument("file", nargs="?")
    la.add_argument("--k", type=int, default=1)
    la.add_argument("--steps", type=int)
    wg = sub.add_parser("wiggle", parents=[common])
    wg.add_argument("--grid", type=int, default=128)
    wg.add_argument("--lam", type=float, default=0.5)
    wg.add_argument("--sigma", type=float)
    wg.add_argument("--delta", type=float)
    wg.add_argument("--epsilon", type=float)
    wg.add_argument("--k", type=int, default=1)
    wg.add_argument("--iters", type=int, default=1)
    wg.add_argument("--points-csv", help="write (grid point, nearest target, distance) rows here")
    cc = sub.add_parser("condition-c", parents=[common])
    cc.add_argument("file", nargs="?")
    cc.add_argument("--delta", type=float)
    sub.add_parser("report", parents=[common])
    return p


def run(argv: Sequence[str] | None = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        with contextlib.redirect_stdout(stdout), contextlib.redirect_stderr(stderr):
            args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_INVALID
    try:
        apply_thread_cap()
        session = Session(M=getattr(args, "M", 2), n=getattr(args, "n", 2), mode=args.mode,
                          tol=args.tol, seed=args.seed)
        if args.command == "extend" and args.delta is not None:
            from . import core
            args.delta = core.to_fraction(args.delta) if session.exact else float(args.delta)
        report, artifact = COMMANDS[args.command](args, session)
    except UsageError as e:
        _emit({"v": 1, "passed": False, "error": str(e)}, args.format, stdout)
        print(f"tconfig: {e}", file=stderr)
        return EXIT_INVALID
    _emit(report, args.format, stdout)
    if args.out:
        _write_out(args.out, artifact if artifact is not None else report, args.format)
    return EXIT_OK if report.get("passed") else EXIT_MISMATCH


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
