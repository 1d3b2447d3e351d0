"""Command-line experiment runner.

Every subcommand writes ``<name>.json`` and ``<name>.csv`` plus a manifest
under ``--out``; ``replay`` re-runs a manifest and compares output bytes.
Exit codes: 0 pass, 2 failed verdict, 1 usage or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__, _kernels
from ._rng import resolve_seed, stream
from . import complexity as cx
from . import graph, processes, transforms, verify

EXIT_PASS, EXIT_USAGE, EXIT_FAIL = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---- helpers ----


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def eps_grid(text: str) -> np.ndarray:
    """``start:stop:count`` -> evenly spaced grid."""
    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError("eps grid must be start:stop:count")
    start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
    if count < 1:
        raise UsageError("eps grid needs count >= 1")
    return np.linspace(start, stop, count)


def _table(rows: list[dict], cols: list[str]) -> str:
    def fmt(v):
        if isinstance(v, float):
            return f"{v:.6g}"
        return str(v)

    cells = [[fmt(r.get(c, "")) for c in cols] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) if cells else len(c) for i, c in enumerate(cols)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(cols, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in cells]
    return "\n".join(lines)


def _csv(rows: list[dict], cols: list[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in cols])
    return buf.getvalue()


def _json(obj) -> str:
    return json.dumps(verify._jsonable(obj), indent=2, sort_keys=True) + "\n"


class Output:
    """Collects named output files for one run."""

    def __init__(self, name: str):
        self.name = name
        self.files: dict[str, str] = {}
        self.verdict = "pass"

    def add(self, suffix: str, text: str):
        self.files[f"{self.name}.{suffix}"] = text

    def report(self, rep: verify.TrialReport):
        self.add("json", rep.to_json() + "\n")
        self.add("csv", rep.to_csv())
        self.verdict = rep.verdict


def _process_config(args) -> processes.ProcessConfig:
    if getattr(args, "config", None):
        return processes.ProcessConfig.from_json(Path(args.config).read_text(encoding="utf-8"))
    kw = {"family": args.family, "n": args.n, "rho": args.rho}
    if args.family == "iid":
        return processes.ProcessConfig.iid(args.n)
    if args.support:
        kw["support"] = args.support
    if args.zeta:
        kw["zeta"] = args.zeta
    if args.latent_noise:
        kw["latent_noise"] = args.latent_noise
    return processes.ProcessConfig(**kw)


def _add_process_flags(p, n_default=6):
    p.add_argument("--config", help="ProcessConfig JSON file")
    p.add_argument("--family", default="gm1", choices=["gm1", "gm2", "gm3", "iid"])
    p.add_argument("--n", type=int, default=n_default)
    p.add_argument("--rho", type=float, default=0.8)
    p.add_argument("--support", choices=list(processes.GM3_SUPPORTS))
    p.add_argument("--zeta", choices=list(processes.ZETAS))
    p.add_argument("--latent-noise", type=float, default=0.0)


def _matrix_set(args) -> cx.MatrixSet:
    kind = args.set
    if kind == "vtheta-sphere":
        return cx.VThetaSphere(args.n, args.p)
    if kind == "vtheta-sparse":
        return cx.VThetaSparse(args.n, args.p, args.s)
    if kind == "toeplitz-band":
        return cx.ToeplitzBand(args.n, args.p, args.s)
    if kind == "finite":
        if not args.matrices:
            raise UsageError("--set finite needs --matrices FILE")
        return cx.FiniteList(json.loads(Path(args.matrices).read_text(encoding="utf-8")))
    raise UsageError(f"unknown set {kind!r}")


def _add_set_flags(p):
    p.add_argument("--set", default="vtheta-sphere", choices=["vtheta-sphere", "vtheta-sparse", "toeplitz-band", "finite"])
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--p", type=int, default=16)
    p.add_argument("--s", type=int, default=2)
    p.add_argument("--matrices", help="JSON list of matrices for --set finite")


# ---- subcommands ----


def cmd_dsep(args, out: Output):
    if args.dag:
        dag = graph.parse_dag(Path(args.dag).read_text(encoding="utf-8"))
    elif args.template:
        dag = graph.build_gm_template(args.template, args.n, args.tangent)
    else:
        raise UsageError("dsep needs --template or --dag")
    if args.query:
        q = graph.parse_query(args.query)
        sep = graph.d_separated(dag, q)
        rows = [{"query": str(q), "claim": "query", "separated": sep}]
        out.verdict = "pass"
    else:
        if not args.varrho:
            raise UsageError("dsep needs --query or --varrho")
        vr = args.varrho if args.varrho in ("shift0", "shift1") else _ints(args.varrho)
        rep = graph.verify_sp2(dag, vr)
        if args.tangent:
            rep.checks += graph.verify_dts(dag).checks
        rows = rep.to_records()
        out.verdict = "pass" if rep.passed else "fail"
    out.add("json", _json({"quantity": "dsep", "verdict": out.verdict, "checks": rows}))
    out.add("csv", _csv(rows, ["query", "claim", "separated"]))
    failed = [r for r in rows if not r["separated"]]
    print(f"{len(rows)} checks, {len(rows) - len(failed)} separated")
    for r in failed[:20]:
        print(f"  not separated: {r['query']}  ({r['claim']})")


def cmd_gen(args, out: Output):
    seed = args.seed
    if args.kind == "matrix":
        cfg = processes.DependentMatrixConfig(args.n, args.p, args.gen, args.amp, args.rho)
        mats = processes.sample_dependent_matrices(cfg, args.count, seed, args.workers)
        rows = [
            {"matrix": k, "row": i + 1, "col": j + 1, "value": float(mats[k, i, j])}
            for k in range(mats.shape[0])
            for i in range(mats.shape[1])
            for j in range(mats.shape[2])
        ]
        out.add("csv", _csv(rows, ["matrix", "row", "col", "value"]))
        out.add("json", _json({"quantity": "gen-matrix", "config": cfg.to_dict(), "seed": seed, "count": args.count}))
        print(f"wrote {args.count} matrices of shape {args.n}x{args.p}")
        return
    cfg = _process_config(args)
    batch = processes.sample_paths(cfg, args.count, seed, tangent=args.tangent, workers=args.workers)
    rows = []
    for k in range(len(batch)):
        path = batch.path(k)
        for line in list(csv.DictReader(io.StringIO(path.to_csv()))):
            rows.append({"path": k, **line})
    out.add("csv", _csv(rows, ["path", "index", "latent", "xi", "tangent"]))
    out.add("json", _json({"quantity": "gen-path", "config": cfg.to_dict(), "seed": seed, "count": args.count}))
    print(f"wrote {args.count} paths of length {cfg.n}")


def cmd_width(args, out: Output):
    aset = _matrix_set(args)
    rep = cx.complexity_report(aset, args.trials, args.seed, args.C, args.workers)
    d = rep.to_dict()
    out.add("json", _json({"quantity": "width", **d}))
    cols = ["d_F", "d_op", "width", "width_se", "gamma2_upper", "C", "metric_scale", "d_op_exact"]
    out.add("csv", _csv([d], cols))
    print(_table([d], cols))


def cmd_bound(args, out: Output):
    if args.dF is not None:
        d_f, d_op, g2 = args.dF, args.dop, args.gamma2
        if d_op is None or g2 is None:
            raise UsageError("--dF needs --dop and --gamma2")
        info = {}
    else:
        rep = cx.complexity_report(_matrix_set(args), args.trials, args.seed, args.C, args.workers)
        d_f, d_op, g2 = rep.d_F, rep.d_op, rep.gamma2_upper
        info = rep.to_dict()
    b = cx.deviation_bound(d_f, d_op, g2, args.c1, args.c2, args.variant)
    rows = [cx.tail_detail(b, float(e)) for e in eps_grid(args.eps_grid)]
    out.add("json", _json({"quantity": "bound", "bound": b.to_dict(), "complexity": info, "rows": rows}))
    out.add("csv", _csv(rows, ["eps", "bound", "raw", "branch", "threshold"]))
    print(f"M={b.M:.6g} V={b.V:.6g} U={b.U:.6g} c1={b.c1} c2={b.c2} variant={b.variant}")
    print(_table(rows, ["eps", "bound", "raw", "branch", "threshold"]))


def cmd_jl(args, out: Output):
    pts = verify.jl_points(args.N, args.p, args.seed)
    rows, dists = [], {}
    for n in _ints(args.n):
        st = verify.jl_distortion(pts, n, args.gen, args.eps, args.trials, args.seed, args.workers)
        s = st.summary()
        dists[f"n{n}"] = st.distortion
        rows.append({"n": n, "median": s["median"], "mean": s["mean"], "se": s["se"], "failure_rate": s["failure_rate"]})
    summary = {"rows": rows}
    verdict = "pass"
    if len(rows) > 1:
        slope = verify.loglog_slope([r["n"] for r in rows], [r["median"] for r in rows])
        summary["slope"] = slope
        if args.slope_tol is not None and abs(slope + 0.5) > args.slope_tol:
            verdict = "fail"
    if args.max_failure is not None and any(r["failure_rate"] > args.max_failure for r in rows):
        verdict = "fail"
    rep = verify.TrialReport("jl", verdict, f"slope tol {args.slope_tol}, max failure {args.max_failure}", args.seed, summary, dists,
                             {"N": args.N, "p": args.p, "generator": args.gen, "eps": args.eps})
    out.report(rep)
    print(_table(rows, ["n", "median", "mean", "se", "failure_rate"]))
    if "slope" in summary:
        print(f"log-log slope of median distortion: {summary['slope']:.4f}")


def cmd_rip(args, out: Output):
    cfg = processes.DependentMatrixConfig(args.n, args.p, args.gen)
    mats = processes.sample_dependent_matrices(cfg, args.trials, args.seed, args.workers)
    mode = "mc" if args.mc else "exact"
    rows = []
    for k, x in enumerate(mats):
        est = verify.rip_constant(x, args.s, mode, args.mc_trials, args.seed)
        rows.append({"trial": k, "delta_s": est.delta_s, "mode": est.mode, "supports": est.supports})
    out.add("json", _json({"quantity": "rip", "generator": args.gen, "n": args.n, "p": args.p, "s": args.s, "rows": rows}))
    out.add("csv", _csv(rows, ["trial", "delta_s", "mode", "supports"]))
    print(_table(rows, ["trial", "delta_s", "mode", "supports"]))


def cmd_toeplitz(args, out: Output):
    p, n = args.p, args.n
    if args.family == "iid":
        pcfg = processes.ProcessConfig.iid(2 * p - 1)
    else:
        pcfg = processes.ProcessConfig(family=args.family, n=2 * p - 1)
    rows, worst = [], 0.0
    batch = processes.sample_paths(pcfg, args.trials, args.seed, workers=args.workers)
    for k in range(args.trials):
        rng = stream(args.seed, "toeplitz-rows", k)
        sel = np.sort(rng.choice(p, size=n, replace=False)) + 1
        op = transforms.build_toeplitz(batch.xi[k], sel)
        u = rng.standard_normal(p)
        err = float(np.max(np.abs(op.apply(u) - op.to_dense() @ u)))
        worst = max(worst, err)
        delta = verify.rip_constant(op.to_dense() * math.sqrt(n), args.s).delta_s
        rows.append({"trial": k, "fft_error": err, "delta_s": delta})
    verdict = "pass" if worst <= args.tol else "fail"
    rep = verify.TrialReport(
        "toeplitz", verdict, f"FFT vs dense max-abs <= {args.tol}", args.seed,
        {"max_fft_error": worst, "delta_s": verify.summarize([r["delta_s"] for r in rows]) if len(rows) > 1 else rows[0]["delta_s"]},
        {"fft_error": [r["fft_error"] for r in rows], "delta_s": [r["delta_s"] for r in rows]},
        {"p": p, "n": n, "s": args.s, "process": pcfg.to_dict()},
    )
    out.report(rep)
    print(_table(rows, ["trial", "fft_error", "delta_s"]))


def cmd_countsketch(args, out: Output):
    rows, signs = transforms.build_countsketch_batch(
        args.sketches, args.n, args.p, args.d, args.pattern, args.seed, args.beta, args.workers
    )
    distinct = np.array([len(np.unique(r)) for r in rows.reshape(-1, args.d)])
    exact_d = bool(np.all(distinct == args.d))
    u = stream(args.seed, "countsketch-u").standard_normal(args.p)
    y = transforms.countsketch_apply_batch(rows, signs, u, args.n)
    sq = np.sum(y * y, axis=1)
    target = float(u @ u)
    mean = float(np.mean(sq))
    se = float(np.std(sq, ddof=1) / math.sqrt(len(sq)))
    unbiased = abs(mean - target) <= verify.SE_BAND * se
    occupancy = np.bincount(rows.reshape(args.sketches, -1)[0], minlength=args.n)
    verdict = "pass" if exact_d and unbiased else "fail"
    summary = {"exact_d": exact_d, "mean_sq_norm": mean, "se": se, "target": target, "max_row_load_first": int(occupancy.max())}
    out.report(verify.TrialReport("countsketch", verdict, "exactly d per column; |mean - ||u||^2| <= 3 SE", args.seed,
                                  summary, {"sq_norm": sq}, {"n": args.n, "p": args.p, "d": args.d, "pattern": args.pattern, "beta": args.beta}))
    print(_table([summary], list(summary)))


def cmd_bandit(args, out: Output):
    rep = verify.bandit_min_eig_experiment(
        args.adversary, args.sigma, args.k, args.p, args.eps, args.runs, args.horizon, args.reference_t, args.C, seed=args.seed
    )
    out.report(rep)
    s = rep.summary
    print(_table([{k: s[k] for k in ("kappa_hat", "start", "horizon", "fraction_ok")}], ["kappa_hat", "start", "horizon", "fraction_ok"]))


def _bset(args, n):
    if args.matrices:
        return [np.asarray(m, dtype=float) for m in json.loads(Path(args.matrices).read_text(encoding="utf-8"))]
    rng = stream(args.seed, "cli-matrices")
    out = []
    for _ in range(args.random_matrices):
        a = rng.standard_normal((n, n))
        b = a + a.T
        np.fill_diagonal(b, 0.0)
        out.append(b)
    return out


def _mask(args, n):
    if args.mask:
        return np.asarray(json.loads(Path(args.mask).read_text(encoding="utf-8")), dtype=float)
    left = [i - 1 for i in _ints(args.left)] if args.left else list(range(n // 2))
    rng = stream(args.seed, "cli-mask")
    m = np.zeros((n, n))
    for i in left:
        for j in range(n):
            if j not in left:
                m[i, j] = rng.standard_normal()
    return m


def cmd_verify(args, out: Output):
    cfg = _process_config(args)
    w = args.workers
    if args.check == "decoupling":
        rep = verify.check_decoupling(cfg, _bset(args, cfg.n), args.p_norm, args.trials, args.seed, w)
    elif args.check == "tangent":
        rep = verify.check_tangent_equivalence(cfg, _mask(args, cfg.n), args.trials, args.seed, w)
    elif args.check == "symmetrization":
        weights = _floats(args.weights) if args.weights else None
        rep = verify.check_symmetrization(cfg, weights, args.functions.split(","), args.p_norm, args.trials, args.seed, w)
    elif args.check == "contraction":
        rep = verify.check_contraction(cfg, None, args.p_norm, args.trials, args.seed, w)
    elif args.check == "offdiag":
        rep = verify.check_offdiag_zero(cfg, args.trials, args.seed, w)
    elif args.check == "tail":
        aset = _matrix_set_for_cbd(args, cfg)
        rep = verify.tail_domination(aset, cfg, eps_grid(args.eps_grid), trials=args.trials, seed=args.seed, workers=w)
    else:
        aset = _matrix_set_for_cbd(args, cfg)
        rep = verify.estimate_cbd(aset, cfg, args.trials, args.seed, w)
    out.report(rep)
    flat = {k: v for k, v in rep.summary.items() if isinstance(v, (int, float, str, bool))}
    print(f"{rep.quantity}: {rep.verdict}")
    if flat:
        print(_table([flat], list(flat)))


def cmd_operator(args, out: Output):
    """Build and dump a sketch operator, or load one and apply it."""
    if args.load:
        op = transforms.load_operator(Path(args.load).read_text(encoding="utf-8"))
    elif args.variant == "jl":
        op = transforms.build_jl(args.n, args.p, args.gen, args.seed)
    elif args.variant == "toeplitz":
        path = processes.sample_path(processes.ProcessConfig(family=args.family, n=2 * args.p - 1), args.seed)
        rows = _ints(args.rows) if args.rows else list(range(1, args.n + 1))
        op = transforms.build_toeplitz(path.xi, rows)
    else:
        op = transforms.build_countsketch(args.n, args.p, args.d, args.pattern, args.seed, args.beta)
    dense = op.to_dense()
    vec = np.asarray(_floats(args.apply), dtype=float) if args.apply else np.ones(dense.shape[1])
    if len(vec) != dense.shape[1]:
        raise UsageError(f"--apply needs {dense.shape[1]} values")
    image = op.apply(vec)
    out.add("op", transforms.dump_operator(op, args.hex))
    out.add("json", _json({"quantity": "operator", "variant": op.variant, "shape": list(dense.shape), "input": vec, "image": image}))
    out.add("csv", _csv([{"row": i + 1, "value": float(v)} for i, v in enumerate(image)], ["row", "value"]))
    print(f"{op.variant} operator {dense.shape[0]}x{dense.shape[1]}, |X u| = {float(np.linalg.norm(image)):.6g}")


def _matrix_set_for_cbd(args, cfg):
    if args.set == "finite":
        if args.matrices:
            return cx.FiniteList(json.loads(Path(args.matrices).read_text(encoding="utf-8")))
        return cx.FiniteList([np.eye(cfg.n)])
    if args.set == "vtheta-sphere":
        return cx.VThetaSphere(args.rows, cfg.n // args.rows)
    if args.set == "vtheta-sparse":
        return cx.VThetaSparse(args.rows, cfg.n // args.rows, args.s)
    return cx.ToeplitzBand(args.rows, (cfg.n + 1) // 2, args.s)


# ---- parser ----


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="depsketch", description="Dependent-entry sketching experiments")
    ap.add_argument("--version", action="version", version=f"depsketch {__version__}")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    def common(p, trials=1000):
        p.add_argument("--seed", type=lambda s: int(s, 0), default=None, help="default $DEPSKETCH_SEED or 0xDEC0DE")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--out", default="depsketch-out")
        p.add_argument("--trials", type=int, default=trials)

    p = sub.add_parser("dsep", help="d-separation queries and latent-history independence checks")
    p.add_argument("--template", choices=list(graph.FAMILIES))
    p.add_argument("--dag", help="DAG file, one 'parent -> child' per line")
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--tangent", action="store_true")
    p.add_argument("--varrho", help="shift0, shift1 or comma list")
    p.add_argument("--query", help="'X ; Y | Z'")
    common(p)

    p = sub.add_parser("gen", help="sample paths or dependent-entry matrices to CSV")
    p.add_argument("--kind", choices=["path", "matrix"], default="path")
    _add_process_flags(p)
    p.add_argument("--p", type=int, default=4)
    p.add_argument("--gen", choices=list(processes.MATRIX_FAMILIES), default="gm1")
    p.add_argument("--amp", type=float, default=0.5)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--tangent", action="store_true")
    common(p)

    p = sub.add_parser("width", help="radii, Gaussian width and gamma_2 bound")
    _add_set_flags(p)
    p.add_argument("--C", type=float, default=1.0)
    common(p, 10000)

    p = sub.add_parser("bound", help="deviation bound and tail table")
    _add_set_flags(p)
    p.add_argument("--dF", type=float)
    p.add_argument("--dop", type=float)
    p.add_argument("--gamma2", type=float)
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--c1", type=float, default=1.0)
    p.add_argument("--c2", type=float, default=1.0)
    p.add_argument("--variant", choices=list(cx.VARIANTS), default="dependent")
    p.add_argument("--eps-grid", default="0.1:1.0:10")
    common(p, 10000)

    p = sub.add_parser("jl", help="JL distortion sweep")
    p.add_argument("--N", type=int, default=32)
    p.add_argument("--p", type=int, default=256)
    p.add_argument("--n", default="32,64,128,256")
    p.add_argument("--gen", choices=list(processes.MATRIX_FAMILIES), default="gm1")
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("--slope-tol", type=float)
    p.add_argument("--max-failure", type=float)
    common(p, 100)

    p = sub.add_parser("rip", help="restricted isometry constants")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--exact", action="store_true")
    mode.add_argument("--mc", action="store_true")
    p.add_argument("--p", type=int, default=10)
    p.add_argument("--s", type=int, default=2)
    p.add_argument("--n", type=int, default=2048)
    p.add_argument("--gen", choices=list(processes.MATRIX_FAMILIES), default="iid")
    p.add_argument("--mc-trials", type=int, default=10000)
    common(p, 1)

    p = sub.add_parser("toeplitz", help="partial Toeplitz designs from a process")
    p.add_argument("--p", type=int, default=32)
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--s", type=int, default=2)
    p.add_argument("--family", choices=["gm1", "gm2", "gm3", "iid"], default="gm1")
    p.add_argument("--tol", type=float, default=1e-10)
    common(p, 5)

    p = sub.add_parser("countsketch", help="CountSketch structure and unbiasedness")
    p.add_argument("--n", type=int, default=32)
    p.add_argument("--p", type=int, default=8)
    p.add_argument("--d", type=int, default=4)
    p.add_argument("--pattern", choices=list(transforms.PATTERNS), default="adaptive")
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--sketches", type=int, default=100000)
    common(p)

    p = sub.add_parser("bandit", help="smoothed-adversary minimum eigenvalue experiment")
    p.add_argument("--adversary", choices=list(verify.ADVERSARIES), default="zero")
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--p", type=int, default=8)
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("--runs", type=int, default=50)
    p.add_argument("--horizon", type=int)
    p.add_argument("--reference-t", type=int)
    p.add_argument("--C", type=float, default=1.0)
    common(p)

    p = sub.add_parser("verify", help="Monte-Carlo inequality checks")
    p.add_argument("check", choices=["decoupling", "symmetrization", "tangent", "offdiag", "cbd", "contraction", "tail"])
    _add_process_flags(p)
    p.add_argument("--p-norm", type=int, choices=[1, 2], default=1)
    p.add_argument("--matrices", help="JSON list of matrices")
    p.add_argument("--random-matrices", type=int, default=3)
    p.add_argument("--mask", help="JSON bipartite mask")
    p.add_argument("--left", help="1-based indices of I for a random bipartite mask")
    p.add_argument("--functions", default="identity,square")
    p.add_argument("--weights")
    p.add_argument("--set", default="finite", choices=["finite", "vtheta-sphere", "vtheta-sparse", "toeplitz-band"])
    p.add_argument("--rows", type=int, default=2, help="row count of V_theta sets for cbd")
    p.add_argument("--s", type=int, default=2)
    p.add_argument("--eps-grid", default="0.1:1.0:10")
    common(p, 100000)

    p = sub.add_parser("operator", help="dump a sketch operator to text or load and apply one")
    p.add_argument("--variant", choices=["jl", "toeplitz", "countsketch"], default="jl")
    p.add_argument("--load", help="operator text file to load instead of building")
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--p", type=int, default=16)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--gen", choices=list(processes.MATRIX_FAMILIES), default="gm1")
    p.add_argument("--family", choices=["gm1", "gm2", "gm3", "iid"], default="gm1")
    p.add_argument("--rows", help="1-based Toeplitz rows (default 1..n)")
    p.add_argument("--pattern", choices=list(transforms.PATTERNS), default="adaptive")
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--apply", help="comma list to apply the operator to (default all ones)")
    p.add_argument("--hex", action="store_true", help="dump floats as exact hex")
    common(p)

    p = sub.add_parser("replay", help="re-run a manifest and compare outputs")
    p.add_argument("manifest")
    p.add_argument("--workers", type=int)
    p.add_argument("--out")
    return ap


COMMANDS = {
    "dsep": cmd_dsep,
    "gen": cmd_gen,
    "width": cmd_width,
    "bound": cmd_bound,
    "jl": cmd_jl,
    "rip": cmd_rip,
    "toeplitz": cmd_toeplitz,
    "countsketch": cmd_countsketch,
    "bandit": cmd_bandit,
    "verify": cmd_verify,
    "operator": cmd_operator,
}


def _strip(argv: list[str], flags: tuple[str, ...]) -> list[str]:
    out, skip = [], False
    for tok in argv:
        if skip:
            skip = False
            continue
        name = tok.split("=", 1)[0]
        if name in flags:
            skip = "=" not in tok
            continue
        out.append(tok)
    return out


def _sha(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _execute(argv: list[str]) -> tuple[int, dict]:
    args = build_parser().parse_args(argv)
    if args.command is None:
        raise UsageError("missing subcommand")
    if args.command == "replay":
        return _replay(args), {}
    args.seed = resolve_seed(args.seed)
    if args.workers < 1:
        raise UsageError("--workers must be >= 1")
    name = args.command if args.command != "verify" else f"verify-{args.check}"
    out = Output(name)
    t0 = time.perf_counter()
    COMMANDS[args.command](args, out)
    runtime = time.perf_counter() - t0
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    for fname, text in out.files.items():
        (outdir / fname).write_text(text, encoding="utf-8")
    params = {k: v for k, v in vars(args).items() if k not in ("out", "workers")}
    manifest = {
        "subcommand": args.command,
        "argv": _strip(argv, ("--out", "--workers", "--seed")) + ["--seed", str(args.seed)],
        "params": params,
        "seed": args.seed,
        "version": __version__,
        "backend": _kernels.BACKEND,
        "workers": args.workers,
        "outputs": {f: {"path": str(outdir / f), "sha256": _sha(t)} for f, t in out.files.items()},
        "verdict": out.verdict,
        "runtime": runtime,
    }
    (outdir / f"{name}.manifest.json").write_text(_json(manifest), encoding="utf-8")
    print(f"verdict: {out.verdict}  (outputs in {outdir})")
    return (EXIT_PASS if out.verdict == "pass" else EXIT_FAIL), manifest


def _replay(args) -> int:
    manifest = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
    argv = list(manifest["argv"])
    workers = args.workers or manifest.get("workers", 1)
    with tempfile.TemporaryDirectory() as tmp:
        outdir = args.out or tmp
        code, new = _execute(argv + ["--out", outdir, "--workers", str(workers)])
    mismatched = [
        f for f, meta in manifest["outputs"].items() if new["outputs"].get(f, {}).get("sha256") != meta["sha256"]
    ]
    if mismatched:
        print(f"replay mismatch: {', '.join(sorted(mismatched))}")
        return EXIT_FAIL
    print(f"replay identical: {len(manifest['outputs'])} files, workers={workers}")
    return EXIT_PASS


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        code, _ = _execute(argv)
        return code
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
