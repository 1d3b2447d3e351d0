"""Monte-Carlo checks of chaos decompositions, decoupling, symmetrization,
JL distortion, restricted isometry constants and the smoothed-bandit design.

Every check returns a ``TrialReport``. Inequality checks compare a
difference ``margin = rhs - lhs`` against its standard error: the verdict is
``pass`` when ``margin >= k * se``, ``fail`` when ``margin <= -k * se`` and
``inconclusive`` in between. Inconclusive runs are repeated once with four
times the trials on a fresh stream, after which ``margin >= -k * se`` passes.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import special, stats

from ._rng import concat, map_chunks, resolve_seed, stream
from .complexity import (
    FiniteList,
    MatrixSet,
    ToeplitzBand,
    VThetaFinite,
    VThetaSparse,
    VThetaSphere,
    complexity_report,
    deviation_bound,
    sample_size,
    tail_probability,
)
from .processes import (
    DependentMatrixConfig,
    ProcessConfig,
    _matrix_chunk,
    sample_dependent_matrices,
    sample_paths,
)

SE_BAND = 3.0
ESCALATION = 4
MOMENT_BATCH = 10
RIP_GUARD = 100_000
QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)


class VerifyError(ValueError):
    pass


def summarize(x) -> dict:
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        raise VerifyError("need at least 2 trials for a standard error")
    q = np.quantile(x, QUANTILES)
    return {
        "mean": float(np.mean(x)),
        "se": float(np.std(x, ddof=1) / math.sqrt(x.size)),
        "max": float(np.max(x)),
        "min": float(np.min(x)),
        "quantiles": {str(k): float(v) for k, v in zip(QUANTILES, q)},
        "trials": int(x.size),
    }


def band_verdict(margin: float, se: float, k: float = SE_BAND) -> str:
    if margin >= k * se:
        return "pass"
    if margin <= -k * se:
        return "fail"
    return "inconclusive"


@dataclass
class TrialReport:
    quantity: str
    verdict: str
    tolerance: str
    seed: int
    summary: dict = field(default_factory=dict)
    samples: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    runtime: float = 0.0

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def record(self) -> dict:
        """JSON-ready record; runtime is left out so files replay bit-identically."""
        return {
            "quantity": self.quantity,
            "verdict": self.verdict,
            "tolerance": self.tolerance,
            "seed": self.seed,
            "summary": self.summary,
            "details": self.details,
        }

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.record()), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["quantity", "trial", "value"])
        for name in sorted(self.samples):
            for t, v in enumerate(np.ravel(self.samples[name])):
                w.writerow([name, t, repr(float(v))])
        return buf.getvalue()


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    return x


def _with_escalation(run: Callable[[int, int], dict], trials: int) -> dict:
    """``run(trials, attempt)`` returns a dict with ``margin`` and ``se``."""
    res = run(trials, 0)
    verdict = band_verdict(res["margin"], res["se"])
    res["escalated"] = False
    if verdict == "inconclusive":
        res = run(ESCALATION * trials, 1)
        res["escalated"] = True
        verdict = "pass" if res["margin"] >= -SE_BAND * res["se"] else "fail"
    res["verdict"] = verdict
    return res


# ---- second moments ----


def second_moments(cfg: ProcessConfig, trials: int, seed: int, workers: int = 1) -> np.ndarray:
    """E xi_j^2 per coordinate: closed form if the config declares it, else an
    independent batch of ``MOMENT_BATCH * trials`` paths."""
    v = cfg.constant_variance
    if v is not None:
        return np.full(cfg.n, v)
    batch = sample_paths(cfg, MOMENT_BATCH * trials, stream_seed(seed, "second-moment"), workers=workers)
    return np.mean(batch.xi**2, axis=0)


def stream_seed(seed: int, tag: str) -> int:
    """Derived integer seed for an independent sub-experiment."""
    return int(stream(seed, tag).integers(0, 2**63 - 1))


# ---- C / B / D ----


def _vtheta_grams(aset: MatrixSet, xi: np.ndarray, m2: np.ndarray):
    """Reduce ||V_theta xi||^2 to theta^T S theta; returns S (T, p, p) and its mean Sbar (p,)."""
    t = xi.shape[0]
    if isinstance(aset, ToeplitzBand):
        p = aset.p
        # kept rows are 1..n; entry (r, c) of A_xi is xi[p - r + c] (0-based c)
        rows = np.arange(1, aset.n + 1)
        idx = p - rows[:, None] + np.arange(p)[None, :]
        a = xi[:, idx]  # (T, n, p)
        s = np.einsum("tri,trj->tij", a, a) / aset.n
        sbar = np.sum(m2[idx], axis=0) / aset.n
        return s, sbar
    p = aset.p
    x = xi.reshape(t, aset.n, p)
    s = np.einsum("tri,trj->tij", x, x) / aset.n
    sbar = np.sum(m2.reshape(aset.n, p), axis=0) / aset.n
    return s, sbar


def _sup_quadratic(aset: MatrixSet, q: np.ndarray) -> np.ndarray:
    """sup over the index set of |theta^T q theta| for each of the T matrices in q."""
    if isinstance(aset, VThetaSphere):
        ev = np.linalg.eigvalsh(q)
        return np.max(np.abs(ev), axis=1)
    if isinstance(aset, (VThetaSparse, ToeplitzBand)):
        p, s = aset.p, aset.s
        supports = np.array(list(itertools.combinations(range(p), s)))
        if len(supports) > RIP_GUARD:
            raise VerifyError("too many supports for exact sparse supremum")
        best = np.zeros(q.shape[0])
        for start in range(0, len(supports), 256):
            sup = supports[start : start + 256]
            sub = q[:, sup[:, :, None], sup[:, None, :]]  # (T, K, s, s)
            ev = np.linalg.eigvalsh(sub)
            best = np.maximum(best, np.max(np.abs(ev), axis=(1, 2)))
        return best
    if isinstance(aset, VThetaFinite):
        th = aset.thetas
        vals = np.einsum("ki,tij,kj->tk", th, q, th)
        return np.max(np.abs(vals), axis=1)
    raise VerifyError(f"no quadratic reduction for {aset.kind}")


def cbd_samples(aset: MatrixSet, xi: np.ndarray, m2: np.ndarray):
    """Per-trial C, B, D for the centered chaos ||A xi||^2 - E||A xi||^2."""
    if isinstance(aset, FiniteList):
        mats = aset._stack
        if mats.shape[2] != xi.shape[1]:
            raise VerifyError("matrix width must equal the path length")
        gram = np.einsum("kri,krj->kij", mats, mats)
        diag = np.einsum("kii->ki", gram)
        quad = np.einsum("ti,kij,tj->tk", xi, gram, xi)
        dterm = (xi**2 - m2[None, :]) @ diag.T
        bterm = quad - (xi**2) @ diag.T
        cterm = quad - (diag @ m2)[None, :]
        return (np.max(np.abs(cterm), axis=1), np.max(np.abs(bterm), axis=1), np.max(np.abs(dterm), axis=1))
    s, sbar = _vtheta_grams(aset, xi, m2)
    sdiag = np.einsum("tii->ti", s)
    c = _sup_quadratic(aset, s - np.diag(sbar)[None])
    b = _sup_quadratic(aset, s - np.einsum("ti,ij->tij", sdiag, np.eye(s.shape[1])))
    dev = sdiag - sbar[None, :]
    if isinstance(aset, VThetaFinite):
        d = np.max(np.abs(dev @ (aset.thetas**2).T), axis=1)
    else:
        # unit index sets: the supremum of sum theta_i^2 dev_i sits on a single coordinate
        d = np.max(np.abs(dev), axis=1)
    return c, b, d


def _path_length(aset: MatrixSet) -> int:
    if isinstance(aset, FiniteList):
        return aset.shape[1]
    if isinstance(aset, ToeplitzBand):
        return 2 * aset.p - 1
    return aset.n * aset.p


def estimate_cbd(aset: MatrixSet, cfg: ProcessConfig, trials: int = 10000, seed=None, workers: int = 1) -> TrialReport:
    """Samples of C, B, D and the pointwise check C <= B + D.

    Suprema over V_theta sets use exact reductions: the chaos is a quadratic
    form theta^T (S - E S) theta in theta, so the sphere supremum is an
    extreme eigenvalue and the sparse one a maximum over supports.
    """
    t0 = time.perf_counter()
    seed = resolve_seed(seed)
    if cfg.n != _path_length(aset):
        raise VerifyError(f"process length {cfg.n} does not match the set ({_path_length(aset)})")
    m2 = second_moments(cfg, trials, seed, workers)
    xi = sample_paths(cfg, trials, seed, workers=workers).xi
    c, b, d = cbd_samples(aset, xi, m2)
    slack = c - (b + d)
    tol = 1e-9 * np.maximum(1.0, b + d)
    holds = slack <= tol
    return TrialReport(
        quantity="cbd",
        verdict="pass" if np.all(holds) else "fail",
        tolerance="C <= B + D pointwise (1e-9 relative)",
        seed=seed,
        summary={"C": summarize(c), "B": summarize(b), "D": summarize(d), "fraction_holding": float(np.mean(holds))},
        samples={"C": c, "B": b, "D": d},
        details={
            "set": aset.describe(),
            "second_moment": "closed form" if cfg.constant_variance is not None else f"batch x{MOMENT_BATCH}",
            "supremum": "exact quadratic-form reduction" if not isinstance(aset, FiniteList) else "enumeration",
            "config": cfg.to_dict(),
        },
        runtime=time.perf_counter() - t0,
    )


# ---- off-diagonal products ----


def check_offdiag_zero(cfg: ProcessConfig, trials: int = 100000, seed=None, workers: int = 1, k: float = 4.0):
    """E[xi_j xi_k] = 0 for all j < k, each within ``k`` standard errors."""
    t0 = time.perf_counter()
    seed = resolve_seed(seed)
    if cfg.n < 2:
        raise VerifyError("need n >= 2")
    xi = sample_paths(cfg, trials, seed, workers=workers).xi
    pairs = list(itertools.combinations(range(cfg.n), 2))
    rows = []
    zs = []
    for j, l in pairs:
        prod = xi[:, j] * xi[:, l]
        mean = float(np.mean(prod))
        se = float(np.std(prod, ddof=1) / math.sqrt(trials))
        z = mean / se if se > 0 else (0.0 if mean == 0 else math.inf)
        zs.append(abs(z))
        rows.append({"j": j + 1, "k": l + 1, "mean": mean, "se": se, "z": z})
    ok = max(zs) <= k
    return TrialReport(
        quantity="offdiag",
        verdict="pass" if ok else "fail",
        tolerance=f"|mean| <= {k} SE for every pair",
        seed=seed,
        summary={"max_abs_z": max(zs), "pairs": len(pairs)},
        details={"pairs": rows, "config": cfg.to_dict()},
        runtime=time.perf_counter() - t0,
    )


# ---- process contract ----


def _bucket_means(x: np.ndarray, cond: np.ndarray, buckets: int):
    """Mean of ``x`` and its SE within quantile buckets of ``cond``."""
    edges = np.quantile(cond, np.linspace(0, 1, buckets + 1)[1:-1])
    label = np.searchsorted(edges, cond, side="right")
    out = []
    for b in range(buckets):
        v = x[label == b]
        if len(v) < 2:
            continue
        out.append((float(np.mean(v)), float(np.std(v, ddof=1) / math.sqrt(len(v)))))
    return out


def check_process_contract(
    cfg,
    trials: int = 100000,
    seed=None,
    workers: int = 1,
    buckets: int = 10,
    taus=(1.0, 2.0, 3.0),
    slack: float = 1.1,
    k: float = 4.0,
    max_coords: int = 16,
) -> TrialReport:
    """Martingale-difference and sub-Gaussian tail checks on sampled entries.

    For a ``ProcessConfig`` the bucketing variable is the latent value the
    conditional law of xi_i reads; for a ``DependentMatrixConfig`` it is the
    entry produced just before. Every bucket mean must sit within ``k`` SE of
    zero, and max_i P(|xi_i| > tau) <= slack * 2 exp(-tau^2 / L^2).
    """
    t0 = time.perf_counter()
    seed = resolve_seed(seed)
    if isinstance(cfg, DependentMatrixConfig):
        x = sample_dependent_matrices(cfg, trials, seed, workers).reshape(trials, -1)
        x = x[:, : max_coords + 1]
        pairs = [(x[:, i], x[:, i - 1]) for i in range(1, x.shape[1])]
        L = cfg.subgaussian_L
    else:
        batch = sample_paths(cfg, trials, seed, workers=workers)
        x = batch.xi[:, :max_coords]
        pairs = [(x[:, i - 1], batch.history(i, cfg)) for i in range(1, x.shape[1] + 1)]
        L = cfg.subgaussian_L
    worst_z = 0.0
    for v, c in pairs:
        for mean, se in _bucket_means(v, c, buckets):
            z = abs(mean) / se if se > 0 else (0.0 if mean == 0 else math.inf)
            worst_z = max(worst_z, z)
    tails = []
    for tau in taus:
        emp = float(np.max(np.mean(np.abs(x) > tau, axis=0)))
        bound = 2.0 * math.exp(-tau * tau / (L * L))
        tails.append({"tau": tau, "empirical": emp, "bound": bound, "ok": emp <= slack * bound})
    ok = worst_z <= k and all(t["ok"] for t in tails)
    return TrialReport(
        quantity="process-contract",
        verdict="pass" if ok else "fail",
        tolerance=f"bucket means within {k} SE; tails <= {slack} x sub-Gaussian bound",
        seed=seed,
        summary={"max_abs_z": worst_z, "L": L, "buckets": buckets},
        details={"tails": tails, "config": cfg.to_dict()},
        runtime=time.perf_counter() - t0,
    )


# ---- decoupling ----


def _h(x, p_norm):
    if p_norm not in (1, 2):
        raise VerifyError("p_norm must be 1 or 2")
    return np.abs(x) ** p_norm


def _check_bset(bset, n):
    mats = [np.asarray(b, dtype=float) for b in bset]
    if not mats:
        raise VerifyError("empty matrix set")
    for b in mats:
        if b.shape != (n, n):
            raise VerifyError(f"matrices must be {n} x {n}")
        if not np.allclose(b, b.T, atol=0, rtol=0):
            raise VerifyError("matrices must be symmetric")
        if np.any(np.diag(b) != 0):
            raise VerifyError("matrices must have a zero diagonal")
    return np.stack(mats)


def check_decoupling(
    cfg: ProcessConfig, bset, p_norm: int = 1, trials: int = 100000, seed=None, workers: int = 1
) -> TrialReport:
    """E sup_B h(sum_{j!=k} xi_j xi_k B_jk) <= 4 E sup_B h(sum_{j,k} xi_j xi'_k B_jk)."""
    t0 = time.perf_counter()
    seed = resolve_seed(seed)
    bs = _check_bset(bset, cfg.n)

    def run(count, attempt):
        batch = sample_paths(cfg, count, stream_seed(seed, f"decoupling-{attempt}"), tangent=True, workers=workers)
        x, xp = batch.xi, batch.tangent
        lhs = np.max(_h(np.einsum("ti,kij,tj->tk", x, bs, x), p_norm), axis=1)
        rhs = np.max(_h(np.einsum("ti,kij,tj->tk", x, bs, xp), p_norm), axis=1)
        diff = 4.0 * rhs - lhs
        return {
            "lhs": summarize(lhs),
            "rhs": summarize(rhs),
            "margin": float(np.mean(diff)),
            "se": float(np.std(diff, ddof=1) / math.sqrt(count)),
            "trials": count,
            "samples": {"lhs": lhs, "rhs": rhs},
        }

    res = _with_escalation(run, trials)
    samples = res.pop("samples")
    return TrialReport(
        quantity="decoupling",
        verdict=res["verdict"],
        tolerance=f"LHS <= 4 RHS + {SE_BAND} SE (paired)",
        seed=seed,
        summary=res,
        samples=samples,
        details={"p_norm": p_norm, "matrices": len(bs), "config": cfg.to_dict()},
        runtime=time.perf_counter() - t0,
    )


# ---- tangent equivalence ----


def bipartite_split(mask) -> tuple[list[int], list[int]]:
    """(I, I^c) when the support of ``mask`` lies in I x I^c, else raise."""
    mask = np.asarray(mask, dtype=float)
    r, c = np.nonzero(mask)
    rows, cols = set(r.tolist()), set(c.tolist())
    if rows & cols:
        raise VerifyError(
            "mask support is not bipartite: an index appears both as a row and a column; "
            "the equivalence only holds for masks supported on I x I^c"
        )
    n = mask.shape[0]
    left = sorted(rows)
    return left, [i for i in range(n) if i not in rows]


def check_tangent_equivalence(
    cfg: ProcessConfig, mask, trials: int = 100000, seed=None, workers: int = 1, alpha: float = 0.01
) -> TrialReport:
    """KS test that sum xi_j xi_k B_jk and sum xi_j xi'_k B_jk share a law.

    The two samples come from independent path batches.
    """
    t0 = time.perf_counter()
    seed = resolve_seed(seed)
    b = np.asarray(mask, dtype=float)
    if b.shape != (cfg.n, cfg.n):
        raise VerifyError(f"mask must be {cfg.n} x {cfg.n}")
    left, right = bipartite_split(b)
    x1 = sample_paths(cfg, trials, stream_seed(seed, "tangent-a"), workers=workers).xi
    batch = sample_paths(cfg, trials, stream_seed(seed, "tangent-b"), tangent=True, workers=workers)
    xn = np.einsum("ti,ij,tj->t", x1, b, x1)
    xpn = np.einsum("ti,ij,tj->t", batch.xi, b, batch.tangent)
    res = stats.ks_2samp(xn, xpn, method="asymp")
    pval = float(res.pvalue)
    return TrialReport(
        quantity="tangent",
        verdict="pass" if pval >= alpha else "fail",
        tolerance=f"KS p-value >= {alpha}",
        seed=seed,
        summary={"ks_statistic": float(res.statistic), "p_value": pval, "X": summarize(xn), "X_tangent": summarize(xpn)},
        samples={"X": xn, "X_tangent": xpn},
        details={"I": [i + 1 for i in left], "I_complement": [i + 1 for i in right], "config": cfg.to_dict()},
        runtime=time.perf_counter() - t0,
    )


# ---- symmetrization ----

FUNCTIONS = {
    "identity": lambda x: x,
    "abs": np.abs,
    "square": lambda x: x * x,
    "tanh": np.tanh,
    "clip1": lambda x: np.clip(x, -1.0, 1.0),
}


def _resolve_functions(gs):
    out = []
    for g in gs:
        if isinstance(g, str):
            if g not in FUNCTIONS:
                raise VerifyError(f"unknown function {g!r}")
            out.append((g, FUNCTIONS[g]))
        else:
            out.append((getattr(g, "__name__", "g"), g))
    if not out:
        raise VerifyError("function class is empty")
    return out


def check_symmetrization(
    cfg: ProcessConfig,
    weights=None,
    functions=("identity", "square"),
    p_norm: int = 1,
    trials: int = 100000,
    seed=None,
    workers: int = 1,
) -> TrialReport:
    """Symmetrization (factor 2) and de-symmetrization (factor 1/2) inequalities.

    Means E g(xi_i) come from an independent batch of ten times the trials.
    """
    t0 = time.perf_counter()
    seed = resolve_seed(seed)
    w = np.ones(cfg.n) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (cfg.n,):
        raise VerifyError(f"weights must have length {cfg.n}")
    gs = _resolve_functions(functions)
    ref = sample_paths(cfg, MOMENT_BATCH * trials, stream_seed(seed, "sym-means"), workers=workers).xi
    means = np.stack([np.mean(g(ref), axis=0) for _, g in gs])  # (G, n)
    del ref

    def H(x):
        return _h(x, p_norm)

    def run(count, attempt):
        batch = sample_paths(cfg, count, stream_seed(seed, f"sym-{attempt}"), workers=workers)
        eps = stream(seed, "sym-signs", attempt).integers(0, 2, size=(count, cfg.n)) * 2.0 - 1.0
        vals = np.stack([g(batch.xi) for _, g in gs])  # (G, T, n)
        centered = vals - means[:, None, :]
        plain = np.max(np.abs(centered @ w), axis=0)
        signed = np.max(np.abs((vals * eps[None]) @ w), axis=0)
        signed_c = np.max(np.abs((centered * eps[None]) @ w), axis=0)
        sym_l, sym_r = H(plain), H(2.0 * signed)
        des_l, des_r = H(0.5 * signed_c), H(plain)
        d_sym = sym_r - sym_l
        d_des = des_r - des_l
        out = {
            "symmetrization": {
                "lhs": summarize(sym_l),
                "rhs": summarize(sym_r),
                "margin": float(np.mean(d_sym)),
                "se": float(np.std(d_sym, ddof=1) / math.sqrt(count)),
            },
            "desymmetrization": {
                "lhs": summarize(des_l),
                "rhs": summarize(des_r),
                "margin": float(np.mean(d_des)),
                "se": float(np.std(d_des, ddof=1) / math.sqrt(count)),
            },
            "trials": count,
            "samples": {"sym_lhs": sym_l, "sym_rhs": sym_r, "desym_lhs": des_l, "desym_rhs": des_r},
        }
        # escalate on the weaker of the two inequalities
        worst = min(("symmetrization", "desymmetrization"), key=lambda k: out[k]["margin"] / max(out[k]["se"], 1e-300))
        out["margin"], out["se"] = out[worst]["margin"], out[worst]["se"]
        return out

    res = _with_escalation(run, trials)
    samples = res.pop("samples")
    verdicts = []
    for key in ("symmetrization", "desymmetrization"):
        part = res[key]
        part["verdict"] = "pass" if part["margin"] >= -SE_BAND * part["se"] else "fail"
        verdicts.append(part["verdict"])
    verdict = "fail" if "fail" in verdicts else res["verdict"]
    return TrialReport(
        quantity="symmetrization",
        verdict=verdict,
        tolerance=f"each inequality within {SE_BAND} SE (paired)",
        seed=seed,
        summary=res,
        samples=samples,
        details={"functions": [name for name, _ in gs], "weights": w, "p_norm": p_norm, "config": cfg.to_dict()},
        runtime=time.perf_counter() - t0,
    )


def check_contraction(
    cfg: ProcessConfig,
    weights=None,
    p_norm: int = 1,
    trials: int = 100000,
    seed=None,
    workers: int = 1,
    min_exceed: int = 50,
) -> TrialReport:
    """Contraction with eta_i = eps_i xi_i^2 dominated by gamma_i = eps'_i g_i^2.

    K is the largest ratio P(xi_i^2 > t) / P(g^2 > t) over a quantile grid of
    t with at least ``min_exceed`` exceedances (and at least 1), then
    E H(|sum w eta|) <= E H(K |sum w gamma|) is checked within 3 SE.
    """
    t0 = time.perf_counter()
    seed = resolve_seed(seed)
    w = np.ones(cfg.n) if weights is None else np.asarray(weights, dtype=float)
    ref = sample_paths(cfg, trials, stream_seed(seed, "contraction-tails"), workers=workers).xi ** 2
    k_hat = 1.0
    for i in range(cfg.n):
        col = np.sort(ref[:, i])
        grid = col[: len(col) - min_exceed : max(1, len(col) // 200)]
        grid = grid[grid > 0]
        emp = 1.0 - np.searchsorted(col, grid, side="right") / len(col)
        ratio = emp / stats.chi2.sf(grid, df=1)
        if ratio.size:
            k_hat = max(k_hat, float(np.max(ratio)))

    def run(count, attempt):
        rng = stream(seed, "contraction", attempt)
        x = sample_paths(cfg, count, stream_seed(seed, f"contraction-{attempt}"), workers=workers).xi
        e1 = rng.integers(0, 2, size=x.shape) * 2.0 - 1.0
        e2 = rng.integers(0, 2, size=x.shape) * 2.0 - 1.0
        g = rng.standard_normal(x.shape)
        lhs = _h((e1 * x * x) @ w, p_norm)
        rhs = _h(k_hat * ((e2 * g * g) @ w), p_norm)
        diff = rhs - lhs
        return {
            "lhs": summarize(lhs),
            "rhs": summarize(rhs),
            "margin": float(np.mean(diff)),
            "se": float(np.std(diff, ddof=1) / math.sqrt(count)),
            "trials": count,
        }

    res = _with_escalation(run, trials)
    return TrialReport(
        quantity="contraction",
        verdict=res["verdict"],
        tolerance=f"LHS <= RHS within {SE_BAND} SE",
        seed=seed,
        summary={**res, "K": k_hat},
        details={"p_norm": p_norm, "config": cfg.to_dict()},
        runtime=time.perf_counter() - t0,
    )


# ---- JL ----


@dataclass
class DistortionStats:
    distortion: np.ndarray
    eps: float
    failure_rate: float
    n: int
    N: int
    p: int
    trials: int
    seed: int

    def summary(self) -> dict:
        return {
            **summarize(self.distortion),
            "median": float(np.median(self.distortion)),
            "failure_rate": self.failure_rate,
            "eps": self.eps,
            "n": self.n,
            "N": self.N,
            "p": self.p,
        }

    def report(self, max_failure: Optional[float] = None) -> TrialReport:
        verdict = "pass" if max_failure is None or self.failure_rate <= max_failure else "fail"
        tol = "none" if max_failure is None else f"failure rate <= {max_failure}"
        return TrialReport("jl", verdict, tol, self.seed, self.summary(), {"distortion": self.distortion})


def jl_points(N: int, p: int, seed: int) -> np.ndarray:
    """N fixed unit vectors in R^p."""
    g = stream(seed, "jl-points").standard_normal((N, p))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def max_distortion(x: np.ndarray, points: np.ndarray) -> np.ndarray:
    """max_u | ||X u||^2 - ||u||^2 | / ||u||^2 for a batch of matrices x (T, n, p)."""
    y = np.einsum("tnp,kp->tkn", x, points)
    sq = np.sum(y * y, axis=2)
    nrm = np.sum(points * points, axis=1)
    return np.max(np.abs(sq - nrm[None]) / nrm[None], axis=1)


def jl_distortion(
    points, n: int, generator="gm1", eps: float = 0.5, trials: int = 100, seed=None, workers: int = 1
) -> DistortionStats:
    """Fresh dependent-entry sketch per trial; max relative distortion over the points."""
    seed = resolve_seed(seed)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if np.any(np.linalg.norm(points, axis=1) == 0):
        raise VerifyError("points must be nonzero")
    p = points.shape[1]
    cfg = generator if isinstance(generator, DependentMatrixConfig) else DependentMatrixConfig(n, p, generator)

    def chunk(rng, a, b):
        x = _matrix_chunk(cfg, rng, b - a) / math.sqrt(n)
        return max_distortion(x, points)

    dist = concat(map_chunks(chunk, trials, seed, f"jl-{cfg.family}-{n}", workers, size=64))
    return DistortionStats(dist, eps, float(np.mean(dist > eps)), n, points.shape[0], p, trials, seed)


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


# ---- RIP ----


@dataclass
class RipEstimate:
    delta_s: float
    mode: str
    s: int
    p: int
    n: int
    supports: int

    def to_dict(self):
        return dict(self.__dict__)


def rip_constant(x, s: int, mode: str = "exact", mc_trials: int = 10000, seed=None) -> RipEstimate:
    """delta_s of X / sqrt(n): exact over all supports, or an MC lower bound."""
    x = np.asarray(x, dtype=float)
    n, p = x.shape
    if not 1 <= s <= p:
        raise VerifyError("need 1 <= s <= p")
    gram = x.T @ x / n
    if mode == "exact":
        count = math.comb(p, s)
        if count > RIP_GUARD:
            raise VerifyError(f"C({p},{s}) = {count} supports exceeds the guard {RIP_GUARD}")
        best = 0.0
        combos = itertools.combinations(range(p), s)
        while True:
            block = np.array(list(itertools.islice(combos, 4096)))
            if block.size == 0:
                break
            ev = np.linalg.eigvalsh(gram[block[:, :, None], block[:, None, :]])
            best = max(best, float(np.max(ev[:, -1] - 1.0)), float(np.max(1.0 - ev[:, 0])))
        return RipEstimate(best, "exact", s, p, n, count)
    if mode == "mc":
        rng = stream(resolve_seed(seed), "rip-mc")
        supp = np.argsort(rng.random((mc_trials, p)), axis=1)[:, :s]
        coef = rng.standard_normal((mc_trials, s))
        coef /= np.linalg.norm(coef, axis=1, keepdims=True)
        sub = gram[supp[:, :, None], supp[:, None, :]]
        vals = np.einsum("ti,tij,tj->t", coef, sub, coef)
        return RipEstimate(float(np.max(np.abs(vals - 1.0))), "mc", s, p, n, mc_trials)
    raise VerifyError(f"unknown mode {mode!r}")


def rip_sweep(ns, p: int, s: int, generator: str = "iid", trials: int = 20, seed=None, workers: int = 1) -> dict:
    """Median exact delta_s over ``trials`` fresh designs for each n."""
    seed = resolve_seed(seed)
    out = {}
    for n in ns:
        cfg = DependentMatrixConfig(n, p, generator)

        def chunk(rng, a, b, cfg=cfg):
            mats = _matrix_chunk(cfg, rng, b - a)
            return np.array([rip_constant(m, s).delta_s for m in mats])

        deltas = concat(map_chunks(chunk, trials, seed, f"rip-{generator}-{n}", workers, size=4))
        out[n] = deltas
    return out


# ---- bandit ----


def _adv_zero(rng, t, theta_hat, k, p):
    return np.zeros((theta_hat.shape[0], k, p))


def _adv_repeater(rng, t, theta_hat, k, p):
    mu = np.zeros(p)
    mu[0] = 1.0
    return np.broadcast_to(mu, (theta_hat.shape[0], k, p)).copy()


def _adv_random(rng, t, theta_hat, k, p):
    g = rng.standard_normal((theta_hat.shape[0], k, p))
    r = rng.random((theta_hat.shape[0], k, 1)) ** (1.0 / p)
    return g / np.linalg.norm(g, axis=2, keepdims=True) * r


def _adv_adaptive(rng, t, theta_hat, k, p):
    # every context sits on the learner's current direction, scaled differently,
    # so the unperturbed rows span a single line
    nrm = np.linalg.norm(theta_hat, axis=1, keepdims=True)
    u = np.where(nrm > 0, theta_hat / np.where(nrm > 0, nrm, 1.0), 0.0)
    scales = np.linspace(-1.0, 1.0, k)
    return scales[None, :, None] * u[:, None, :]


ADVERSARIES = {"zero": _adv_zero, "repeater": _adv_repeater, "random": _adv_random, "adaptive": _adv_adaptive}

_GH_X, _GH_W = np.polynomial.hermite_e.hermegauss(64)
_GH_W = _GH_W / math.sqrt(2.0 * math.pi)


def selection_moments(b: np.ndarray):
    """For I = argmax_i (b_i + z_i), z iid N(0, 1): P(I = i) and E[z_i 1{I = i}].

    ``b`` has shape (R, k); both outputs have shape (R, k).
    """
    diff = b[:, :, None] - b[:, None, :]  # (R, i, j)
    cdf = special.ndtr(diff[..., None] + _GH_X[None, None, None, :])  # (R, i, j, Q)
    k = b.shape[1]
    eye = np.eye(k, dtype=bool)[None, :, :, None]
    prod = np.prod(np.where(eye, 1.0, cdf), axis=2)  # (R, i, Q)
    prob = prod @ _GH_W
    ez = prod @ (_GH_W * _GH_X)
    return prob, ez


def _bandit_runs(adversary, sigma, k, p, horizon, runs, seed, tag, reward_noise=0.1):
    """Simulate ``runs`` independent greedy runs; returns lambda_min(X_t^T X_t) (runs, horizon) and final Gram."""
    rng = stream(seed, tag)
    adv = ADVERSARIES[adversary] if isinstance(adversary, str) else adversary
    theta_star = stream(seed, "bandit-theta").standard_normal(p)
    theta_star /= np.linalg.norm(theta_star)
    ridge = 1e-6
    xtx_ls = np.zeros((runs, p, p))
    xty = np.zeros((runs, p))
    gram = np.zeros((runs, p, p))
    lam = np.empty((runs, horizon))
    idx = np.arange(runs)
    for t in range(horizon):
        theta_hat = np.linalg.solve(xtx_ls + ridge * np.eye(p), xty[:, :, None])[:, :, 0] if t else np.zeros((runs, p))
        mu = np.asarray(adv(rng, t, theta_hat, k, p), dtype=float)
        norms = np.linalg.norm(mu, axis=2)
        if np.any(norms > 1.0 + 1e-12):
            raise VerifyError("adversary contexts must lie in the unit ball")
        g = sigma * rng.standard_normal((runs, k, p))
        x = mu + g
        score = np.einsum("rkp,rp->rk", x, theta_hat)
        tn = np.linalg.norm(theta_hat, axis=1)
        live = tn > 0
        pick = np.where(live, np.argmax(score, axis=1), rng.integers(0, k, size=runs))
        xsel = x[idx, pick]
        # conditional mean of the selected context given the history
        cmean = np.mean(mu, axis=1)
        if np.any(live):
            a = np.einsum("rkp,rp->rk", mu[live], theta_hat[live])
            b = a / (sigma * tn[live, None])
            prob, ez = selection_moments(b)
            u = theta_hat[live] / tn[live, None]
            cmean[live] = np.einsum("rk,rkp->rp", prob, mu[live]) + sigma * np.sum(ez, axis=1)[:, None] * u
        row = xsel - cmean
        gram += row[:, :, None] * row[:, None, :]
        lam[:, t] = np.linalg.eigvalsh(gram)[:, 0]
        y = xsel @ theta_star + reward_noise * rng.standard_normal(runs)
        xtx_ls += xsel[:, :, None] * xsel[:, None, :]
        xty += xsel * y[:, None]
    return lam, gram


def bandit_min_eig_experiment(
    adversary="zero",
    sigma: float = 0.5,
    k: int = 4,
    p: int = 8,
    eps: float = 0.5,
    runs: int = 50,
    horizon: Optional[int] = None,
    reference_t: Optional[int] = None,
    C: float = 1.0,
    coverage: float = 0.95,
    seed=None,
) -> TrialReport:
    """Greedy contextual bandit on smoothed adversarial contexts.

    kappa is estimated from an independent batch of runs as the smallest
    eigenvalue of the averaged Gram X^T X / t at ``reference_t``. Each main
    run passes if lambda_min(X_t^T X_t) >= t kappa (1 - eps) for every t from
    sample_size(bandit) to the horizon.
    """
    t0 = time.perf_counter()
    seed = resolve_seed(seed)
    if sigma <= 0:
        raise VerifyError("sigma must be positive")
    if k < 2:
        raise VerifyError("need k >= 2")
    if not 0 < eps <= 1:
        raise VerifyError("eps must lie in (0, 1]")
    t_ref = reference_t or 50 * p
    _, ref_gram = _bandit_runs(adversary, sigma, k, p, t_ref, runs, seed, "bandit-reference")
    kappa = float(np.linalg.eigvalsh(np.mean(ref_gram, axis=0) / t_ref)[0])
    if kappa <= 0:
        raise VerifyError("estimated kappa is not positive")
    start = sample_size("bandit", min(eps, 0.999999), kappa=kappa, p=p, C=C) if eps < 1 else 1
    horizon = horizon or 2 * start
    if horizon < start:
        raise VerifyError(f"horizon {horizon} shorter than the required {start}")
    lam, _ = _bandit_runs(adversary, sigma, k, p, horizon, runs, seed, "bandit-main")
    ts = np.arange(1, horizon + 1)
    thresh = ts * kappa * (1.0 - eps)
    window = ts >= start
    # eigvalsh returns -1e-16 level values on rank-deficient Grams
    slack = 1e-12 * ts[window]
    ok_runs = np.all(lam[:, window] >= thresh[window] - slack, axis=1)
    frac = float(np.mean(ok_runs))
    ratio = np.min(lam[:, window] / (ts[window] * kappa), axis=1)
    slope = lam[:, -1] / horizon
    return TrialReport(
        quantity="bandit",
        verdict="pass" if frac >= coverage else "fail",
        tolerance=f"fraction of runs >= {coverage}",
        seed=seed,
        summary={
            "kappa_hat": kappa,
            "start": int(start),
            "horizon": int(horizon),
            "reference_t": int(t_ref),
            "fraction_ok": frac,
            "min_ratio": summarize(ratio),
            "final_slope": summarize(slope),
        },
        samples={"min_ratio": ratio, "final_slope": slope},
        details={"adversary": adversary if isinstance(adversary, str) else "custom", "sigma": sigma, "k": k, "p": p, "eps": eps, "runs": runs, "C": C},
        runtime=time.perf_counter() - t0,
    )


# ---- tail domination ----


def tail_domination(
    aset: MatrixSet,
    cfg: ProcessConfig,
    eps_grid,
    c1: float = 1.0,
    c2: float = 1.0,
    gamma_C: float = 1.0,
    trials: int = 10000,
    seed=None,
    workers: int = 1,
) -> TrialReport:
    """Observed P(C >= c1 M + eps) against the deviation bound on a grid of eps."""
    t0 = time.perf_counter()
    seed = resolve_seed(seed)
    cx = complexity_report(aset, trials=trials, seed=stream_seed(seed, "width"), C=gamma_C, workers=workers)
    bound = deviation_bound(cx.d_F, cx.d_op, cx.gamma2_upper, c1, c2)
    cbd = estimate_cbd(aset, cfg, trials, seed, workers)
    c = cbd.samples["C"]
    rows = []
    ok = True
    prev = math.inf
    for e in eps_grid:
        freq = float(np.mean(c >= bound.threshold + e))
        tb = tail_probability(bound, e)
        se = math.sqrt(max(freq * (1 - freq), 1.0 / trials) / trials)
        holds = freq <= tb + SE_BAND * se
        ok = ok and holds and freq <= prev + 1e-15
        prev = freq
        rows.append({"eps": float(e), "frequency": freq, "bound": tb, "holds": holds})
    return TrialReport(
        quantity="tail-domination",
        verdict="pass" if ok else "fail",
        tolerance=f"frequency <= bound + {SE_BAND} SE, frequency non-increasing",
        seed=seed,
        summary={"M": bound.M, "V": bound.V, "U": bound.U, "c1": c1, "c2": c2, "gamma_C": gamma_C, "rows": rows},
        details={"complexity": cx.to_dict()},
        runtime=time.perf_counter() - t0,
    )
