"""Radii, Gaussian width, chaos deviation bounds, sample sizes and Azuma tails.

Unspecified absolute constants default to 1 and are always passed
explicitly through to reports. Logarithms are natural.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ._rng import concat, map_chunks, resolve_seed, stream


class ComplexityError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, msg, residual):
        super().__init__(f"{msg} (residual {residual:.3e})")
        self.residual = residual


def _top_s_norm(g: np.ndarray, s: int) -> np.ndarray:
    """Row-wise l2 norm of the s largest-magnitude coordinates."""
    a = np.abs(g)
    if s < a.shape[1]:
        a = np.partition(a, a.shape[1] - s, axis=1)[:, a.shape[1] - s :]
    return np.sqrt(np.sum(a * a, axis=1))


class MatrixSet:
    """Structural description of a set of m x k matrices."""

    kind = "abstract"
    # operator-to-Frobenius ratio on differences within the set, used to
    # turn the (Frobenius-metric) width into a bound for the operator metric
    metric_scale = 1.0
    op_exact = True

    @property
    def shape(self) -> tuple[int, int]:
        raise NotImplementedError

    def frob(self) -> float:
        raise NotImplementedError

    def op(self) -> float:
        raise NotImplementedError

    def sup_draws(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """``count`` draws of sup_A |tr(G^T A)| for independent standard G."""
        raise NotImplementedError

    def describe(self) -> dict:
        return {"kind": self.kind, "shape": list(self.shape)}


@dataclass
class FiniteList(MatrixSet):
    matrices: list

    kind = "finite"

    def __post_init__(self):
        if len(self.matrices) == 0:
            raise ComplexityError("matrix set is empty")
        mats = [np.atleast_2d(np.asarray(a, dtype=float)) for a in self.matrices]
        shape = mats[0].shape
        if any(a.shape != shape for a in mats):
            raise ComplexityError("matrices in a finite set must share a shape")
        self.matrices = mats
        self._stack = np.stack(mats)

    @property
    def shape(self):
        return self._stack.shape[1:]

    def frob(self):
        return float(np.max(np.sqrt(np.sum(self._stack**2, axis=(1, 2)))))

    def op(self):
        return max(power_opnorm(a) for a in self.matrices)

    def sup_draws(self, rng, count):
        m, k = self.shape
        flat = self._stack.reshape(len(self.matrices), m * k)
        g = rng.standard_normal((count, m * k))
        return np.max(np.abs(g @ flat.T), axis=1)

    def scaled(self, t: float) -> "FiniteList":
        return FiniteList([t * a for a in self.matrices])

    def describe(self):
        return {**super().describe(), "size": len(self.matrices)}


@dataclass
class VThetaSphere(MatrixSet):
    """{V_theta : ||theta||_2 = 1}, V_theta block diagonal n x np with rows theta^T / sqrt(n)."""

    n: int
    p: int

    kind = "vtheta-sphere"

    def __post_init__(self):
        if self.n < 1 or self.p < 1:
            raise ComplexityError("n and p must be >= 1")
        self.metric_scale = 1.0 / math.sqrt(self.n)

    @property
    def shape(self):
        return (self.n, self.n * self.p)

    def frob(self):
        return 1.0

    def op(self):
        return 1.0 / math.sqrt(self.n)

    def sup_draws(self, rng, count):
        # tr(G^T V_theta) = <g, theta> with g = sum_i G_i / sqrt(n) ~ N(0, I_p)
        return np.linalg.norm(rng.standard_normal((count, self.p)), axis=1)

    def describe(self):
        return {**super().describe(), "n": self.n, "p": self.p}


@dataclass
class VThetaSparse(MatrixSet):
    """V_theta over unit s-sparse theta."""

    n: int
    p: int
    s: int

    kind = "vtheta-sparse"

    def __post_init__(self):
        if self.n < 1 or self.p < 1:
            raise ComplexityError("n and p must be >= 1")
        if not 1 <= self.s <= self.p:
            raise ComplexityError("need 1 <= s <= p")
        self.metric_scale = 1.0 / math.sqrt(self.n)

    @property
    def shape(self):
        return (self.n, self.n * self.p)

    def frob(self):
        return 1.0

    def op(self):
        return 1.0 / math.sqrt(self.n)

    def sup_draws(self, rng, count):
        return _top_s_norm(rng.standard_normal((count, self.p)), self.s)

    def describe(self):
        return {**super().describe(), "n": self.n, "p": self.p, "s": self.s}


@dataclass
class VThetaFinite(MatrixSet):
    """V_theta over a finite list of index vectors (rows of ``thetas``)."""

    thetas: np.ndarray
    n: int

    kind = "vtheta-finite"

    def __post_init__(self):
        self.thetas = np.atleast_2d(np.asarray(self.thetas, dtype=float))
        if self.thetas.shape[0] == 0:
            raise ComplexityError("matrix set is empty")
        if self.n < 1:
            raise ComplexityError("n must be >= 1")
        self.metric_scale = 1.0 / math.sqrt(self.n)

    @property
    def p(self):
        return self.thetas.shape[1]

    @property
    def shape(self):
        return (self.n, self.n * self.p)

    def frob(self):
        return float(np.max(np.linalg.norm(self.thetas, axis=1)))

    def op(self):
        return self.frob() / math.sqrt(self.n)

    def sup_draws(self, rng, count):
        g = rng.standard_normal((count, self.p))
        return np.max(np.abs(g @ self.thetas.T), axis=1)

    def describe(self):
        return {**super().describe(), "n": self.n, "p": self.p, "size": int(self.thetas.shape[0])}


@dataclass
class ToeplitzBand(MatrixSet):
    """R V_theta for unit s-sparse theta; V_theta is the p x (2p-1) band, R keeps n rows.

    The operator radius is not available in closed form; ``op`` returns the
    bound sqrt(s) / sqrt(n) (from ||theta||_1 <= sqrt(s)), which is attained
    when s = 1, and ``op_exact`` is False otherwise.
    """

    n: int
    p: int
    s: int

    kind = "toeplitz-band"

    def __post_init__(self):
        if not 1 <= self.n <= self.p:
            raise ComplexityError("need 1 <= n <= p")
        if not 1 <= self.s <= self.p:
            raise ComplexityError("need 1 <= s <= p")
        self.metric_scale = 1.0 / math.sqrt(self.n)
        self.op_exact = self.s == 1

    @property
    def shape(self):
        return (self.n, 2 * self.p - 1)

    def frob(self):
        return 1.0

    def op(self):
        return math.sqrt(self.s) / math.sqrt(self.n)

    def sup_draws(self, rng, count):
        # each theta_j meets a disjoint diagonal of G, so the reduced vector is N(0, I_p)
        return _top_s_norm(rng.standard_normal((count, self.p)), self.s)

    def describe(self):
        return {**super().describe(), "n": self.n, "p": self.p, "s": self.s}


@dataclass
class Explicit(MatrixSet):
    """Set known only through a sampler of extreme points ``sampler(rng, count)``.

    Radii and width are computed over ``samples`` extreme points drawn once,
    so they are lower bounds for the true set.
    """

    m: int
    k: int
    sampler: Callable
    samples: int = 256
    seed: Optional[int] = None

    kind = "explicit"
    op_exact = False

    def __post_init__(self):
        pts = np.asarray(self.sampler(stream(resolve_seed(self.seed), "extreme"), self.samples), dtype=float)
        if pts.shape != (self.samples, self.m, self.k):
            raise ComplexityError("sampler returned the wrong shape")
        self._finite = FiniteList(list(pts))

    @property
    def shape(self):
        return (self.m, self.k)

    def frob(self):
        return self._finite.frob()

    def op(self):
        return self._finite.op()

    def sup_draws(self, rng, count):
        return self._finite.sup_draws(rng, count)


def power_opnorm(a, tol: float = 1e-10, max_iter: int = 1000) -> float:
    """Largest singular value by power iteration on A^T A."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if not np.any(a):
        return 0.0
    k = a.shape[1]
    # fixed, generic start vector keeps the result deterministic
    v = stream(0, "power-start", k).standard_normal(k)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = a.T @ (a @ v)
        new = float(np.linalg.norm(w))
        if new == 0.0:
            v = stream(0, "power-restart", k).standard_normal(k)
            v /= np.linalg.norm(v)
            continue
        v = w / new
        if abs(new - lam) <= tol * new:
            # ||A v|| is second-order accurate in the direction error
            return float(np.linalg.norm(a @ v))
        lam = new
    raise ConvergenceError("power iteration did not converge", abs(new - lam) / max(new, 1e-300))


def frob_radius(aset: MatrixSet) -> float:
    return aset.frob()


def opnorm_radius(aset: MatrixSet) -> float:
    return aset.op()


def gaussian_width_mc(aset: MatrixSet, trials: int = 10000, seed=None, workers: int = 1):
    """Monte-Carlo mean and standard error of sup_A |tr(G^T A)|."""
    if trials < 2:
        raise ComplexityError("need at least 2 trials")
    seed = resolve_seed(seed)
    draws = concat(
        map_chunks(lambda rng, a, b: aset.sup_draws(rng, b - a), trials, seed, f"width-{aset.kind}", workers)
    )
    return float(np.mean(draws)), float(np.std(draws, ddof=1) / math.sqrt(trials))


def gamma2_upper(width: float, C: float = 1.0) -> float:
    if width < 0:
        raise ComplexityError("width must be >= 0")
    return C * width


def chi_mean(p: int) -> float:
    """E||g||_2 for g ~ N(0, I_p)."""
    return math.sqrt(2.0) * math.exp(math.lgamma((p + 1) / 2) - math.lgamma(p / 2))


@dataclass
class ComplexityReport:
    d_F: float
    d_op: float
    width: float
    width_se: float
    gamma2_upper: float
    C: float
    metric_scale: float
    d_op_exact: bool
    trials: int
    seed: int
    set: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def complexity_report(aset: MatrixSet, trials: int = 10000, seed=None, C: float = 1.0, workers: int = 1):
    """Radii, width, and the width-based gamma_2 bound for the operator metric."""
    seed = resolve_seed(seed)
    w, se = gaussian_width_mc(aset, trials, seed, workers)
    return ComplexityReport(
        d_F=frob_radius(aset),
        d_op=opnorm_radius(aset),
        width=w,
        width_se=se,
        gamma2_upper=gamma2_upper(w * aset.metric_scale, C),
        C=C,
        metric_scale=aset.metric_scale,
        d_op_exact=aset.op_exact,
        trials=trials,
        seed=seed,
        set=aset.describe(),
    )


VARIANTS = ("dependent", "iid_reference")


@dataclass
class DeviationBound:
    """Sub-exponential deviation profile (M, V, U) of the order-2 chaos."""

    M: float
    V: float
    U: float
    c1: float = 1.0
    c2: float = 1.0
    variant: str = "dependent"
    d_F: float = 0.0
    d_op: float = 0.0
    gamma2: float = 0.0

    @property
    def threshold(self) -> float:
        return self.c1 * self.M

    def to_dict(self):
        return asdict(self)


def deviation_bound(d_F, d_op, gamma2, c1: float = 1.0, c2: float = 1.0, variant: str = "dependent"):
    for name, v in (("d_F", d_F), ("d_op", d_op), ("gamma2", gamma2)):
        if v < 0:
            raise ComplexityError(f"{name} must be >= 0")
    if c1 <= 0 or c2 <= 0:
        raise ComplexityError("constants must be positive")
    if variant not in VARIANTS:
        raise ComplexityError(f"unknown variant {variant!r}")
    M = gamma2 * (gamma2 + d_F)
    if variant == "iid_reference":
        M = M + d_F * d_op
    V = d_op * (gamma2 + d_F)
    U = d_op * d_op
    return DeviationBound(M, V, U, c1, c2, variant, d_F, d_op, gamma2)


def _tail_exponent(b: DeviationBound, eps: float) -> float:
    terms = []
    if b.V > 0:
        r = eps / b.V
        terms.append(r * r)
    if b.U > 0:
        terms.append(eps / b.U)
    if not terms:
        return 0.0 if eps == 0 else math.inf
    return b.c2 * min(terms)


def tail_detail(b: DeviationBound, eps: float) -> dict:
    """Raw and clamped tail bound, the active branch, and the threshold c1*M."""
    if eps < 0:
        raise ComplexityError("eps must be >= 0")
    expo = _tail_exponent(b, eps)
    raw = 2.0 * math.exp(-expo)
    if b.V > 0 and b.U > 0:
        r = eps / b.V
        branch = "quadratic" if r * r <= eps / b.U else "linear"
    elif b.V > 0:
        branch = "quadratic"
    elif b.U > 0:
        branch = "linear"
    else:
        branch = "degenerate"
    return {"eps": eps, "raw": raw, "bound": min(1.0, raw), "branch": branch, "threshold": b.threshold}


def tail_probability(b: DeviationBound, eps: float) -> float:
    """Bound on P(sup |chaos| >= c1 M + eps), clamped to [0, 1]."""
    return tail_detail(b, eps)["bound"]


def moment_bound(b: DeviationBound, p: float) -> float:
    """L_p-norm profile M + sqrt(p) V + p U whose tail form ``tail_probability`` gives."""
    if p < 1:
        raise ComplexityError("p must be >= 1")
    return b.M + math.sqrt(p) * b.V + p * b.U


def sample_size(kind: str, eps: float, *, N=None, s=None, p=None, kappa=None, C: float = 1.0) -> int:
    """Rows needed by the JL, RIP or bandit corollaries, up to the free constant C."""
    if not 0 < eps < 1:
        raise ComplexityError("eps must lie in (0, 1)")
    if C <= 0:
        raise ComplexityError("C must be positive")
    kind = kind.lower()
    if kind == "jl":
        if N is None or N < 1:
            raise ComplexityError("JL needs N >= 1")
        val = C * math.log(N) / (eps * eps)
    elif kind == "rip":
        if s is None or p is None or s < 1 or p < 1 or s > p:
            raise ComplexityError("RIP needs 1 <= s <= p")
        val = C * s * math.log(2 * p / s) / (eps * eps)
    elif kind == "bandit":
        if kappa is None or p is None or kappa <= 0 or p < 1:
            raise ComplexityError("bandit needs kappa > 0 and p >= 1")
        val = C * p / (eps * eps * kappa * kappa)
    else:
        raise ComplexityError(f"unknown kind {kind!r}")
    return max(1, math.ceil(val))


def azuma_hoeffding_tail(c: Sequence[float], tau: float, raw: bool = False) -> float:
    c = np.asarray(c, dtype=float)
    if c.size == 0 or np.any(c <= 0):
        raise ComplexityError("bound entries must be positive")
    if tau < 0:
        raise ComplexityError("tau must be >= 0")
    val = 2.0 * math.exp(-tau * tau / (2.0 * float(np.sum(c * c))))
    return val if raw else min(1.0, val)


def azuma_bernstein_tail(
    a: Sequence[float], kappa: float, tau: float, c: float = 1.0, eta: float = 1.0, raw: bool = False
) -> float:
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        raise ComplexityError("weight vector is empty")
    if kappa <= 0 or c <= 0 or eta <= 0:
        raise ComplexityError("kappa, c and eta must be positive")
    if tau < 0:
        raise ComplexityError("tau must be >= 0")
    l2 = float(np.sum(a * a))
    linf = float(np.max(np.abs(a)))
    quad = tau * tau / (4.0 * c * kappa * kappa * l2) if l2 > 0 else math.inf
    lin = eta * tau / (2.0 * kappa * linf) if linf > 0 else math.inf
    expo = min(quad, lin)
    val = 2.0 * math.exp(-expo) if expo != math.inf else 0.0
    return val if raw else min(1.0, val)
