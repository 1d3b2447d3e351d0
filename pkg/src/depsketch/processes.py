"""Latent-driven sequences for GM1/GM2/GM3, tangent copies, and dependent-entry matrices.

All samplers are vectorised over a batch of independent paths. Batches are
generated chunk by chunk from counter-based streams (see ``_rng``), so a
batch of ``count`` paths is identical whatever the worker count.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, fields
from typing import Optional

import numpy as np
from scipy import special, stats

from . import _kernels
from ._rng import concat, map_chunks, resolve_seed
from .graph import FAMILIES, resolve_varrho

BASE_LAWS = ("gaussian", "rademacher", "bernoulli")
GM3_SUPPORTS = {
    "rademacher": (np.array([-1.0, 1.0]), np.array([0.5, 0.5])),
    "four-point": (np.array([-3.0, -1.0, 1.0, 3.0]) / math.sqrt(5.0), np.full(4, 0.25)),
}
ZETAS = ("tanh", "tanh-abs")
SCALE_LAWS = ("logistic", "constant")
MATRIX_FAMILIES = ("iid", "gm1", "adaptive")
MAX_SUPPORT = 16


class ConfigError(ValueError):
    pass


def conditional_center(z, m):
    """Subtract the conditional mean ``m`` from a raw draw ``z``."""
    m = np.asarray(m, dtype=float)
    if not np.all(np.isfinite(m)):
        raise ConfigError("conditional mean must be finite")
    return np.asarray(z, dtype=float) - m if np.ndim(z) or np.ndim(m) else float(z) - float(m)


def latent_scale(f, law: str = "logistic"):
    """Conditional standard deviation driven by the latent state, in [0.5, 1]."""
    f = np.asarray(f, dtype=float)
    if law == "constant":
        return np.ones_like(f)
    return 0.5 + 0.5 * special.expit(f)


@dataclass
class ProcessConfig:
    """A sequence adapted to a latent process.

    ``base`` picks the conditional law of xi_i given its history for GM1/GM2
    (scaled by ``latent_scale``); GM3 draws xi_i uniformly from a scaled
    symmetric discrete ``support`` and advances the latent through ``zeta``.
    ``latent_noise > 0`` makes the GM3 latent update stochastic.
    """

    family: str = "gm1"
    n: int = 8
    varrho: Optional[list] = None
    subgaussian_L: float = math.sqrt(2.0)
    rho: float = 0.8
    scale_law: str = "logistic"
    base: str = "gaussian"
    bern_p: float = 0.7
    mean_shift: float = 0.0
    centered: bool = True
    support: str = "rademacher"
    zeta: str = "tanh"
    latent_noise: float = 0.0

    def __post_init__(self):
        self.family = self.family.lower()
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}")
        if int(self.n) < 1:
            raise ConfigError("n must be >= 1")
        self.n = int(self.n)
        if self.varrho is None:
            self.varrho = resolve_varrho("shift1" if self.family == "gm1" else "shift0", self.n)
        else:
            self.varrho = resolve_varrho(self.varrho, self.n)
        if not self.subgaussian_L > 0:
            raise ConfigError("subgaussian_L must be positive")
        if not -1.0 < self.rho < 1.0:
            raise ConfigError("rho must lie in (-1, 1)")
        if self.scale_law not in SCALE_LAWS:
            raise ConfigError(f"unknown scale law {self.scale_law!r}")
        if self.base not in BASE_LAWS:
            raise ConfigError(f"unknown base law {self.base!r}")
        if not 0.0 < self.bern_p < 1.0:
            raise ConfigError("bern_p must lie in (0, 1)")
        if self.support not in GM3_SUPPORTS:
            raise ConfigError(f"unknown support {self.support!r}")
        if len(GM3_SUPPORTS[self.support][0]) > MAX_SUPPORT:
            raise ConfigError("discrete support too large for posterior enumeration")
        if self.zeta not in ZETAS:
            raise ConfigError(f"unknown latent map {self.zeta!r}")
        if self.latent_noise < 0:
            raise ConfigError("latent_noise must be >= 0")
        if self.centered:
            need = required_subgaussian_L(self)
            if self.subgaussian_L < need:
                raise ConfigError(
                    f"subgaussian_L={self.subgaussian_L:.4g} below the {need:.4g} this law needs"
                )

    @classmethod
    def iid(cls, n: int, **kw) -> "ProcessConfig":
        """i.i.d. N(0, 1) entries: GM2 with a constant scale and white latent."""
        kw.setdefault("rho", 0.0)
        return cls(family="gm2", n=n, scale_law="constant", **kw)

    @property
    def has_prior(self) -> bool:
        return self.family in ("gm1", "gm3")

    @property
    def constant_variance(self) -> Optional[float]:
        """Conditional variance when it does not depend on the history, else None."""
        if self.scale_law != "constant" or self.family == "gm3" or not self.centered:
            return None
        return {"gaussian": 1.0, "rademacher": 1.0, "bernoulli": self.bern_p * (1 - self.bern_p)}[
            self.base
        ]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ProcessConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ProcessConfig":
        return cls.from_dict(json.loads(text))


def required_subgaussian_L(cfg: ProcessConfig) -> float:
    """Smallest L with P(|xi| > t) <= 2 exp(-t^2 / L^2) for every t and history.

    Conditional laws are scale families with scale at most 1, so the worst
    case is scale 1.
    """
    s = 1.0
    if cfg.family == "gm3":
        vals, probs = GM3_SUPPORTS[cfg.support]
        return s * _discrete_L(np.abs(vals), probs)
    if cfg.base == "gaussian":
        return s * _gaussian_L()
    if cfg.base == "rademacher":
        return s * _discrete_L(np.array([1.0, 1.0]), np.array([0.5, 0.5]))
    p = cfg.bern_p
    atoms = np.array([p, 1 - p])
    return s * _discrete_L(atoms, np.array([1 - p, p]))


def _gaussian_L() -> float:
    # t^2 / log(2 / P(|Z| > t)) increases in t towards 2 without reaching it
    return math.sqrt(2.0)


def _discrete_L(abs_atoms, probs) -> float:
    # the tail is a step function; the binding points are just below each atom
    worst = 0.0
    for a in np.unique(abs_atoms):
        tail = float(np.sum(probs[abs_atoms >= a]))
        if tail >= 2.0:
            continue
        worst = max(worst, a * a / math.log(2.0 / tail))
    return math.sqrt(worst)


@dataclass
class PathSample:
    xi: np.ndarray
    latent: np.ndarray
    prior: Optional[float] = None
    tangent: Optional[np.ndarray] = None
    seed: Optional[int] = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "latent", "xi", "tangent"])
        if self.prior is not None:
            w.writerow([0, repr(float(self.prior)), "", ""])
        for i in range(len(self.xi)):
            tan = "" if self.tangent is None else repr(float(self.tangent[i]))
            w.writerow([i + 1, repr(float(self.latent[i])), repr(float(self.xi[i])), tan])
        return buf.getvalue()


@dataclass
class PathBatch:
    """``count`` independent paths; ``latent[:, i-1]`` is F_i and ``prior`` is F_0."""

    xi: np.ndarray
    latent: np.ndarray
    prior: Optional[np.ndarray]
    tangent: Optional[np.ndarray]
    seed: int

    def __len__(self):
        return self.xi.shape[0]

    def path(self, k: int) -> PathSample:
        return PathSample(
            xi=self.xi[k].copy(),
            latent=self.latent[k].copy(),
            prior=None if self.prior is None else float(self.prior[k]),
            tangent=None if self.tangent is None else self.tangent[k].copy(),
            seed=self.seed,
        )

    def history(self, i: int, cfg: ProcessConfig) -> np.ndarray:
        """Latent value the conditional law of xi_i reads (1-based ``i``)."""
        if cfg.family == "gm2":
            return self.latent[:, i - 1]
        return self.prior if i == 1 else self.latent[:, i - 2]


def _raw_draw(cfg: ProcessConfig, rng: np.random.Generator, shape):
    if cfg.base == "gaussian":
        return rng.standard_normal(shape), 0.0
    if cfg.base == "rademacher":
        return rng.integers(0, 2, size=shape) * 2.0 - 1.0, 0.0
    return (rng.random(shape) < cfg.bern_p).astype(float), cfg.bern_p


def _exogenous_chunk(cfg: ProcessConfig, rng, b: int, tangent: bool):
    n = cfg.n
    c = math.sqrt(1.0 - cfg.rho * cfg.rho)
    f_start = rng.standard_normal(b)
    innov = c * rng.standard_normal((b, n if cfg.has_prior else n - 1))
    path = _kernels.ar1_filter(innov, cfg.rho, f_start)
    if cfg.has_prior:
        prior, latent = path[:, 0], path[:, 1:]
        drive = path[:, :-1]
    else:
        prior, latent = None, path
        drive = path
    s = latent_scale(drive, cfg.scale_law)

    def draw():
        z, base_mean = _raw_draw(cfg, rng, (b, n))
        m = s * (base_mean + cfg.mean_shift)
        raw = s * z + s * cfg.mean_shift
        return conditional_center(raw, m) if cfg.centered else raw

    xi = draw()
    tan = draw() if tangent else None
    return xi, latent, prior, tan


def _zeta(cfg: ProcessConfig, f, x):
    if cfg.zeta == "tanh-abs":
        return np.tanh(f + np.abs(x))
    return np.tanh(f + x)


def _gm3_chunk(cfg: ProcessConfig, rng, b: int, tangent: bool):
    n = cfg.n
    vals, probs = GM3_SUPPORTS[cfg.support]
    prior = rng.standard_normal(b)
    xi = np.empty((b, n))
    latent = np.empty((b, n))
    tan = np.empty((b, n)) if tangent else None
    f = prior
    idx = rng.choice(len(vals), size=(b, n), p=probs)
    noise = rng.standard_normal((b, n)) if cfg.latent_noise > 0 else None
    u_tan = rng.random((b, n)) if tangent else None
    for i in range(n):
        s = latent_scale(f, cfg.scale_law)
        x = s * vals[idx[:, i]]
        f_new = _zeta(cfg, f, x)
        if noise is not None:
            f_new = f_new + cfg.latent_noise * noise[:, i]
        xi[:, i] = x
        latent[:, i] = f_new
        if tangent:
            cand = s[:, None] * vals[None, :]
            w = gm3_posterior(cfg, f, f_new, cand, probs)
            k = (np.cumsum(w, axis=1) <= u_tan[:, i : i + 1]).sum(axis=1)
            k = np.minimum(k, len(vals) - 1)
            tan[:, i] = cand[np.arange(b), k]
        f = f_new
    if cfg.mean_shift and not cfg.centered:
        xi = xi + cfg.mean_shift
        if tangent:
            tan = tan + cfg.mean_shift
    return xi, latent, prior, tan


def gm3_posterior(cfg: ProcessConfig, f_prev, f_next, cand, probs) -> np.ndarray:
    """P(xi_i = cand[:, k] | F_{i-1} = f_prev, F_i = f_next), rows normalised."""
    mapped = _zeta(cfg, f_prev[:, None], cand)
    if cfg.latent_noise > 0:
        r = (f_next[:, None] - mapped) / cfg.latent_noise
        r2 = r * r
        lik = np.exp(-0.5 * (r2 - r2.min(axis=1, keepdims=True)))
    else:
        lik = (mapped == f_next[:, None]).astype(float)
    w = probs[None, :] * lik
    tot = w.sum(axis=1, keepdims=True)
    if np.any(tot == 0):
        raise ConfigError("posterior has no mass; latent path not reachable")
    return w / tot


def sample_paths(
    cfg: ProcessConfig, count: int, seed=None, tangent: bool = False, workers: int = 1
) -> PathBatch:
    """Draw ``count`` independent paths (optionally with tangent copies)."""
    seed = resolve_seed(seed)
    if count < 1:
        raise ConfigError("count must be >= 1")
    chunk_fn = _gm3_chunk if cfg.family == "gm3" else _exogenous_chunk

    def run(rng, start, stop):
        return chunk_fn(cfg, rng, stop - start, tangent)

    parts = map_chunks(run, count, seed, f"paths-{cfg.family}", workers)
    xi = concat([p[0] for p in parts])
    latent = concat([p[1] for p in parts])
    prior = concat([p[2] for p in parts]) if cfg.has_prior else None
    tan = concat([p[3] for p in parts]) if tangent else None
    return PathBatch(xi, latent, prior, tan, seed)


def sample_path(cfg: ProcessConfig, seed=None) -> PathSample:
    return sample_paths(cfg, 1, seed).path(0)


def sample_with_tangent(cfg: ProcessConfig, seed=None) -> PathSample:
    return sample_paths(cfg, 1, seed, tangent=True).path(0)


@dataclass
class DependentMatrixConfig:
    """Row-major sequential entries ``x = sqrt(1 + amp * squash(f)) * z``.

    ``family`` selects how the latent state f evolves between entries:
    ``iid`` switches modulation off, ``gm1`` uses an exogenous stationary
    AR(1) chain, ``adaptive`` drives the chain with the sign of the entry
    just produced, so later entries depend on earlier ones. The squash is odd
    and the stationary latent law symmetric, so every entry has unit
    variance while its conditional variance ranges over [1 - amp, 1 + amp].
    """

    n: int
    p: int
    family: str = "gm1"
    amp: float = 0.5
    rho: float = 0.8

    def __post_init__(self):
        if self.n < 1 or self.p < 1:
            raise ConfigError("n and p must be >= 1")
        if self.family not in MATRIX_FAMILIES:
            raise ConfigError(f"unknown matrix family {self.family!r}")
        if not 0.0 <= self.amp < 1.0:
            raise ConfigError("amp must lie in [0, 1)")
        if not -1.0 < self.rho < 1.0:
            raise ConfigError("rho must lie in (-1, 1)")

    @property
    def effective_amp(self) -> float:
        return 0.0 if self.family == "iid" else self.amp

    @property
    def variance_range(self) -> tuple[float, float]:
        a = self.effective_amp
        return 1.0 - a, 1.0 + a

    @property
    def subgaussian_L(self) -> float:
        return math.sqrt(self.variance_range[1]) * _gaussian_L()

    def to_dict(self) -> dict:
        return asdict(self)


def _matrix_chunk(cfg: DependentMatrixConfig, rng, b: int, with_latent: bool = False):
    k = cfg.n * cfg.p
    f0 = rng.standard_normal(b)
    z = rng.standard_normal((b, k))
    adaptive = cfg.family == "adaptive"
    eta = np.zeros((1, 1)) if adaptive else rng.standard_normal((b, k))
    x, f = _kernels.modulated_sequence(z, eta, f0, cfg.rho, cfg.effective_amp, adaptive)
    v = 1.0 + cfg.effective_amp * _kernels.squash(f)
    lo, hi = cfg.variance_range
    assert np.all(v >= lo) and np.all(v <= hi), "conditional variance outside its cap"
    x = x.reshape(b, cfg.n, cfg.p)
    if with_latent:
        return x, f.reshape(b, cfg.n, cfg.p)
    return x


def sample_dependent_matrices(cfg: DependentMatrixConfig, count: int, seed=None, workers: int = 1) -> np.ndarray:
    """``count`` unscaled matrices, shape (count, n, p)."""
    seed = resolve_seed(seed)
    parts = map_chunks(
        lambda rng, a, b: _matrix_chunk(cfg, rng, b - a), count, seed, f"matrix-{cfg.family}", workers
    )
    return concat(parts)


def sample_dependent_matrix(cfg: DependentMatrixConfig, seed=None) -> np.ndarray:
    return sample_dependent_matrices(cfg, 1, seed)[0]


def ks_same_law(a, b) -> float:
    """Two-sample KS p-value (asymptotic)."""
    return float(stats.ks_2samp(a, b, method="asymp").pvalue)
