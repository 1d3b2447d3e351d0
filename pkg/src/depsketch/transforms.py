"""Sketching operators: dependent-entry dense JL, partial Toeplitz (FFT apply),
CountSketch with adaptive row patterns, and the V_theta reshaping operator.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from ._rng import concat, map_chunks, resolve_seed
from .processes import DependentMatrixConfig, sample_dependent_matrices


class TransformError(ValueError):
    pass


def _check_vec(u, p):
    u = np.asarray(u, dtype=float)
    if u.shape != (p,):
        raise TransformError(f"expected a vector of length {p}, got shape {u.shape}")
    return u


class SketchOperator:
    variant = "abstract"
    n: int
    p: int

    def apply(self, u) -> np.ndarray:
        raise NotImplementedError

    def to_dense(self) -> np.ndarray:
        """Explicit n x p matrix including the scale."""
        raise NotImplementedError

    def _payload(self) -> tuple[dict, dict]:
        raise NotImplementedError

    def to_text(self, hex_floats: bool = False) -> str:
        return dump_operator(self, hex_floats)


@dataclass(frozen=True)
class DenseSketch(SketchOperator):
    matrix: np.ndarray
    scale: float

    variant = "dense"

    @property
    def n(self):
        return self.matrix.shape[0]

    @property
    def p(self):
        return self.matrix.shape[1]

    def apply(self, u):
        return self.scale * (self.matrix @ _check_vec(u, self.p))

    def to_dense(self):
        return self.scale * self.matrix

    def _payload(self):
        return {"scale": self.scale}, {"matrix": self.matrix}


def toeplitz_dense(xi) -> np.ndarray:
    """Square Toeplitz matrix with first row xi_p..xi_{2p-1} and first column xi_p..xi_1."""
    xi = np.asarray(xi, dtype=float)
    p = (len(xi) + 1) // 2
    r = np.arange(p)[:, None]
    c = np.arange(p)[None, :]
    return xi[p - 1 - r + c]


def _fft_size(p: int) -> int:
    """Smallest power of two >= 2p."""
    return 1 << (2 * p - 1).bit_length()


@dataclass(frozen=True)
class ToeplitzSketch(SketchOperator):
    """R A_xi with 1-based selected rows; ``apply`` adds the 1/sqrt(n) scale."""

    xi: np.ndarray
    rows: np.ndarray

    variant = "toeplitz"

    @property
    def p(self):
        return (len(self.xi) + 1) // 2

    @property
    def n(self):
        return len(self.rows)

    @property
    def scale(self):
        return 1.0 / math.sqrt(self.n)

    def full_apply(self, u) -> np.ndarray:
        """A_xi u for all p rows via a zero-padded real FFT."""
        p = self.p
        u = _check_vec(u, p)
        size = _fft_size(p)
        # (A u)_r = sum_c xi[p - r + c] u[c]: a correlation of xi with u,
        # computed as a convolution of xi with u reversed
        conv = np.fft.irfft(np.fft.rfft(self.xi, size) * np.fft.rfft(u[::-1], size), size)
        corr = conv[p - 1 : 2 * p - 1]
        return corr[::-1]

    def apply(self, u):
        return self.scale * self.full_apply(u)[self.rows - 1]

    def to_dense(self):
        return self.scale * toeplitz_dense(self.xi)[self.rows - 1]

    def _payload(self):
        return {}, {"xi": self.xi, "rows": self.rows}


@dataclass(frozen=True)
class CountSketch(SketchOperator):
    """Column j holds signs[j, l] / sqrt(d) at row rows[j, l] (0-based)."""

    n: int
    rows: np.ndarray
    signs: np.ndarray

    variant = "countsketch"

    @property
    def p(self):
        return self.rows.shape[0]

    @property
    def d(self):
        return self.rows.shape[1]

    def apply(self, u):
        u = _check_vec(u, self.p)
        out = _kernels.countsketch_apply_batch(
            self.rows[None], self.signs[None], u, self.n, 1.0 / math.sqrt(self.d)
        )
        return out[0]

    def to_dense(self):
        x = np.zeros((self.n, self.p))
        cols = np.repeat(np.arange(self.p), self.d)
        np.add.at(x, (self.rows.ravel(), cols), self.signs.ravel() / math.sqrt(self.d))
        return x

    def nonzeros_per_column(self) -> np.ndarray:
        return np.count_nonzero(self.to_dense(), axis=0)

    def _payload(self):
        return {"n": self.n}, {"rows": self.rows, "signs": self.signs}


def _matrix_config(n, p, generator) -> DependentMatrixConfig:
    if generator is None:
        return DependentMatrixConfig(n, p, "iid")
    if isinstance(generator, str):
        return DependentMatrixConfig(n, p, generator)
    if (generator.n, generator.p) != (n, p):
        raise TransformError("generator dimensions do not match (n, p)")
    return generator


def build_jl(n: int, p: int, generator=None, seed=None) -> DenseSketch:
    """X = X_tilde / sqrt(n) with X_tilde from the dependent-entry generator."""
    if n < 1 or p < 1:
        raise TransformError("n and p must be >= 1")
    cfg = _matrix_config(n, p, generator)
    return DenseSketch(sample_dependent_matrices(cfg, 1, seed)[0], 1.0 / math.sqrt(n))


def build_jl_batch(count: int, n: int, p: int, generator=None, seed=None, workers: int = 1) -> np.ndarray:
    """``count`` scaled JL matrices, shape (count, n, p)."""
    cfg = _matrix_config(n, p, generator)
    return sample_dependent_matrices(cfg, count, seed, workers) / math.sqrt(n)


def build_toeplitz(xi, row_selector: Sequence[int]) -> ToeplitzSketch:
    xi = np.asarray(xi, dtype=float)
    if xi.ndim != 1 or len(xi) % 2 == 0:
        raise TransformError("xi must have odd length 2p - 1")
    p = (len(xi) + 1) // 2
    rows = np.asarray(sorted(set(int(r) for r in row_selector)), dtype=np.int64)
    if len(rows) != len(row_selector):
        raise TransformError("row selector has repeated indices")
    if len(rows) == 0 or rows[0] < 1 or rows[-1] > p:
        raise TransformError(f"row selector must be a non-empty subset of 1..{p}")
    return ToeplitzSketch(xi, rows)


PATTERNS = ("uniform", "adaptive")


def _countsketch_chunk(rng, count, n, p, d, beta):
    u = rng.random((count, p, d))
    signs = rng.integers(0, 2, size=(count, p, d)) * 2.0 - 1.0
    rows = _kernels.weighted_subset_rows(u, n, beta)
    return rows, signs


def _check_cs(n, p, d, pattern, beta):
    if not 1 <= d <= n:
        raise TransformError("need 1 <= d <= n")
    if p < 1:
        raise TransformError("p must be >= 1")
    if pattern not in PATTERNS:
        raise TransformError(f"unknown pattern {pattern!r}")
    if beta < 0:
        raise TransformError("beta must be >= 0")


def build_countsketch_batch(
    count: int, n: int, p: int, d: int, pattern: str = "adaptive", seed=None, beta: float = 1.0, workers: int = 1
):
    """Row indices (count, p, d) and signs (count, p, d) for ``count`` sketches.

    ``uniform`` picks each column's rows uniformly without replacement;
    ``adaptive`` down-weights rows already used by earlier columns with
    weight 1 / (1 + beta * occupancy).
    """
    _check_cs(n, p, d, pattern, beta)
    b = beta if pattern == "adaptive" else 0.0
    seed = resolve_seed(seed)
    parts = map_chunks(
        lambda rng, a, z: _countsketch_chunk(rng, z - a, n, p, d, b), count, seed, f"countsketch-{pattern}", workers
    )
    return concat([q[0] for q in parts]), concat([q[1] for q in parts])


def build_countsketch(n: int, p: int, d: int, pattern: str = "adaptive", seed=None, beta: float = 1.0) -> CountSketch:
    rows, signs = build_countsketch_batch(1, n, p, d, pattern, seed, beta)
    return CountSketch(n, rows[0], signs[0])


def countsketch_apply_batch(rows, signs, u, n: int) -> np.ndarray:
    d = rows.shape[2]
    return _kernels.countsketch_apply_batch(rows, signs, np.asarray(u, dtype=float), n, 1.0 / math.sqrt(d))


@dataclass(frozen=True)
class VThetaOperator:
    """Linear map carrying a stacked entry vector to (1/sqrt(n)) X theta.

    Block-diagonal form: n x np, row i is theta^T / sqrt(n) on block i, acting on
    the row-stacked entries of an n x p matrix. Banded form: p x (2p - 1), row r
    carries theta at columns p - 1 - r through 2p - 2 - r (all 0-based), so that
    V_theta xi = A_xi theta / sqrt(n) row by row.
    """

    theta: np.ndarray
    n: int
    banded: bool = False

    @property
    def p(self):
        return len(self.theta)

    def dense(self) -> np.ndarray:
        p, n = self.p, self.n
        if self.banded:
            v = np.zeros((p, 2 * p - 1))
            for r in range(p):
                v[r, p - 1 - r : 2 * p - 1 - r] = self.theta
        else:
            v = np.kron(np.eye(n), self.theta[None, :])
        return v / math.sqrt(n)

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.banded:
            if x.shape != (2 * self.p - 1,):
                raise TransformError("banded operator acts on vectors of length 2p - 1")
            return ToeplitzSketch(x, np.arange(1, self.p + 1)).full_apply(self.theta) / math.sqrt(self.n)
        if x.shape != (self.n * self.p,):
            raise TransformError("block operator acts on vectors of length n * p")
        return x.reshape(self.n, self.p) @ self.theta / math.sqrt(self.n)


def build_vtheta(theta, n: int, banded: bool = False) -> VThetaOperator:
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 1 or len(theta) < 1:
        raise TransformError("theta must be a non-empty vector")
    if n < 1:
        raise TransformError("n must be >= 1")
    return VThetaOperator(theta, n, banded)


# ---- text serialisation ----

_VARIANTS = {"dense": DenseSketch, "toeplitz": ToeplitzSketch, "countsketch": CountSketch}


def _fmt(x: float, hex_floats: bool) -> str:
    return float(x).hex() if hex_floats else repr(float(x))


def dump_operator(op: SketchOperator, hex_floats: bool = False) -> str:
    scalars, arrays = op._payload()
    lines = [f"variant {op.variant}"]
    for k, v in scalars.items():
        lines.append(f"scalar {k} {_fmt(v, hex_floats) if isinstance(v, float) else int(v)}")
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        kind = "int" if np.issubdtype(arr.dtype, np.integer) else "float"
        lines.append(f"array {name} {kind} {' '.join(map(str, arr.shape))}")
        rows = arr.reshape(arr.shape[0], -1) if arr.ndim > 1 else arr.reshape(1, -1)
        for row in rows:
            if kind == "int":
                lines.append(" ".join(str(int(v)) for v in row))
            else:
                lines.append(" ".join(_fmt(v, hex_floats) for v in row))
    return "\n".join(lines) + "\n"


def _parse_float(tok: str) -> float:
    return float.fromhex(tok) if "0x" in tok.lower() else float(tok)


def load_operator(text: str) -> SketchOperator:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("variant "):
        raise TransformError("missing variant line")
    variant = lines[0].split()[1]
    if variant not in _VARIANTS:
        raise TransformError(f"unknown variant {variant!r}")
    scalars, arrays = {}, {}
    k = 1
    while k < len(lines):
        head = lines[k].split()
        if head[0] == "scalar":
            tok = head[2]
            scalars[head[1]] = int(tok) if tok.lstrip("-").isdigit() else _parse_float(tok)
            k += 1
        elif head[0] == "array":
            name, kind, shape = head[1], head[2], tuple(int(s) for s in head[3:])
            nrows = shape[0] if len(shape) > 1 else 1
            vals = " ".join(lines[k + 1 : k + 1 + nrows]).split()
            conv = int if kind == "int" else _parse_float
            arr = np.array([conv(v) for v in vals], dtype=np.int64 if kind == "int" else float)
            arrays[name] = arr.reshape(shape)
            k += 1 + nrows
        else:
            raise TransformError(f"cannot parse line {lines[k]!r}")
    if variant == "dense":
        return DenseSketch(arrays["matrix"], float(scalars["scale"]))
    if variant == "toeplitz":
        return ToeplitzSketch(arrays["xi"], arrays["rows"])
    return CountSketch(int(scalars["n"]), arrays["rows"], arrays["signs"])
