"""Frozen fixtures shared by the acceptance suite and the module tests."""
import numpy as np

from depsketch.processes import ProcessConfig


def _sym_zero_diag(n, count, seed):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        a = rng.standard_normal((n, n))
        b = a + a.T
        np.fill_diagonal(b, 0.0)
        out.append(b)
    return out


def _bipartite(n, left, seed):
    rng = np.random.default_rng(seed)
    m = np.zeros((n, n))
    right = [i for i in range(n) if i not in left]
    for i in left:
        for j in right:
            m[i, j] = rng.standard_normal()
    return m


def pair_matrix():
    b = np.zeros((2, 2))
    b[0, 1] = b[1, 0] = 1.0
    return b


def pair_mask():
    b = np.zeros((2, 2))
    b[0, 1] = 1.0
    return b


def decoupling_fixtures():
    return [
        ("iid-pair", ProcessConfig.iid(2), [pair_matrix()]),
        ("gm1-n6", ProcessConfig(family="gm1", n=6), _sym_zero_diag(6, 3, 11)),
        ("gm2-n6-rho0.9", ProcessConfig(family="gm2", n=6, rho=0.9), _sym_zero_diag(6, 2, 12)),
        ("gm3-abs-n5", ProcessConfig(family="gm3", n=5, zeta="tanh-abs"), _sym_zero_diag(5, 3, 13)),
        (
            "gm3-noisy-four-point-n6",
            ProcessConfig(family="gm3", n=6, support="four-point", latent_noise=0.3),
            _sym_zero_diag(6, 2, 14),
        ),
    ]


def tangent_fixtures():
    return [
        ("iid-pair", ProcessConfig.iid(2), pair_mask()),
        ("gm2-n4", ProcessConfig(family="gm2", n=4), _bipartite(4, [0, 2], 21)),
        ("gm1-n6", ProcessConfig(family="gm1", n=6), _bipartite(6, [1, 2, 5], 22)),
        ("gm3-abs-n5", ProcessConfig(family="gm3", n=5, zeta="tanh-abs"), _bipartite(5, [0, 3], 23)),
        (
            "gm3-noisy-four-point-n6",
            ProcessConfig(family="gm3", n=6, support="four-point", latent_noise=0.3),
            _bipartite(6, [0, 1, 2], 24),
        ),
    ]


def symmetrization_fixtures():
    # (name, config, weights, functions, p_norm)
    return [
        ("iid-n1-identity", ProcessConfig.iid(1), [1.0], ("identity",), 1),
        ("gm1-n6-square", ProcessConfig(family="gm1", n=6), None, ("identity", "square"), 2),
        ("gm2-n8-rho0.9", ProcessConfig(family="gm2", n=8, rho=0.9), None, ("abs", "tanh"), 1),
        ("gm3-n6", ProcessConfig(family="gm3", n=6, support="four-point"), None, ("identity", "clip1"), 2),
        (
            "gm1-n10-weighted",
            ProcessConfig(family="gm1", n=10),
            list(np.linspace(-1.0, 2.0, 10)),
            ("square",),
            2,
        ),
    ]
