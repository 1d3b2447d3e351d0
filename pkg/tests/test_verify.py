import json
import math
import itertools

import numpy as np
import pytest

from depsketch._rng import stream
from depsketch.complexity import FiniteList, ToeplitzBand, VThetaFinite, VThetaSparse, VThetaSphere, sample_size
from depsketch.processes import ProcessConfig, sample_paths
from depsketch.transforms import build_vtheta
from depsketch import verify as V

from fixtures import decoupling_fixtures, pair_mask, pair_matrix, symmetrization_fixtures

# E|chi^2_4 - 4| = 16 / e^2, frozen from the chi-square density (and a 10^6-draw check)
CHI2_4_ABS_DEV = 16.0 * math.exp(-2.0)
# Var(max of 4 standard normals), frozen from 1-D quadrature of the order-statistic density
VAR_MAX_OF_4 = 0.49171523687474195


def test_chi2_oracle_frozen_value():
    x = stream(0, "chi").chisquare(4, size=1_000_000)
    d = np.abs(x - 4)
    assert abs(d.mean() - CHI2_4_ABS_DEV) <= 3 * d.std() / 1000


# ---- plumbing ----


def test_summarize_and_verdict_band():
    s = V.summarize([1.0, 2.0, 3.0])
    assert s["mean"] == 2.0 and s["se"] == pytest.approx(1 / math.sqrt(3))
    with pytest.raises(V.VerifyError):
        V.summarize([1.0])
    assert V.band_verdict(3.0, 1.0) == "pass"
    assert V.band_verdict(-3.0, 1.0) == "fail"
    assert V.band_verdict(0.5, 1.0) == "inconclusive"


def test_escalation_runs_once_with_four_times_trials():
    calls = []

    def run(count, attempt):
        calls.append((count, attempt))
        return {"margin": 0.1, "se": 1.0}

    res = V._with_escalation(run, 100)
    assert calls == [(100, 0), (400, 1)]
    assert res["escalated"] and res["verdict"] == "pass"


def test_report_serialization():
    rep = V.TrialReport("x", "pass", "tol", 5, {"a": np.float64(1.5)}, {"s": np.array([1.0, 2.0])}, runtime=3.0)
    rec = json.loads(rep.to_json())
    assert rec["summary"]["a"] == 1.5 and "runtime" not in rec
    lines = rep.to_csv().splitlines()
    assert lines[0] == "quantity,trial,value" and lines[2] == "s,1,2.0"


def test_loglog_slope_exact_power():
    x = np.array([32, 64, 128, 256])
    assert V.loglog_slope(x, 3.0 * x**-0.5) == pytest.approx(-0.5)


# ---- C / B / D ----


def test_cbd_zero_matrix():
    rep = V.estimate_cbd(FiniteList([np.zeros((3, 4))]), ProcessConfig.iid(4), 1000, seed=1)
    for key in "CBD":
        assert np.all(rep.samples[key] == 0)


def test_cbd_identity_iid_matches_chi2_oracle():
    rep = V.estimate_cbd(FiniteList([np.eye(4)]), ProcessConfig.iid(4), 200000, seed=2)
    c = rep.samples["C"]
    assert abs(c.mean() - CHI2_4_ABS_DEV) <= 3 * c.std(ddof=1) / math.sqrt(len(c))
    # the identity has no off-diagonal part: B vanishes and D carries all of C
    assert np.max(rep.samples["B"]) <= 1e-12
    assert np.allclose(rep.samples["D"], c)
    assert rep.passed and rep.summary["fraction_holding"] == 1.0


@pytest.mark.parametrize(
    "aset,cfg",
    [
        (VThetaSphere(3, 4), ProcessConfig(family="gm1", n=12)),
        (VThetaSparse(2, 5, 2), ProcessConfig(family="gm3", n=10)),
        (ToeplitzBand(3, 4, 2), ProcessConfig(family="gm2", n=7)),
        (FiniteList([np.ones((3, 5)), np.eye(5)[:3]]), ProcessConfig(family="gm1", n=5)),
    ],
    ids=["sphere", "sparse", "toeplitz", "finite"],
)
def test_cbd_pointwise_inequality(aset, cfg):
    rep = V.estimate_cbd(aset, cfg, 5000, seed=3)
    assert rep.summary["fraction_holding"] == 1.0


def test_vtheta_reduction_matches_dense_list():
    n, p = 3, 4
    thetas = stream(4, "th").standard_normal((6, p))
    xi = sample_paths(ProcessConfig(family="gm1", n=n * p), 500, seed=4).xi
    m2 = np.full(n * p, 0.7)
    red = V.cbd_samples(VThetaFinite(thetas, n), xi, m2)
    dense = V.cbd_samples(FiniteList([build_vtheta(t, n).dense() for t in thetas]), xi, m2)
    for a, b in zip(red, dense):
        assert np.allclose(a, b, atol=1e-12)


def test_sphere_sup_dominates_sampled_directions():
    n, p = 2, 3
    xi = sample_paths(ProcessConfig.iid(n * p), 200, seed=5).xi
    m2 = np.ones(n * p)
    dirs = stream(5, "d").standard_normal((2000, p))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    exact = V.cbd_samples(VThetaSphere(n, p), xi, m2)
    sampled = V.cbd_samples(VThetaFinite(dirs, n), xi, m2)
    for e, s in zip(exact, sampled):
        assert np.all(s <= e + 1e-12)
        assert np.all(s >= 0.98 * e - 1e-12)


def test_toeplitz_band_reduction_brute_force():
    n, p, s = 2, 4, 2
    xi = sample_paths(ProcessConfig.iid(2 * p - 1), 100, seed=6).xi
    m2 = np.ones(2 * p - 1)
    c, b, d = V.cbd_samples(ToeplitzBand(n, p, s), xi, m2)
    rng = stream(6, "tb")
    best = np.zeros(len(xi))
    for supp in itertools.combinations(range(p), s):
        for _ in range(200):
            theta = np.zeros(p)
            theta[list(supp)] = rng.standard_normal(s)
            theta /= np.linalg.norm(theta)
            v = build_vtheta(theta, n, banded=True).dense()[:n]
            val = np.abs(np.sum((xi @ v.T) ** 2, axis=1) - np.sum(v * v))
            best = np.maximum(best, val)
    assert np.all(best <= c + 1e-10) and np.all(best >= 0.97 * c - 1e-10)


def test_cbd_length_mismatch():
    with pytest.raises(V.VerifyError):
        V.estimate_cbd(VThetaSphere(2, 3), ProcessConfig.iid(5), 10, seed=1)


# ---- off-diagonal ----


def test_offdiag_examples():
    assert V.check_offdiag_zero(ProcessConfig.iid(4), 20000, seed=1).passed
    assert V.check_offdiag_zero(ProcessConfig(family="gm2", n=6, rho=0.9), 100000, seed=2).passed
    bad = ProcessConfig(family="gm1", n=4, centered=False, mean_shift=0.3)
    assert not V.check_offdiag_zero(bad, 20000, seed=3).passed


# ---- decoupling ----


def test_decoupling_iid_pair_closed_form():
    rep = V.check_decoupling(ProcessConfig.iid(2), [pair_matrix()], 1, 200000, seed=1)
    lhs = rep.summary["lhs"]
    assert abs(lhs["mean"] - 4 / math.pi) <= 3 * lhs["se"]
    assert rep.passed


def test_decoupling_gm1_square():
    name, cfg, bset = decoupling_fixtures()[1]
    assert V.check_decoupling(cfg, bset, 2, 50000, seed=2).passed


def test_decoupling_zero_set():
    rep = V.check_decoupling(ProcessConfig.iid(3), [np.zeros((3, 3))], 1, 1000, seed=3)
    assert rep.summary["lhs"]["mean"] == 0 and rep.summary["rhs"]["mean"] == 0
    assert rep.passed


def test_decoupling_rejects_bad_matrices():
    with pytest.raises(V.VerifyError):
        V.check_decoupling(ProcessConfig.iid(2), [np.eye(2)], 1, 100, seed=1)
    with pytest.raises(V.VerifyError):
        V.check_decoupling(ProcessConfig.iid(2), [pair_mask()], 1, 100, seed=1)
    with pytest.raises(V.VerifyError):
        V.check_decoupling(ProcessConfig.iid(2), [pair_matrix()], 3, 100, seed=1)


def test_decoupling_and_symmetrization_stable_under_reseed():
    _, cfg, bset = decoupling_fixtures()[2]
    _, scfg, w, fns, pn = symmetrization_fixtures()[1]
    for seed in range(10):
        assert V.check_decoupling(cfg, bset, 1, 10000, seed=seed).verdict == "pass"
        assert V.check_symmetrization(scfg, w, fns, pn, 10000, seed=seed).verdict == "pass"


# ---- tangent ----


def test_tangent_examples():
    assert V.check_tangent_equivalence(ProcessConfig.iid(2), pair_mask(), 100000, seed=1).passed
    zero = V.check_tangent_equivalence(ProcessConfig.iid(3), np.zeros((3, 3)), 10000, seed=2)
    assert zero.passed and zero.summary["p_value"] == 1.0
    mask = np.zeros((4, 4))
    mask[[0, 0, 2], [1, 3, 3]] = stream(3, "m").standard_normal(3)
    assert V.check_tangent_equivalence(ProcessConfig(family="gm2", n=4), mask, 50000, seed=3).passed


def test_tangent_rejects_symmetric_mask():
    with pytest.raises(V.VerifyError, match="bipartite"):
        V.check_tangent_equivalence(ProcessConfig.iid(2), pair_matrix(), 100, seed=1)


def test_symmetric_mask_laws_differ():
    # for a symmetric mask the two quadratic forms have different variances (4 vs 2)
    x = sample_paths(ProcessConfig.iid(2), 100000, seed=4, tangent=True)
    full = 2 * x.xi[:, 0] * x.xi[:, 1]
    dec = x.xi[:, 0] * x.tangent[:, 1] + x.xi[:, 1] * x.tangent[:, 0]
    assert full.var() == pytest.approx(4, rel=0.05) and dec.var() == pytest.approx(2, rel=0.05)


# ---- symmetrization ----


def test_symmetrization_single_coordinate_factor_two():
    rep = V.check_symmetrization(ProcessConfig.iid(1), [1.0], ("identity",), 1, 50000, seed=1)
    sym = rep.summary["symmetrization"]
    assert sym["rhs"]["mean"] == pytest.approx(2 * math.sqrt(2 / math.pi), rel=0.02)
    assert rep.passed


def test_symmetrization_gm1():
    rep = V.check_symmetrization(ProcessConfig(family="gm1", n=6), None, ("identity", "square"), 2, 50000, seed=2)
    assert rep.passed
    assert rep.summary["symmetrization"]["verdict"] == rep.summary["desymmetrization"]["verdict"] == "pass"


def test_symmetrization_rejects_empty_class():
    with pytest.raises(V.VerifyError):
        V.check_symmetrization(ProcessConfig.iid(2), None, (), 1, 100, seed=1)


def test_contraction_sanity():
    assert V.check_contraction(ProcessConfig(family="gm1", n=6), None, 1, 50000, seed=3).passed


# ---- JL ----


def test_exact_isometry_zero_distortion():
    q, _ = np.linalg.qr(stream(1, "q").standard_normal((8, 3)))
    x = q.T[None]  # rows orthonormal: X^T X projects onto the row space
    pts = (q @ stream(2, "c").standard_normal((5, 3)).T).T
    assert np.max(V.max_distortion(x, pts)) <= 1e-12


def test_jl_failure_rate_at_calibrated_constant():
    # C = 8 frozen from a sweep over C in {1, 2, 4, 8}
    n = sample_size("jl", 0.5, N=32, C=8)
    assert n == 111
    pts = V.jl_points(32, 256, 3)
    for gen in ("gm1", "adaptive"):
        st = V.jl_distortion(pts, n, gen, 0.5, 200, seed=3)
        assert st.failure_rate <= 0.10
        assert np.all(st.distortion >= 0)


def test_jl_rejects_zero_point():
    with pytest.raises(V.VerifyError):
        V.jl_distortion(np.zeros((2, 4)), 4, "iid", 0.5, 5, seed=1)


def test_jl_worker_invariant():
    pts = V.jl_points(8, 32, 1)
    a = V.jl_distortion(pts, 16, "adaptive", 0.5, 150, seed=1, workers=1)
    b = V.jl_distortion(pts, 16, "adaptive", 0.5, 150, seed=1, workers=4)
    assert np.array_equal(a.distortion, b.distortion)


# ---- RIP ----


def _rip_oracle(x, s):
    n = x.shape[0]
    best = 0.0
    for supp in itertools.combinations(range(x.shape[1]), s):
        sv = np.linalg.svd(x[:, supp], compute_uv=False) ** 2 / n
        best = max(best, sv[0] - 1, 1 - sv[-1])
    return best


def test_rip_exact_isometry():
    q, _ = np.linalg.qr(stream(3, "q").standard_normal((16, 6)))
    x = q * 4.0  # X^T X = 16 I
    for s in (1, 2, 3):
        assert V.rip_constant(x, s).delta_s <= 1e-12


def test_rip_single_column_case():
    x = stream(4, "x").standard_normal((50, 7))
    want = np.max(np.abs(np.sum(x * x, axis=0) / 50 - 1))
    assert V.rip_constant(x, 1).delta_s == pytest.approx(want, abs=1e-13)


def test_rip_gaussian_matches_oracle_and_mc_below():
    x = stream(5, "x").standard_normal((1024, 12))
    est = V.rip_constant(x, 2)
    assert abs(est.delta_s - _rip_oracle(x, 2)) <= 1e-12 and est.supports == 66
    mc = V.rip_constant(x, 2, "mc", 10000, seed=1)
    assert mc.delta_s <= est.delta_s + 1e-12


def test_rip_guard_and_range():
    with pytest.raises(V.VerifyError):
        V.rip_constant(np.ones((2, 40)), 10)
    with pytest.raises(V.VerifyError):
        V.rip_constant(np.ones((2, 3)), 4)


# ---- bandit ----


def test_bandit_zero_adversary_slope():
    sigma, p, k = 0.5, 8, 4
    lam, _ = V._bandit_runs("zero", sigma, k, p, 20 * p, 200, seed=1, tag="slope")
    t = np.arange(1, 20 * p + 1)
    w = t >= p
    slope = np.polyfit(t[w], lam.mean(axis=0)[w], 1)[0]
    assert slope == pytest.approx(sigma**2 * VAR_MAX_OF_4, rel=0.10)


def test_bandit_repeater_linear_growth():
    lam, _ = V._bandit_runs("repeater", 0.5, 4, 6, 240, 50, seed=2, tag="rep")
    m = lam.mean(axis=0)
    # growth over the second half close to that of the first half after burn-in
    r = (m[239] - m[159]) / (m[159] - m[79])
    assert 0.8 < r < 1.25


def test_bandit_eps_one_trivial():
    rep = V.bandit_min_eig_experiment("random", 0.5, 3, 4, eps=1.0, runs=5, horizon=50, reference_t=50, seed=1)
    assert rep.summary["start"] == 1 and rep.passed


def test_bandit_argument_checks():
    with pytest.raises(V.VerifyError):
        V.bandit_min_eig_experiment(sigma=0.0)
    with pytest.raises(V.VerifyError):
        V.bandit_min_eig_experiment(k=1)


def test_selection_moments_against_mc():
    b = np.array([[0.3, -0.2, 0.0, 1.0]])
    prob, ez = V.selection_moments(b)
    z = stream(9, "sel").standard_normal((400000, 4)) + b
    pick = np.argmax(z, axis=1)
    emp = np.bincount(pick, minlength=4) / len(pick)
    assert np.allclose(prob[0], emp, atol=4e-3)
    assert prob.sum() == pytest.approx(1.0)


# ---- tail domination ----


@pytest.mark.parametrize("n,p", [(4, 4), (8, 4)])
def test_tail_domination_calibrated(n, p):
    # c1 = c2 = 1 frozen from a sweep over c1 in {0.1, 0.25, 0.5, 1}, c2 in {0.5, 1}
    rep = V.tail_domination(VThetaSphere(n, p), ProcessConfig(family="gm1", n=n * p), np.linspace(0, 2, 9), 1.0, 1.0, trials=20000, seed=5)
    assert rep.passed
    freqs = [r["frequency"] for r in rep.summary["rows"]]
    assert all(a >= b for a, b in zip(freqs, freqs[1:]))
