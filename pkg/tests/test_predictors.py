import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chisquare

from emdiff import Dataset, SGrid, Schedule, eps_empirical, linear_schedule, oracle_eps, oracle_xi, xi_empirical
from emdiff.datasets import gaussian_mixture, isotropic_gaussian, point_cloud, ring
from emdiff.errors import ArgumentError, ConfigurationError
from emdiff.predictors import (
    posterior_mean_estimate, sample_pairs, sample_s, tweedie_check, OracleScore)
from emdiff.schedule import ratio

import oracles

BACKENDS = ["numba", "numpy"]


def _rel(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


# --- eps_empirical -----------------------------------------------------------

@pytest.mark.parametrize("backend", BACKENDS)
def test_single_point(sched, backend):
    v = np.array([0.7, -1.1])
    pred = eps_empirical(sched, Dataset([v]), backend=backend)
    g = np.random.default_rng(0)
    for t in (1, 10, 500, 1000):
        x = g.normal(size=2)
        expect = (x - math.sqrt(sched.alpha_bar(t)) * v) / math.sqrt(sched.one_minus_alpha_bar(t))
        np.testing.assert_allclose(pred(x, t), expect, rtol=1e-12, atol=1e-12)


def test_symmetric_pair(sched):
    pred = eps_empirical(sched, Dataset([[1.0, 2.0], [-1.0, -2.0]]))
    for t in (3, 300, 999):
        np.testing.assert_allclose(pred(np.zeros(2), t), 0.0, atol=1e-15)


@pytest.mark.parametrize("backend", BACKENDS)
def test_matches_extended_precision(sched, cloud5, backend):
    pred = eps_empirical(sched, cloud5, backend=backend)
    g = np.random.default_rng(1)
    for t in (2, 40, 250, 700, 1000):
        x = g.normal(size=2) * 1.5
        ref, mean = oracles.eps_star(cloud5.points.tolist(), x.tolist(), mp.e ** mp.mpf(sched.log_alpha_bars[t]))
        assert _rel(pred(x, t), [float(v) for v in ref]) < 1e-10
        assert _rel(pred.posterior_mean(x, t), [float(v) for v in mean]) < 1e-10


def test_t_zero_is_rejected(sched, cloud5):
    pred = eps_empirical(sched, cloud5)
    with pytest.raises(ArgumentError):
        pred(np.zeros(2), 0)
    with pytest.raises(ArgumentError):
        pred(np.zeros(2), 1001)
    with pytest.raises(ArgumentError):
        pred(np.zeros(3), 5)


def test_batch_equals_rows(sched, cloud5):
    pred = eps_empirical(sched, cloud5)
    X = np.random.default_rng(2).normal(size=(37, 2))
    B = pred(X, 123)
    for i in (0, 17, 36):
        assert pred(X[i], 123).tobytes() == B[i].tobytes()
        assert pred(X[i:i + 3], 123)[0].tobytes() == B[i].tobytes()


def test_backends_agree(sched):
    data = Dataset(np.random.default_rng(3).normal(size=(300, 4)))
    X = np.random.default_rng(4).normal(size=(50, 4))
    for t in (1, 80, 600):
        a = eps_empirical(sched, data, backend="numba")(X, t)
        b = eps_empirical(sched, data, backend="numpy")(X, t)
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-13)


# --- posterior mean ---------------------------------------------------------

def test_posterior_mean_single_point(sched):
    v = np.array([2.0, -3.0])
    np.testing.assert_allclose(posterior_mean_estimate(sched, Dataset([v]), np.array([9.0, 9.0]), 77), v, rtol=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 1000), st.integers(0, 10_000))
def test_posterior_identity(t, seed):
    s = linear_schedule()
    g = np.random.default_rng(seed)
    data = Dataset(g.normal(size=(6, 3)))
    x = g.normal(size=3) * 2
    pred = eps_empirical(s, data)
    recon = math.sqrt(s.alpha_bar(t)) * pred.posterior_mean(x, t) + math.sqrt(s.one_minus_alpha_bar(t)) * pred(x, t)
    np.testing.assert_allclose(recon, x, rtol=0, atol=1e-12 * (1 + np.abs(x).max()))


def test_posterior_collapse():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    data = Dataset(pts)
    errs = []
    for b in (1e-2, 1e-4, 1e-6, 1e-8):
        s = Schedule.from_betas([b])
        x = math.sqrt(s.alpha_bar(1)) * pts[1] + np.array([1e-3, -1e-3])
        errs.append(np.linalg.norm(posterior_mean_estimate(s, data, x, 1) - pts[1]))
    assert all(b <= a for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 1e-12


# --- softmax invariants -------------------------------------------------------

@settings(max_examples=60, deadline=None)
@given(st.floats(1e-8, 0.999), st.floats(0, 1e3), st.integers(0, 1000))
def test_weights_stable(one_minus_ab, xnorm, seed):
    s = Schedule.from_log_alpha_bars([math.log1p(-one_minus_ab)], [0, 1])
    g = np.random.default_rng(seed)
    data = Dataset(g.normal(size=(20, 2)))
    x = g.normal(size=2)
    x = x / np.linalg.norm(x) * xnorm
    pred = eps_empirical(s, data)
    w = pred.weights(x, 1)
    assert np.all(w >= 0)
    assert abs(w.sum() - 1) <= 1e-12
    assert np.all(np.isfinite(pred(x, 1)))


def test_weight_collapse():
    g = np.random.default_rng(5)
    pts = g.uniform(-3, 3, size=(30, 2))
    d = np.linalg.norm(pts[:, None] - pts[None], axis=2) + np.eye(30) * 9
    assert d.min() > 0.1
    s = Schedule.from_log_alpha_bars([math.log1p(-1e-6)], [0, 1])
    pred = eps_empirical(s, Dataset(pts))
    for j in (0, 11, 29):
        w = pred.weights(math.sqrt(s.alpha_bar(1)) * pts[j], 1)
        assert w[j] > 1 - 1e-6


# --- point-cloud identity ---------------------------------------------------

@settings(max_examples=40, deadline=None)
@given(st.integers(1, 1000), st.integers(0, 10_000))
def test_point_cloud_oracle_identity(t, seed):
    s = linear_schedule()
    g = np.random.default_rng(seed)
    pts = g.normal(size=(8, 2))
    x = g.normal(size=(4, 2)) * 2
    a = eps_empirical(s, Dataset(pts))(x, t)
    b = oracle_eps(s, point_cloud(pts))(x, t)
    assert _rel(a, b) < 1e-10


# --- xi_empirical -------------------------------------------------------------

def test_xi_point_zero_is_rescaled_eps(sched, cloud5):
    X = np.random.default_rng(6).normal(size=(100, 2))
    xi = xi_empirical(sched, cloud5, SGrid.point(0))
    eps = eps_empirical(sched, cloud5)
    for t in (1, 50, 500, 1000):
        np.testing.assert_allclose(xi(X, t), eps(X, t) / math.sqrt(sched.one_minus_alpha_bar(t)),
                                   rtol=1e-12, atol=1e-12)


def test_xi_single_point_single_step(sched):
    v = np.array([1.0, 2.0])
    grid = SGrid.point(100, seed=3)
    pred = xi_empirical(sched, Dataset([v]), grid)
    (s, w, xs), = grid.entries(sched, Dataset([v]), 400)
    assert s == 100 and w == 1.0
    r = ratio(sched, 400, 100)
    x = np.array([0.3, -0.4])
    np.testing.assert_allclose(pred(x, 400), (x - math.sqrt(r) * xs[0]) / (1 - r), rtol=1e-12)


def test_xi_matches_extended_precision(sched):
    g = np.random.default_rng(8)
    data = Dataset(g.normal(size=(3, 2)))
    for seed in range(50):
        grid = SGrid.sampled(2, seed)
        ent = grid.entries(sched, data, 600)
        if ent[0][0] != ent[1][0]:
            break
    assert len({e[0] for e in ent}) == 2
    ref_entries = [(w, mp.e ** (mp.mpf(sched.log_alpha_bars[600]) - mp.mpf(sched.log_alpha_bars[s])), xs.tolist())
                   for s, w, xs in ent]
    pred = xi_empirical(sched, data, grid)
    for _ in range(5):
        x = g.normal(size=2)
        ref = oracles.xi_star(ref_entries, x.tolist())
        assert _rel(pred(x, 600), [float(v) for v in ref]) < 1e-8


def test_grid_steps_are_earlier(sched):
    grid = SGrid.sampled(8, seed=1)
    for t in (1, 2, 3, 10, 999, 1000):
        steps = grid.steps_at(sched.T, t)
        assert len(steps) == 8 and all(0 <= s < t for s in steps)
        assert sum(w for _, w, _ in grid.entries(sched, Dataset([[0.0]]), t)) == pytest.approx(1.0, abs=1e-15)


def test_grid_errors(sched, cloud5):
    with pytest.raises(ConfigurationError):
        xi_empirical(sched, cloud5, SGrid.point(10))(np.zeros(2), 10)
    with pytest.raises(ConfigurationError):
        SGrid.sampled(0)


def test_xi_deterministic(sched, cloud5):
    X = np.random.default_rng(9).normal(size=(10, 2))
    a = xi_empirical(sched, cloud5, SGrid.sampled(4, 7))(X, 321)
    b = xi_empirical(sched, cloud5, SGrid.sampled(4, 7))(X, 321)
    assert a.tobytes() == b.tobytes()
    assert np.all(np.isfinite(a))


# --- sample_s -------------------------------------------------------------------

def test_sample_s_two_steps():
    g = np.random.default_rng(0)
    k, s = sample_pairs(2, 20_000, g)
    assert np.all(k == 1)
    assert set(np.unique(s)) == {0, 1}
    assert abs(s.mean() - 0.5) < 4 * 0.5 / math.sqrt(20_000)
    assert sample_s(2, seed=4) in (0, 1)


def test_sample_pairs_gap_uniform():
    k, s = sample_pairs(1000, 1_000_000, 12)
    counts = np.bincount(k, minlength=1000)[1:]
    assert counts.size == 999
    assert chisquare(counts).pvalue > 0.01
    assert np.all((s >= 0) & (s <= 1000 - k))


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 2000), st.integers(0, 2**31), st.data())
def test_sample_s_range(T, seed, data):
    t = data.draw(st.integers(1, T))
    s = sample_s(T, t, seed)
    assert 0 <= s < t
    assert 0 <= sample_s(T, seed=seed) <= T - 1


def test_sample_s_needs_two_steps():
    with pytest.raises(ConfigurationError):
        sample_s(1)


# --- oracles --------------------------------------------------------------------

def test_oracle_unit_gaussian(sched):
    pred = oracle_eps(sched, isotropic_gaussian(np.zeros(3), 1.0))
    x = np.random.default_rng(1).normal(size=(5, 3))
    for t in (1, 500, 1000):
        np.testing.assert_allclose(pred(x, t), math.sqrt(sched.one_minus_alpha_bar(t)) * x, rtol=1e-13)


def test_oracle_general_gaussian(sched):
    mu = np.array([1.0, -2.0])
    sigma = 0.3
    pred = oracle_eps(sched, isotropic_gaussian(mu, sigma))
    x = np.array([0.4, 0.9])
    for t in (5, 300):
        ab = sched.alpha_bar(t)
        expect = math.sqrt(1 - ab) * (x - math.sqrt(ab) * mu) / (ab * sigma ** 2 + 1 - ab)
        np.testing.assert_allclose(pred(x, t), expect, rtol=1e-12)


def test_oracle_mixture_finite_difference(sched):
    means = [[2.0, 0.0], [-1.0, 1.5]]
    scales = [0.5, 0.8]
    weights = [0.3, 0.7]
    spec = gaussian_mixture(means, scales, weights)
    sc = OracleScore(sched, spec)
    g = np.random.default_rng(11)
    for t in (10, 200, 800):
        ab = mp.e ** mp.mpf(sched.log_alpha_bars[t])
        for _ in range(3):
            x = g.normal(size=2) * 2
            h = mp.mpf(1e-5) * (1 + float(np.linalg.norm(x)))
            fd = oracles.fd_score(x.tolist(), means, scales, weights, ab, h)
            assert _rel(sc.score(x, t), [float(v) for v in fd]) < 1e-6
            ref = oracles.mixture_log_density(x.tolist(), means, scales, weights, ab)
            assert float(sc.log_density(x, t)) == pytest.approx(float(ref), rel=1e-12)


def test_oracle_rejects_ring(sched):
    with pytest.raises(ConfigurationError):
        oracle_eps(sched, ring())
    with pytest.raises(ConfigurationError):
        tweedie_check(ring(), sched, np.zeros(2), 5, [0, 1])


def test_oracle_xi_is_negative_score(sched):
    spec = gaussian_mixture([[1.0, 1.0], [-1.0, 0.0]], [0.4, 0.6])
    x = np.array([0.1, 0.2])
    np.testing.assert_allclose(oracle_xi(sched, spec)(x, 50),
                               oracle_eps(sched, spec)(x, 50) / math.sqrt(sched.one_minus_alpha_bar(50)),
                               rtol=1e-13)


# --- tweedie ---------------------------------------------------------------------

def test_tweedie_single_gaussian(sched):
    spec = isotropic_gaussian([0.5, -0.5], 0.7)
    x = np.random.default_rng(2).normal(size=(20, 2))
    assert tweedie_check(spec, sched, x, 400, [0, 399]) < 1e-10


def test_tweedie_mixture(sched):
    spec = gaussian_mixture([[2.0, 0.0], [-2.0, 1.0]], [0.3, 0.9], [0.4, 0.6])
    x = np.random.default_rng(3).normal(size=(50, 2)) * 2
    t = 500
    assert tweedie_check(spec, sched, x, t, [0, t // 2, t - 1]) < 1e-8
    assert tweedie_check(spec, sched, x, t, [t // 2]) == 0.0
    # and equals minus the score of P_t
    from emdiff.predictors import conditional_noise
    np.testing.assert_allclose(conditional_noise(spec, sched, x, t, 0), oracle_xi(sched, spec)(x, t),
                               rtol=1e-9, atol=1e-12)


def test_tweedie_bad_steps(sched):
    with pytest.raises(ArgumentError):
        tweedie_check(isotropic_gaussian([0.0]), sched, np.zeros(1), 5, [5])
