import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import gammaln

from rankhaz.gibbs import DivergenceError, GibbsConfig, run_sweeps
from rankhaz.plcox import (PLCoxConfig, init_state, pl_loglik, run_pl_gibbs, update_beta,
                           update_omega, update_z)
from rankhaz.randkit import PrecisionError
from rankhaz.survdata import DataError, SurvivalDataset, build_risk_structure, with_intercept

from conftest import brute_breslow, random_tied_dataset


def test_ds5_hand_value(ds5):
    rs = build_risk_structure(ds5)
    assert pl_loglik([0.0], rs, ds5.X) == pytest.approx(np.log(1 / 80), rel=1e-12)
    assert pl_loglik([0.0], rs, ds5.X) == pytest.approx(-4.38203, abs=1e-5)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_matches_brute_force_breslow(seed):
    rng = np.random.default_rng(seed)
    ds = random_tied_dataset(rng)
    beta = rng.normal(size=ds.p)
    got = pl_loglik(beta, build_risk_structure(ds), ds.X)
    assert got == pytest.approx(brute_breslow(beta, ds.time, ds.event, ds.X), rel=1e-10)


def test_no_ties_reduces_to_cox():
    rng = np.random.default_rng(1)
    n = 25
    ds = SurvivalDataset(rng.permutation(n) + 1.0, rng.uniform(size=n) < 0.6, rng.normal(size=(n, 2)))
    beta = np.array([0.4, -0.8])
    eta = ds.X @ beta
    direct = sum(eta[i] - np.log(np.exp(eta[ds.time >= ds.time[i]]).sum())
                 for i in range(n) if ds.event[i])
    assert pl_loglik(beta, build_risk_structure(ds), ds.X) == pytest.approx(direct, rel=1e-12)


def test_intercept_shift_invariance():
    rng = np.random.default_rng(2)
    ds = with_intercept(random_tied_dataset(rng, n=30, p=2))
    rs = build_risk_structure(ds)
    beta = np.array([0.0, 0.3, -0.2])
    base = pl_loglik(beta, rs, ds.X)
    for alpha in (-50.0, -3.0, 7.0, 200.0):
        assert pl_loglik(beta + [alpha, 0, 0], rs, ds.X) == pytest.approx(base, rel=1e-12)


def test_non_finite_predictor_rejected(ds5):
    with pytest.raises(FloatingPointError):
        pl_loglik([np.inf], build_risk_structure(ds5), ds5.X)


# -- latent updates ----------------------------------------------------------

def test_update_z_rates_and_zeta(ds5):
    rs = build_risk_structure(ds5)
    state = init_state([0.0], rs, ds5.X, delta=10)
    rng = np.random.default_rng(3)
    draws = []
    for _ in range(40_000):
        update_z(state, rs, rng)
        draws.append(state.z.copy())
        # membership: subject 0 sees only z_0, subject 4 all three
        assert state.zeta[0] == state.z[0]
        assert state.zeta[4] == pytest.approx(state.z.sum())
        assert state.zeta[3] == pytest.approx(state.z[0] + state.z[1])
    z = np.array(draws)
    shapes, rates = np.array([1, 2, 1]), np.array([5, 4, 1])
    se = np.sqrt(shapes) / rates / np.sqrt(len(z))
    np.testing.assert_array_less(np.abs(z.mean(0) - shapes / rates), 4 * se)


@pytest.mark.parametrize("d", [1, 2, 3, 4])
@pytest.mark.parametrize("A", [0.5, 1.0, 5.0])
def test_gamma_integral_identity(d, A):
    """``int lambda^d z^(d-1) e^(-A z) / Gamma(d) dz = (lambda/A)^d`` checked by MC."""
    rng = np.random.default_rng(d * 10 + int(A * 2))
    z = rng.gamma(d, 1 / A, 100_000)
    # importance ratio of the integrand to the Gamma(d, A) density is A^-d
    w = np.exp((d - 1) * np.log(z) - A * z - gammaln(d)) / np.exp(
        d * np.log(A) + (d - 1) * np.log(z) - A * z - gammaln(d))
    assert (w * A ** d).mean() == pytest.approx(1.0, abs=1e-12)
    # the density itself integrates to one
    grid = np.linspace(1e-6, 60 / A, 400_001)
    dens = np.exp(d * np.log(A) + (d - 1) * np.log(grid) - A * grid - gammaln(d))
    assert np.trapezoid(dens, grid) == pytest.approx(1.0, abs=1e-4)
    assert z.mean() == pytest.approx(d / A, abs=4 * np.sqrt(d) / A / np.sqrt(z.size))


def test_update_omega_shapes_and_inert():
    ds = with_intercept(SurvivalDataset([1, 2, 2, 3, 4], [0, 1, 0, 1, 0], np.zeros((5, 1))))
    rs = build_risk_structure(ds)
    state = init_state(np.zeros(2), rs, ds.X, delta=10)
    np.testing.assert_array_equal(state.pg_shape, [10, 11, 10, 11, 10])
    np.testing.assert_array_equal(state.kappa[[1, 3]], -4.5)
    rng = np.random.default_rng(4)
    # psi = 0 when zeta = delta and eta = 0
    state.zeta = np.array([0.0, 10.0, 10.0, 10.0, 10.0])
    draws = []
    for _ in range(20_000):
        update_omega(state, rng)
        draws.append(state.omega.copy())
    om = np.array(draws)
    assert np.all(om[:, 0] == 0)          # subject 0 is censored before the first event
    for i, c in [(1, 1), (2, 0)]:
        se = om[:, i].std() / np.sqrt(len(om))
        assert abs(om[:, i].mean() - (c + 10) / 4) < 4 * se


def test_update_beta_without_information_is_prior_draw():
    ds = with_intercept(SurvivalDataset([1.0, 2.0], [1, 1], [[0.3], [-0.2]]))
    rs = build_risk_structure(ds)
    cfg = PLCoxConfig(prior_mean=np.array([1.0, -2.0]), prior_cov=np.diag([4.0, 0.25]))
    prior = cfg.prior(2)
    state = init_state(prior[0], rs, ds.X, delta=10)
    state.omega = np.zeros(2)
    state.zeta = np.full(2, 10.0)     # offset = 0
    state.counts = np.full(2, 10.0)   # kappa = 0
    rng = np.random.default_rng(5)
    draws = []
    for _ in range(20_000):
        update_beta(state, prior, ds.X, rng)
        draws.append(state.beta)
    b = np.array(draws)
    se = np.array([2.0, 0.5]) / np.sqrt(len(b))
    np.testing.assert_array_less(np.abs(b.mean(0) - [1.0, -2.0]), 4 * se)
    np.testing.assert_allclose(b.var(0), [4.0, 0.25], rtol=0.05)


# -- chains ------------------------------------------------------------------

def test_single_retained_draw(ds5):
    d = run_pl_gibbs(ds5, None, PLCoxConfig(n_iter=11, n_burnin=10))
    assert d.n_draws == 1 and d.iterations.tolist() == [10]
    assert d.loglik[0] == pytest.approx(np.log(1 / 80))


def test_requires_intercept():
    ds = SurvivalDataset([1, 2], [1, 1], [[0.0], [1.0]])
    with pytest.raises(DataError):
        run_pl_gibbs(ds)


def test_config_validation():
    with pytest.raises(ValueError):
        PLCoxConfig(delta=0)
    with pytest.raises(ValueError):
        PLCoxConfig(n_iter=10, n_burnin=10)
    with pytest.raises(ValueError):
        PLCoxConfig(prior_cov=np.array([[1.0, 2.0], [2.0, 1.0]])).prior(2)


def test_chain_reproducible_and_stream_sensitive():
    ds = with_intercept(random_tied_dataset(np.random.default_rng(6), n=40, p=2))
    a = run_pl_gibbs(ds, None, PLCoxConfig(n_iter=200, n_burnin=50, seed=3))
    b = run_pl_gibbs(ds, None, PLCoxConfig(n_iter=200, n_burnin=50, seed=3))
    c = run_pl_gibbs(ds, None, PLCoxConfig(n_iter=200, n_burnin=50, seed=3, stream_id=1))
    np.testing.assert_array_equal(a.beta, b.beta)
    assert not np.array_equal(a.beta, c.beta)


def test_non_intercept_marginals_ignore_intercept_prior():
    rng = np.random.default_rng(7)
    n = 120
    x = rng.normal(size=n)
    t = np.ceil(rng.exponential(np.exp(-0.8 * x) * 4))
    ds = with_intercept(SurvivalDataset(t, np.ones(n), x[:, None]))
    out = []
    for shift in (-5.0, 5.0):
        cfg = PLCoxConfig(prior_mean=np.array([shift, 0.0]), n_iter=3000, n_burnin=500, seed=8)
        out.append(run_pl_gibbs(ds, None, cfg).beta[:, 1])
    qa, qb = (np.quantile(b, [0.025, 0.5, 0.975]) for b in out)
    sd = max(out[0].std(), out[1].std())
    np.testing.assert_allclose(qa, qb, atol=0.5 * sd)


def test_divergence_aborts_after_consecutive_failures():
    cfg = GibbsConfig(n_iter=50, n_burnin=0, max_failures=4)
    calls = []

    def sweep():
        calls.append(1)
        raise PrecisionError("boom")

    with pytest.raises(DivergenceError, match="4 consecutive"):
        run_sweeps(cfg, sweep, lambda: 0)
    assert len(calls) == 4


def test_transient_failure_is_counted_not_fatal():
    cfg = GibbsConfig(n_iter=20, n_burnin=0, max_failures=3)
    state = {"k": 0}

    def sweep():
        state["k"] += 1
        if state["k"] in (3, 4, 9):
            raise FloatingPointError("transient")

    kept, iters, _, failures = run_sweeps(cfg, sweep, lambda: state["k"])
    assert failures == 3 and len(kept) == 20


@pytest.mark.slow
def test_larger_delta_tightens_oracle_match():
    """The negative-binomial approximation sharpens as delta grows."""
    rng = np.random.default_rng(0)
    n = 30
    x = rng.normal(size=n)
    T = rng.exponential(np.exp(-0.7 * x) * 5)
    C = rng.uniform(0, 10, n)
    ds = with_intercept(SurvivalDataset(np.ceil(np.minimum(T, C)), T <= C, x[:, None]))
    rs = build_risk_structure(ds)
    grid = np.linspace(-4, 5, 4001)
    lp = np.array([pl_loglik([0, b], rs, ds.X) for b in grid]) - grid ** 2 / 200
    w = np.exp(lp - lp.max())
    w /= w.sum()
    target = w @ grid
    err = {}
    for delta in (10, 100):
        d = run_pl_gibbs(ds, rs, PLCoxConfig(delta=delta, n_iter=25_000, n_burnin=1000, seed=5))
        err[delta] = abs(d.beta[:, 1].mean() - target)
    assert err[100] < err[10]
