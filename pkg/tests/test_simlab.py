import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rankhaz.baseline import newton_mle
from rankhaz.randkit import RngStream
from rankhaz.simlab import (RunSettings, ScenarioSpec, baseline_logit, generate, load_scenario,
                            replication_metrics, run_replications)
from rankhaz.survdata import build_risk_structure

NO_CENSOR = (1e12, 2e12)


def test_weibull_mean_is_scale():
    spec = ScenarioSpec(n=100_000, beta_true=(0.0,), censor=NO_CENSOR)
    ds = generate(spec, np.random.default_rng(0))
    assert ds.event.all()
    assert ds.time.mean() == pytest.approx(10.0, abs=4 * 10 / np.sqrt(ds.n))


def test_weibull_ph_consistency():
    spec = ScenarioSpec(n=20_000, a=1.5, censor=(0.5, 40.0))
    ds = generate(spec, np.random.default_rng(1))
    fit = newton_mle(build_risk_structure(ds), ds.X, ties="efron")
    np.testing.assert_allclose(fit.beta_hat, spec.beta_true, atol=4 * fit.std_err.max())


def test_discrete_vanishing_hazard_censors_everyone():
    spec = ScenarioSpec("discrete-logistic", n=2000, beta_true=(0.0,), alpha0=-20.0)
    ds = generate(spec, np.random.default_rng(2))
    assert ds.event.sum() <= 2


def test_discrete_hazard_shapes():
    dec = baseline_logit(ScenarioSpec("discrete-logistic", hazard="decreasing"))
    assert dec[0] == pytest.approx(-3.8) and dec[-1] == pytest.approx(-5.0)
    inc = baseline_logit(ScenarioSpec("discrete-logistic", hazard="increasing"))
    assert inc[0] == pytest.approx(-5.0) and inc[-1] == pytest.approx(-3.8)


def test_discrete_matches_bernoulli_trials():
    """Inverse-CDF sampling gives the geometric law of repeated trials."""
    spec = ScenarioSpec("discrete-logistic", n=50_000, beta_true=(0.0,), alpha0=-3.0, t_max=300)
    ds = generate(spec, np.random.default_rng(3))
    h = 1 / (1 + np.exp(3.0))
    # P(event observed at t=1) = h * P(C >= 1) = h
    assert (ds.event & (ds.time == 1)).mean() == pytest.approx(h, abs=4 * np.sqrt(h / ds.n))


def test_lognormal_median():
    spec = ScenarioSpec("lognormal-nph", n=100_000, beta_true=(0.0,), censor=NO_CENSOR)
    ds = generate(spec, np.random.default_rng(4))
    assert np.median(ds.time) == pytest.approx(60.0, rel=0.01)
    assert not ScenarioSpec("lognormal-nph").proportional


def test_censoring_independent_of_covariates():
    spec = ScenarioSpec(n=40_000, beta_true=(0.0, 0.0), b=1e9)   # every record is a censoring
    ds = generate(spec, np.random.default_rng(5))
    assert not ds.event.any()
    for k in range(2):
        assert abs(np.corrcoef(ds.time, ds.X[:, k])[0, 1]) < 4 / np.sqrt(ds.n)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([1, 7, 14, 28]))
def test_grid_events_on_multiples(seed, u):
    spec = ScenarioSpec("discrete-logistic", n=300, coarsen=("grid", u))
    ds = generate(spec, np.random.default_rng(seed))
    assert np.all(ds.time[ds.event] % u == 0)


def test_round_coarsening_creates_ties():
    spec = ScenarioSpec(coarsen=("round", 1.0))
    ds = generate(spec, np.random.default_rng(6))
    assert np.all(ds.time == np.round(ds.time))
    assert np.unique(ds.time).size < ds.n


def test_spec_validation():
    for kw in ({"family": "gompertz"}, {"n": 1}, {"a": 0.0}, {"coarsen": ("round", 0)},
               {"family": "discrete-logistic", "hazard": "wavy"},
               {"family": "discrete-logistic", "coarsen": ("round", 1.0)},
               {"censor": (5.0, 1.0)}):
        with pytest.raises(ValueError):
            ScenarioSpec(**kw)
    with pytest.raises(ValueError):
        RunSettings(methods=("exact",))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 40))
def test_rmse_decomposition(seed, R):
    rng = np.random.default_rng(seed)
    est = rng.normal(0.3, 0.1, (R, 3))
    truth = np.array([0.2, 0.3, 0.4])
    bias, sd, rmse, cp, aw = replication_metrics(est, est - 0.1, est + 0.1, truth)
    np.testing.assert_allclose(rmse ** 2 - (bias ** 2 + sd ** 2 * (R - 1) / R), 0.0, atol=1e-10)
    assert np.all((0 <= cp) & (cp <= 100)) and np.allclose(aw, 0.2)


def test_clustered_design():
    spec = ScenarioSpec(n=30, cluster_size=5, frailty_var=0.5)
    ds = generate(spec, np.random.default_rng(7))
    np.testing.assert_array_equal(np.bincount(ds.cluster), 5)


SMALL = RunSettings(methods=("breslow", "pl"), n_iter=150, n_burnin=50)


def test_single_replication_has_no_sd():
    rep = run_replications(ScenarioSpec(n=100), SMALL, reps=1, seed=3)
    row = rep.row("pl", "beta4")
    assert row.SD is None and row.CP in (0.0, 100.0)
    assert row.Bias == pytest.approx(rep.estimates["pl"][0][3] - 0.30)
    assert ",," in rep.to_csv().splitlines()[1] and "note" in rep.to_dict()


def test_parallel_matches_serial():
    spec = ScenarioSpec(n=80)
    a = run_replications(spec, SMALL, reps=4, seed=11, parallel=1)
    b = run_replications(spec, SMALL, reps=4, seed=11, parallel=3)
    assert a.to_csv() == b.to_csv()
    assert a.to_json(timing=False) == b.to_json(timing=False)


def test_replication_streams_are_distinct():
    spec = ScenarioSpec(n=50)
    d0 = generate(spec, RngStream(1, 0, (0,)).generator())
    d1 = generate(spec, RngStream(1, 1, (0,)).generator())
    assert not np.array_equal(d0.time, d1.time)


def test_failures_are_counted():
    # a single event with 4 covariates: the MLE cannot be finite
    spec = ScenarioSpec(n=6, b=1e6, censor=(0.5, 1.0))
    rep = run_replications(spec, RunSettings(methods=("breslow",)), reps=3, seed=0)
    assert rep.failures["breslow"] == 3 and rep.success_rate("breslow") == 0.0
    assert len(rep.failure_messages["breslow"]) == 3


def test_pseudo_truth_for_nph():
    rep = run_replications(ScenarioSpec("lognormal-nph", n=80), RunSettings(methods=("efron",)),
                           reps=2, seed=0, pseudo_n=20_000)
    assert rep.truth != list(ScenarioSpec().beta_true)
    assert np.all(np.sign(rep.truth) == np.sign(ScenarioSpec().beta_true))


def test_load_scenario(tmp_path):
    path = tmp_path / "s.ini"
    path.write_text(
        "[scenario]\nname = tiny\nfamily = discrete-logistic\nn = 120\nbeta = 0.1, -0.2\n"
        "hazard = decreasing\ncoarsen = grid:7   # weekly\n"
        "[run]\nmethods = pl, gpl\nreps = 5\nseed = 9\niters = 400\nburnin = 100\ntruth = auto\n")
    spec, run, extra = load_scenario(path)
    assert spec.name == "tiny" and spec.coarsen == ("grid", 7.0) and spec.beta_true == (0.1, -0.2)
    assert run.methods == ("pl", "gpl") and run.n_iter == 400
    assert extra == {"reps": 5, "seed": 9, "pseudo_n": 500_000, "truth": None}
    path.write_text("[scenario]\nfamily = weibull-ph\ncolour = red\n")
    with pytest.raises(ValueError, match="colour"):
        load_scenario(path)
    with pytest.raises(FileNotFoundError):
        load_scenario(tmp_path / "missing.ini")
