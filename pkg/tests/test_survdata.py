import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rankhaz.survdata import (DataError, SurvivalDataset, build_risk_structure, coarsen_grid,
                              coarsen_round, drop_intercept, load_csv, with_intercept)

from conftest import random_tied_dataset


def write(tmp_path, text, name="d.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


# -- load_csv ---------------------------------------------------------------

def test_load_five_rows(tmp_path):
    path = write(tmp_path, "time,event,x1\n2,1,0.5\n3,1,-1\n3,1,2\n5,0,0\n7,1,1\n")
    ds = load_csv(path)
    assert (ds.n, ds.p) == (5, 1)
    assert ds.names == ("x1",)
    np.testing.assert_array_equal(ds.time, [2, 3, 3, 5, 7])
    np.testing.assert_array_equal(ds.event, [1, 1, 1, 0, 1])
    assert not ds.has_intercept


def test_bad_event_value_names_row(tmp_path):
    path = write(tmp_path, "time,event,x1\n2,1,0\n3,0,0\n4,2,0\n")
    with pytest.raises(DataError, match="row 3"):
        load_csv(path)


@pytest.mark.parametrize("body, pattern", [
    ("time,x1\n1,0\n", "missing column 'event'"),
    ("time,event,x1\n1,1,abc\n", "row 1: non-numeric.*'x1'"),
    ("time,event,x1\n1,1,0\n-2,1,0\n", "row 2: negative"),
    ("time,event,x1\n1,1,0\n2,,0\n", "row 2: missing value in column 'event'"),
])
def test_load_errors(tmp_path, body, pattern):
    with pytest.raises(DataError, match=pattern):
        load_csv(write(tmp_path, body))


def test_cluster_column(tmp_path):
    path = write(tmp_path, "time,event,age,patient\n1,1,50,3\n2,0,60,3\n4,1,40,7\n")
    ds = load_csv(path, cluster="patient")
    assert ds.names == ("age",)
    np.testing.assert_array_equal(ds.cluster, [3, 3, 7])


def test_custom_columns(tmp_path):
    path = write(tmp_path, "id,futime,status,a,b\n1,3,1,0,1\n2,4,0,1,1\n")
    ds = load_csv(path, time="futime", event="status", covariates=["b"])
    assert ds.names == ("b",) and ds.p == 1


# -- intercept ---------------------------------------------------------------

def test_with_intercept():
    ds = SurvivalDataset([1, 2, 3], [1, 0, 1], np.ones((3, 4)) * 2)
    di = with_intercept(ds)
    assert di.p == 5 and di.has_intercept
    np.testing.assert_array_equal(di.X[:, 0], 1.0)
    assert di.names[0] == "(intercept)"
    assert drop_intercept(di).p == 4
    with pytest.raises(DataError):
        with_intercept(di)


def test_intercept_only():
    di = with_intercept(SurvivalDataset([1, 2], [1, 1], np.empty((2, 0))))
    assert di.p == 1


def test_dataset_is_immutable():
    ds = SurvivalDataset([1, 2], [1, 1], [[0.0], [1.0]])
    with pytest.raises(ValueError):
        ds.X[0, 0] = 5


def test_dataset_validation():
    with pytest.raises(DataError):
        SurvivalDataset([1, -1], [1, 1], [[0], [0]])
    with pytest.raises(DataError):
        SurvivalDataset([1, 2], [1, 1], [[0]])
    with pytest.raises(DataError):
        SurvivalDataset([1, 2], [1, 1], [[0], [0]], has_intercept=True)


# -- risk structure ----------------------------------------------------------

def test_ds5_structure(ds5):
    rs = build_risk_structure(ds5)
    np.testing.assert_array_equal(rs.event_times, [2, 3, 7])
    np.testing.assert_array_equal(rs.tie_counts, [1, 2, 1])
    assert [e.tolist() for e in rs.event_sets()] == [[0], [1, 2], [4]]
    assert [rs.risk_set(r).tolist() for r in range(3)] == [[0, 1, 2, 3, 4], [1, 2, 3, 4], [4]]
    np.testing.assert_array_equal(rs.counts, [1, 1, 1, 0, 1])


def test_distinct_events_and_single_block():
    rs = build_risk_structure(SurvivalDataset([1, 2, 3, 4], [1, 1, 1, 1], np.zeros((4, 1))))
    np.testing.assert_array_equal(rs.tie_counts, 1)
    rs = build_risk_structure(SurvivalDataset([5] * 6, [1] * 6, np.zeros((6, 1))))
    assert rs.R == 1 and rs.tie_counts[0] == 6
    assert rs.risk_set(0).tolist() == list(range(6))


def test_censoring_tied_with_event_stays_at_risk():
    rs = build_risk_structure(SurvivalDataset([2, 2, 3], [1, 0, 1], np.zeros((3, 1))))
    assert 1 in rs.risk_set(0)


def test_early_censoring_is_inert():
    rs = build_risk_structure(SurvivalDataset([1, 2, 3], [0, 1, 1], np.zeros((3, 1))))
    assert not rs.active[0] and rs.active[1:].all()


def test_zero_events_rejected():
    with pytest.raises(DataError, match="no events"):
        build_risk_structure(SurvivalDataset([1, 2], [0, 0], np.zeros((2, 1))))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_risk_structure_invariants(seed):
    rng = np.random.default_rng(seed)
    ds = random_tied_dataset(rng)
    rs = build_risk_structure(ds)
    sets = [set(rs.risk_set(r)) for r in range(rs.R)]
    events = rs.event_sets()
    # definition and nestedness
    for r, t in enumerate(rs.event_times):
        assert sets[r] == {j for j in range(ds.n) if ds.time[j] >= t}
        assert set(events[r]) == {i for i in range(ds.n) if ds.event[i] and ds.time[i] == t}
        if r:
            assert sets[r] <= sets[r - 1]
    # disjoint event sets covering every event; conservation
    flat = np.concatenate(events)
    assert len(flat) == len(set(flat)) == ds.n_events
    assert rs.counts.sum() == rs.tie_counts.sum() == ds.n_events
    # suffix-sum path against brute force
    w = rng.normal(size=ds.n)
    brute = np.array([w[sorted(s)].sum() for s in sets])
    np.testing.assert_allclose(rs.risk_sums(w), brute, rtol=1e-12, atol=1e-12)
    z = rng.uniform(size=rs.R)
    zeta = np.array([sum(z[r] for r in range(rs.R) if i in sets[r]) for i in range(ds.n)])
    np.testing.assert_allclose(rs.at_risk_sums(z), zeta, rtol=1e-12, atol=1e-14)
    eta = rng.normal(size=ds.n) * 30
    lse = [np.log(np.exp(eta[sorted(s)] - eta.max()).sum()) + eta.max() for s in sets]
    np.testing.assert_allclose(rs.risk_logsumexp(eta), lse, rtol=1e-12)


# -- coarsening --------------------------------------------------------------

def test_coarsen_round():
    assert coarsen_round([2.26], 0.5)[0] == 2.5
    t = np.array([0.01, 2.26, 13.07, 29.99])
    np.testing.assert_array_equal(coarsen_round(t, 0.01), t)
    # half-way points go to the even multiple
    np.testing.assert_array_equal(coarsen_round([0.25, 0.75, 1.25], 0.5), [0.0, 1.0, 1.0])
    np.testing.assert_array_equal(coarsen_round([0.25, 0.35], 0.1), [0.2, 0.4])
    with pytest.raises(ValueError):
        coarsen_round([1.0], 0)


def test_coarsen_grid():
    obs, flag = coarsen_grid([9.0], [9.0], 7)
    assert obs[0] == 7 and not flag[0]
    t = np.array([1.0, 4, 6]), np.array([3.0, 4, 2])
    obs, flag = coarsen_grid(*t, 1)
    np.testing.assert_array_equal(obs, [1, 4, 2])
    np.testing.assert_array_equal(flag, [True, True, False])
    obs, flag = coarsen_grid([np.inf], [12.0], 7)
    assert obs[0] == 7 and not flag[0]
    for u in (0, -1, 1.5):
        with pytest.raises(ValueError):
            coarsen_grid([1.0], [1.0], u)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([1, 7, 14, 28]))
def test_grid_never_creates_events(seed, u):
    rng = np.random.default_rng(seed)
    T = rng.uniform(0.1, 300, 40)
    C = rng.uniform(0.1, 300, 40)
    obs, flag = coarsen_grid(T, C, u)
    assert flag.sum() <= (T <= C).sum()
    assert np.all(flag <= (T <= C))
    assert np.all(obs[flag] % u == 0)
