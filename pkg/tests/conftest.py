import itertools

import numpy as np
import pytest

from rankhaz.survdata import SurvivalDataset, with_intercept

DS5_TIME = (2.0, 3.0, 3.0, 5.0, 7.0)
DS5_EVENT = (1, 1, 1, 0, 1)


@pytest.fixture
def ds5():
    """Five subjects, a two-way tie at t=3 and a censoring at t=5; intercept only."""
    return with_intercept(SurvivalDataset(DS5_TIME, DS5_EVENT, np.empty((5, 0))))


def brute_breslow(beta, time, event, X):
    """Breslow partial log-likelihood by explicit enumeration of risk sets."""
    time, event, X = np.asarray(time, float), np.asarray(event, bool), np.asarray(X, float)
    eta = X @ np.asarray(beta, float)
    total = 0.0
    for t in np.unique(time[event]):
        E = [i for i in range(len(time)) if event[i] and time[i] == t]
        R = [j for j in range(len(time)) if time[j] >= t]
        total += sum(eta[i] for i in E) - len(E) * np.log(sum(np.exp(eta[j]) for j in R))
    return total


def brute_efron(beta, time, event, X):
    time, event, X = np.asarray(time, float), np.asarray(event, bool), np.asarray(X, float)
    eta = X @ np.asarray(beta, float)
    w = np.exp(eta)
    total = 0.0
    for t in np.unique(time[event]):
        E = [i for i in range(len(time)) if event[i] and time[i] == t]
        R = [j for j in range(len(time)) if time[j] >= t]
        sR, sE, d = sum(w[R]), sum(w[E]), len(E)
        total += sum(eta[E]) - sum(np.log(sR - l / d * sE) for l in range(d))
    return total


def brute_gpl(theta, time, event):
    """GPL log-likelihood from explicit products over each risk set."""
    time, event, theta = np.asarray(time, float), np.asarray(event, bool), np.asarray(theta, float)
    total = 0.0
    for t in np.unique(time[event]):
        E = [i for i in range(len(time)) if event[i] and time[i] == t]
        R = [j for j in range(len(time)) if time[j] >= t]
        num = np.prod(theta[E]) * np.prod([1 - theta[j] for j in R if j not in E])
        total += np.log(num / (1 - np.prod(1 - theta[R])))
    return total


def random_tied_dataset(rng, n=None, p=None, levels=None):
    n = n or int(rng.integers(2, 51))
    p = p if p is not None else int(rng.integers(1, 5))
    levels = levels or int(rng.integers(1, max(2, n // 3) + 1))
    time = rng.integers(1, levels + 1, n).astype(float)
    event = rng.uniform(size=n) < 0.7
    event[rng.integers(n)] = True
    return SurvivalDataset(time, event, rng.normal(size=(n, p)))


def grid_posterior(logpost, grid):
    w = np.exp(logpost - logpost.max())
    w /= w.sum()
    m = float(w @ grid)
    return m, float(np.sqrt(w @ (grid - m) ** 2))


def all_pairs(seq):
    return itertools.combinations(seq, 2)
