"""Survival data containers, risk-set bookkeeping and time coarsening.

Risk sets are never stored as an ``n x R`` membership matrix. Subjects are
sorted by observed time once; risk set ``r`` is then the tail of that order
starting at ``starts[r]``, so any sum over a risk set is a suffix sum and any
sum over the event times a subject is at risk for is a prefix sum.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np


class DataError(ValueError):
    """Raised for malformed survival data."""


class SubjectRecord(NamedTuple):
    time: float
    event: bool
    covariates: np.ndarray
    cluster: int | None = None


@dataclass(frozen=True)
class SurvivalDataset:
    """Observed times, event flags and a covariate matrix.

    Rows follow input order. ``cluster`` holds integer labels (``None`` when
    the data are not clustered).
    """

    time: np.ndarray
    event: np.ndarray
    X: np.ndarray
    names: tuple[str, ...] = ()
    cluster: np.ndarray | None = None
    has_intercept: bool = False

    def __post_init__(self):
        time = np.asarray(self.time, dtype=float)
        event = np.asarray(self.event).astype(bool)
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        n = time.shape[0]
        if n < 1:
            raise DataError("dataset needs at least one subject")
        if time.ndim != 1 or event.shape != (n,) or X.shape[0] != n:
            raise DataError("time, event and covariate rows must have equal length")
        if not np.all(np.isfinite(time)) or np.any(time < 0):
            raise DataError("observed times must be finite and nonnegative")
        if not np.all(np.isfinite(X)):
            raise DataError("covariates must be finite")
        names = tuple(self.names) or tuple(f"x{k + 1}" for k in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise DataError("one name per covariate column is required")
        if self.has_intercept and (X.shape[1] == 0 or not np.all(X[:, 0] == 1.0)):
            raise DataError("has_intercept is set but column 0 is not identically 1")
        cluster = self.cluster
        if cluster is not None:
            cluster = np.asarray(cluster)
            if cluster.shape != (n,):
                raise DataError("cluster labels must have one entry per subject")
            if np.any(cluster < 0):
                raise DataError("cluster labels must be nonnegative integers")
            cluster = cluster.astype(np.int64)
        for arr in (time, event, X, cluster):
            if arr is not None:
                arr.setflags(write=False)
        object.__setattr__(self, "time", time)
        object.__setattr__(self, "event", event)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "cluster", cluster)

    @property
    def n(self) -> int:
        return self.time.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def n_events(self) -> int:
        return int(self.event.sum())

    def records(self) -> list[SubjectRecord]:
        clusters = self.cluster if self.cluster is not None else [None] * self.n
        return [
            SubjectRecord(float(t), bool(e), x, None if g is None else int(g))
            for t, e, x, g in zip(self.time, self.event, self.X, clusters)
        ]


def load_csv(
    path,
    time: str = "time",
    event: str = "event",
    covariates: Sequence[str] | None = None,
    cluster: str | None = None,
) -> SurvivalDataset:
    """Read a survival dataset from a headed CSV file.

    When ``covariates`` is None every column other than the time, event and
    cluster columns is used, in file order. Errors name the offending row
    (1-based, counting data rows only) and column.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = [row for row in reader if row]

    required = [time, event] + ([cluster] if cluster else [])
    if covariates is None:
        covariates = [h for h in header if h not in required]
    for col in list(required) + list(covariates):
        if col not in header:
            raise DataError(f"{path}: missing column '{col}'")
    if not rows:
        raise DataError(f"{path}: no data rows")
    index = {h: k for k, h in enumerate(header)}

    def cell(row, rowno, col):
        k = index[col]
        if k >= len(row) or row[k].strip() == "":
            raise DataError(f"{path}: row {rowno}: missing value in column '{col}'")
        try:
            return float(row[k])
        except ValueError:
            raise DataError(
                f"{path}: row {rowno}: non-numeric value {row[k]!r} in column '{col}'"
            ) from None

    n, p = len(rows), len(covariates)
    T = np.empty(n)
    E = np.empty(n, dtype=bool)
    X = np.empty((n, p))
    G = np.empty(n, dtype=np.int64) if cluster else None
    for i, row in enumerate(rows):
        rowno = i + 1
        t = cell(row, rowno, time)
        if not np.isfinite(t) or t < 0:
            raise DataError(f"{path}: row {rowno}: negative or non-finite time {t!r}")
        e = cell(row, rowno, event)
        if e not in (0.0, 1.0):
            raise DataError(f"{path}: row {rowno}: event value {row[index[event]]!r} not in {{0,1}}")
        T[i], E[i] = t, e == 1.0
        for k, col in enumerate(covariates):
            X[i, k] = cell(row, rowno, col)
        if cluster:
            g = cell(row, rowno, cluster)
            if g < 0 or g != int(g):
                raise DataError(f"{path}: row {rowno}: cluster label {row[index[cluster]]!r} is not a nonnegative integer")
            G[i] = int(g)
    return SurvivalDataset(T, E, X, names=tuple(covariates), cluster=G)


def with_intercept(ds: SurvivalDataset) -> SurvivalDataset:
    """Prepend a column of ones named ``(intercept)``."""
    if ds.has_intercept:
        raise DataError("dataset already carries an intercept column")
    X = np.column_stack([np.ones(ds.n), ds.X])
    return replace(ds, X=X, names=("(intercept)",) + ds.names, has_intercept=True)


def drop_intercept(ds: SurvivalDataset) -> SurvivalDataset:
    if not ds.has_intercept:
        return ds
    return replace(ds, X=ds.X[:, 1:], names=ds.names[1:], has_intercept=False)


@dataclass(frozen=True)
class RiskStructure:
    """Distinct event times, tie blocks and sorted risk-set layout.

    Attributes
    ----------
    event_times : (R,) strictly increasing distinct event times.
    tie_counts : (R,) number of events ``d_r`` at each event time.
    order : (n,) permutation sorting subjects by observed time.
    starts : (R,) risk set ``r`` is ``order[starts[r]:]``.
    n_at_or_before : (n,) number of event times ``<= T_i``; subject ``i`` is
        in risk sets ``0 .. n_at_or_before[i] - 1``.
    block : (n,) index ``r`` of the event set containing ``i``, or -1.
    counts : (n,) ``c_i``, 1 if the subject is in some event set else 0.
    """

    event_times: np.ndarray
    tie_counts: np.ndarray
    order: np.ndarray
    starts: np.ndarray
    n_at_or_before: np.ndarray
    block: np.ndarray
    counts: np.ndarray
    event_index: np.ndarray = field(repr=False)
    event_rank: np.ndarray = field(repr=False)

    @property
    def R(self) -> int:
        return self.event_times.shape[0]

    @property
    def n(self) -> int:
        return self.order.shape[0]

    @property
    def active(self) -> np.ndarray:
        """Subjects that belong to at least one risk set."""
        return self.n_at_or_before > 0

    @property
    def risk_set_sizes(self) -> np.ndarray:
        return self.n - self.starts

    def event_sets(self) -> list[np.ndarray]:
        """Subject indices of each tie block ``E_r`` (sorted)."""
        bounds = np.concatenate([[0], np.cumsum(self.tie_counts)])
        return [self.event_index[bounds[r]:bounds[r + 1]] for r in range(self.R)]

    def risk_set(self, r: int) -> np.ndarray:
        return np.sort(self.order[self.starts[r]:])

    def risk_sums(self, w: np.ndarray) -> np.ndarray:
        """``sum_{j in R_r} w_j`` for every r; ``w`` may carry trailing axes."""
        w = np.asarray(w)
        tail = np.cumsum(w[self.order][::-1], axis=0)[::-1]
        return tail[self.starts]

    def risk_logsumexp(self, eta: np.ndarray) -> np.ndarray:
        """``log sum_{j in R_r} exp(eta_j)`` without overflow."""
        tail = np.logaddexp.accumulate(np.asarray(eta, dtype=float)[self.order][::-1])[::-1]
        return tail[self.starts]

    def event_sums(self, w: np.ndarray) -> np.ndarray:
        """``sum_{i in E_r} w_i`` for every r."""
        w = np.asarray(w)
        out = np.zeros((self.R,) + w.shape[1:], dtype=np.result_type(w, float))
        np.add.at(out, self.block[self.event_index], w[self.event_index])
        return out

    def at_risk_sums(self, z: np.ndarray) -> np.ndarray:
        """``zeta_i = sum_{r: i in R_r} z_r`` via a prefix sum over event times."""
        z = np.asarray(z)
        csum = np.concatenate([np.zeros(1, dtype=z.dtype), np.cumsum(z)])
        return csum[self.n_at_or_before]


def build_risk_structure(ds: SurvivalDataset) -> RiskStructure:
    """Derive tie blocks and the sorted risk-set layout of ``ds``.

    A censoring time equal to an event time keeps the censored subject in
    that risk set.
    """
    time, event = ds.time, ds.event
    if not event.any():
        raise DataError("no events observed: the risk structure is empty")
    event_times, tie_counts = np.unique(time[event], return_counts=True)
    order = np.argsort(time, kind="stable")
    starts = np.searchsorted(time[order], event_times, side="left")
    n_at_or_before = np.searchsorted(event_times, time, side="right")
    block = np.full(ds.n, -1, dtype=np.int64)
    block[event] = n_at_or_before[event] - 1
    event_index = np.lexsort((np.arange(ds.n)[event], block[event]))
    event_index = np.flatnonzero(event)[event_index]
    # position of each event within its tie block, used by Efron's correction
    first = np.concatenate([[0], np.cumsum(tie_counts)[:-1]])
    event_rank = np.arange(event_index.size) - np.repeat(first, tie_counts)
    rs = RiskStructure(
        event_times=event_times,
        tie_counts=tie_counts.astype(np.int64),
        order=order,
        starts=starts.astype(np.int64),
        n_at_or_before=n_at_or_before.astype(np.int64),
        block=block,
        counts=event.astype(np.int64),
        event_index=event_index,
        event_rank=event_rank.astype(np.int64),
    )
    for arr in (rs.event_times, rs.tie_counts, rs.order, rs.starts, rs.n_at_or_before,
                rs.block, rs.counts, rs.event_index, rs.event_rank):
        arr.setflags(write=False)
    return rs


def coarsen_round(times, delta: float) -> np.ndarray:
    """Round times to the nearest multiple of ``delta`` (ties to even)."""
    if not delta > 0:
        raise ValueError(f"grid width must be positive, got {delta}")
    times = np.asarray(times, dtype=float)
    inv = 1.0 / delta
    k = round(inv)
    if k >= 1 and abs(inv - k) <= 1e-9 * k:
        # delta = 1/k: scale by the exact integer so decimal grids stay exact
        return np.round(times * k) / k
    return delta * np.round(times / delta)


def coarsen_grid(event_times, censor_times, u: int) -> tuple[np.ndarray, np.ndarray]:
    """Observe on a grid of width ``u``: events round up, censorings round down.

    Returns ``(observed_time, event_flag)``; the flag is set when the rounded
    event time does not exceed the rounded censoring time. Infinite event
    times (no event) are allowed.
    """
    if not u > 0 or int(u) != u:
        raise ValueError(f"grid width must be a positive integer, got {u}")
    ev = np.asarray(event_times, dtype=float)
    ce = np.asarray(censor_times, dtype=float)
    with np.errstate(invalid="ignore"):
        ev_obs = u * np.ceil(ev / u)
    ce_obs = u * np.floor(ce / u)
    flag = ev_obs <= ce_obs
    return np.where(flag, ev_obs, ce_obs), flag
