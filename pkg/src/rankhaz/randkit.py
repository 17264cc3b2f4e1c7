"""Seeded random-variate generation.

Every sampler takes a :class:`numpy.random.Generator` and is deterministic
given its state. :class:`RngStream` derives independent generators from a
root seed and a stream id, so chains and replications never share a stream.

The Polya-Gamma sampler follows Polson, Scott & Windle (2013): Devroye's
alternating-series rejection sampler for ``PG(1, c)``, vectorised over all
pending draws.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg, special

from ._pgkernel import pg_convolution

# Devroye truncation point for the J*(1, z) proposal
_TRUNC = 0.64
_PI2 = np.pi ** 2


class PrecisionError(np.linalg.LinAlgError):
    """Precision matrix is not numerically positive definite."""


@dataclass(frozen=True)
class RngStream:
    """A named slot in the seed tree: ``(seed, stream_id, *path)``.

    ``child(k)`` nests further, e.g. replication -> method.
    """

    seed: int
    stream_id: int = 0
    path: tuple[int, ...] = ()

    def child(self, k: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id, self.path + (int(k),))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed) & (2 ** 64 - 1),
                                    spawn_key=(int(self.stream_id),) + self.path)
        return np.random.Generator(np.random.PCG64(ss))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    return np.random.default_rng(rng)


# ---------------------------------------------------------------------------
# Polya-Gamma
# ---------------------------------------------------------------------------

def pg_mean(b, c):
    """``E[PG(b, c)] = b / (2c) tanh(c / 2)``, with limit ``b / 4`` at 0."""
    b = np.asarray(b, dtype=float)
    c = np.abs(np.asarray(c, dtype=float))
    small = c < 1e-4
    cs = np.where(small, 1.0, c)
    out = np.where(small, 0.25 * (1 - c ** 2 / 12), np.tanh(cs / 2) / (2 * cs))
    return b * out


def pg_var(b, c):
    """``Var[PG(b, c)] = b (sinh c - c) / (4 c^3 cosh^2(c/2))``, ``b/24`` at 0."""
    b = np.asarray(b, dtype=float)
    c = np.abs(np.asarray(c, dtype=float))
    small = c < 1e-2
    cs = np.where(small, 1.0, c)
    # (sinh c - c)/c^3 / cosh^2(c/2), written to avoid overflow for large c
    big = (0.5 * (1 - np.exp(-2 * cs)) - cs * np.exp(-cs)) * 4 \
        / (cs ** 3 * (1 + np.exp(-cs)) ** 2)
    cz = np.where(small, c, 0.0)
    series = (1 / 6 + cz ** 2 / 120 + cz ** 4 / 5040) / np.cosh(cz / 2) ** 2
    return 0.25 * b * np.where(small, series, big)


def _a_coef(n, x):
    """Piecewise coefficient ``a_n(x)`` of the J*(1, z) density series."""
    k = n + 0.5
    left = x <= _TRUNC
    xs = np.where(left, x, _TRUNC)
    with np.errstate(divide="ignore", over="ignore"):
        a_left = np.exp(np.log(np.pi * k) + 1.5 * np.log(2 / (np.pi * xs)) - 2 * k * k / xs)
    a_right = np.pi * k * np.exp(-k * k * _PI2 * x / 2)
    return np.where(left, a_left, a_right)


def _mass_texpon(z):
    """Probability that the J* proposal comes from the exponential tail."""
    t = _TRUNC
    fz = _PI2 / 8 + z * z / 2
    b = np.sqrt(1 / t) * (t * z - 1)
    a = -np.sqrt(1 / t) * (t * z + 1)
    x0 = np.log(fz) + fz * t
    xb = x0 - z + special.log_ndtr(b)
    xa = x0 + z + special.log_ndtr(a)
    qdivp = 4 / np.pi * (np.exp(xb) + np.exp(xa))
    return 1 / (1 + qdivp)


def _rtigauss(z, rng):
    """Inverse-Gaussian(1/z, 1) draws truncated to ``(0, TRUNC)``."""
    t = _TRUNC
    out = np.empty_like(z)
    small = z < 1 / t   # mean above the truncation point: Levy proposal
    idx = np.flatnonzero(small)
    tail = special.ndtr(-1 / np.sqrt(t))
    while idx.size:
        zz = z[idx]
        # 1/N^2 with |N| > 1/sqrt(t) is Levy(0, 1) truncated to (0, t)
        u = 1.0 - rng.random(idx.size)
        x = 1.0 / special.ndtri(u * tail) ** 2
        accept = rng.random(idx.size) <= np.exp(-0.5 * zz * zz * x)
        out[idx[accept]] = x[accept]
        idx = idx[~accept]
    idx = np.flatnonzero(~small)
    while idx.size:
        mu = 1 / z[idx]
        y = rng.standard_normal(idx.size) ** 2
        muy = mu * y
        x = mu + 0.5 * mu * muy - 0.5 * mu * np.sqrt(4 * muy + muy * muy)
        flip = rng.random(idx.size) > mu / (mu + x)
        x = np.where(flip, mu * mu / x, x)
        ok = x < t
        out[idx[ok]] = x[ok]
        idx = idx[~ok]
    return out


def _pg1(c, rng, reps=None):
    """Exact ``PG(1, c)`` draws.

    With ``reps`` given, ``c[k]`` is used ``reps[k]`` times and the output
    has ``reps.sum()`` entries; per-tilt constants are computed once.
    """
    z = 0.5 * np.abs(np.asarray(c, dtype=float))
    mass = _mass_texpon(z)
    if reps is not None:
        z, mass = np.repeat(z, reps), np.repeat(mass, reps)
    fz = _PI2 / 8 + z * z / 2
    out = np.empty_like(z)
    pending = np.arange(z.size)
    while pending.size:
        zz = z[pending]
        m = pending.size
        texp = rng.random(m) < mass[pending]
        x = np.empty(m)
        x[texp] = _TRUNC + rng.standard_exponential(int(texp.sum())) / fz[pending[texp]]
        if (~texp).any():
            x[~texp] = _rtigauss(zz[~texp], rng)
        s = _a_coef(0, x)
        y = rng.random(m) * s
        decided = np.zeros(m, dtype=bool)
        accepted = np.zeros(m, dtype=bool)
        n = 0
        # alternating series: odd terms bound from below, even from above
        while not decided.all():
            n += 1
            live = np.flatnonzero(~decided)
            a = _a_coef(n, x[live])
            if n % 2:
                s[live] -= a
                hit = live[y[live] <= s[live]]
                accepted[hit] = True
                decided[hit] = True
            else:
                s[live] += a
                decided[live[y[live] > s[live]]] = True
        out[pending[accepted]] = 0.25 * x[accepted]
        pending = pending[~accepted]
    return out


def _pg_series(b, c, rng, terms=200):
    """Truncated gamma-series draw with the dropped tail replaced by its mean.

    Works for any real ``b > 0``; offered as the experimental fractional-shape
    route.
    """
    k = np.arange(1, terms + 1) - 0.5
    denom = k[None, :] ** 2 + (c[:, None] / (2 * np.pi)) ** 2
    g = rng.gamma(np.broadcast_to(b[:, None], denom.shape), 1.0)
    x = (g / denom).sum(axis=1) / (2 * _PI2)
    trunc_mean = b * (1 / denom).sum(axis=1) / (2 * _PI2)
    return x + (pg_mean(b, c) - trunc_mean)


def sample_polya_gamma(b, c, rng, *, exact_max: int = 20, fractional: str = "moment",
                       backend: str = "numba"):
    """Draw ``omega ~ PG(b, c)`` elementwise.

    Parameters
    ----------
    b : array_like
        Positive shapes. Integer shapes up to ``exact_max`` are drawn exactly as
        sums of ``PG(1, c)`` variables; larger or non-integer shapes use a
        Gaussian matched to the exact mean and variance (truncated at a tiny
        positive floor).
    c : array_like
        Finite tilts, broadcast against ``b``.
    rng : numpy.random.Generator
    exact_max : int
        Largest integer shape drawn by exact convolution.
    fractional : {"moment", "series"}
        Route for non-integer shapes below ``exact_max``; ``"series"`` is a
        truncated gamma-series sampler (experimental).
    backend : {"numba", "numpy"}
        Compiled scalar loop or the vectorised numpy sampler for the exact
        route. Both are exact; they consume the generator differently.

    Returns
    -------
    ndarray of the broadcast shape (0-d arrays for scalar input).
    """
    rng = as_generator(rng)
    b, c = np.broadcast_arrays(np.asarray(b, dtype=float), np.asarray(c, dtype=float))
    if np.any(~(b > 0)):
        raise ValueError("Polya-Gamma shape must be positive")
    if not np.all(np.isfinite(c)):
        raise ValueError("Polya-Gamma tilt must be finite")
    shape = b.shape
    b, c = b.ravel(), c.ravel()
    out = np.empty(b.size)

    integral = (b == np.round(b)) & (b <= exact_max)
    idx = np.flatnonzero(integral)
    if idx.size:
        reps = b[idx].astype(np.int64)
        if backend == "numba":
            cc = c[idx]
            out[idx] = pg_convolution(cc, _mass_texpon(0.5 * np.abs(cc)), reps, rng)
        elif backend == "numpy":
            draws = _pg1(c[idx], rng, reps)
            bounds = np.concatenate([[0], np.cumsum(reps)[:-1]])
            out[idx] = np.add.reduceat(draws, bounds)
        else:
            raise ValueError(f"unknown backend {backend!r}")

    rest = ~integral
    if fractional == "series":
        sub = rest & (b <= exact_max)
        idx = np.flatnonzero(sub)
        if idx.size:
            out[idx] = _pg_series(b[idx], c[idx], rng)
        rest = rest & ~sub
    elif fractional != "moment":
        raise ValueError(f"unknown fractional route {fractional!r}")
    idx = np.flatnonzero(rest)
    if idx.size:
        mean = pg_mean(b[idx], c[idx])
        sd = np.sqrt(pg_var(b[idx], c[idx]))
        draw = mean + sd * rng.standard_normal(idx.size)
        out[idx] = np.maximum(draw, 1e-3 * mean)
    return out.reshape(shape)


# ---------------------------------------------------------------------------
# Gamma, geometric, Gaussian
# ---------------------------------------------------------------------------

def sample_gamma(shape, rate, rng):
    """Gamma draws parameterised by shape and rate (mean ``shape / rate``)."""
    shape = np.asarray(shape, dtype=float)
    rate = np.asarray(rate, dtype=float)
    if np.any(~(shape > 0)) or np.any(~(rate > 0)):
        raise ValueError("gamma shape and rate must be positive")
    if np.any(~np.isfinite(rate)):
        raise OverflowError("gamma rate overflowed")
    return as_generator(rng).gamma(shape, 1.0 / rate)


def sample_geometric(p=None, rng=None, *, log_q=None):
    """Geometric draws on ``{1, 2, ...}`` with ``P(Z = k) = p (1 - p)^(k - 1)``.

    Pass either the success probability ``p`` or ``log_q = log(1 - p)``. The
    second form keeps full precision when ``p`` is within rounding of 1 or
    of 0 (``log_q`` close to 0). Draws use ``ceil(log U / log(1 - p))``.
    """
    if (p is None) == (log_q is None):
        raise TypeError("give exactly one of p or log_q")
    rng = as_generator(rng)
    if log_q is None:
        p = np.asarray(p, dtype=float)
        if np.any(~(p > 0)) or np.any(p > 1):
            raise ValueError("geometric success probability must lie in (0, 1]")
        with np.errstate(divide="ignore"):
            log_q = np.log1p(-p)
    else:
        log_q = np.asarray(log_q, dtype=float)
        if np.any(~(log_q < 0)):
            raise ValueError("log(1 - p) must be negative")
    u = 1.0 - rng.random(log_q.shape)    # in (0, 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        k = np.ceil(np.log(u) / log_q)
    k = np.where(np.isfinite(k), k, 1.0)
    k = np.clip(k, 1, 2.0 ** 62)
    return k.astype(np.int64)


@dataclass
class PrecisionGaussian:
    """``N(B^{-1} g, B^{-1})`` held in canonical (information) form."""

    g: np.ndarray
    B: np.ndarray

    def factor(self) -> np.ndarray:
        """Lower Cholesky factor of ``B``; raises :class:`PrecisionError`."""
        B = np.asarray(self.B, dtype=float)
        if np.abs(B - B.T).max(initial=0.0) > 1e-10 * np.abs(B).max(initial=1.0):
            raise PrecisionError("precision matrix is not symmetric")
        if not np.all(np.isfinite(B)):
            raise PrecisionError("precision matrix has non-finite entries")
        try:
            L = np.linalg.cholesky(B)
        except np.linalg.LinAlgError as exc:
            raise PrecisionError(f"Cholesky factorisation failed: {exc}") from None
        d = np.diag(L)
        if d.min() <= 1e-7 * d.max():
            raise PrecisionError("precision matrix is numerically singular")
        return L

    def mean_from(self, L) -> np.ndarray:
        w = linalg.solve_triangular(L, np.asarray(self.g, float), lower=True, check_finite=False)
        return linalg.solve_triangular(L.T, w, lower=False, check_finite=False)

    @property
    def mean(self) -> np.ndarray:
        return self.mean_from(self.factor())


def sample_mvn_precision(gauss: PrecisionGaussian, rng) -> np.ndarray:
    """One draw from ``N(B^{-1} g, B^{-1})`` via the Cholesky factor of ``B``.

    ``B = L L'``; the draw is ``B^{-1} g + L'^{-1} e`` with ``e`` standard
    normal, so no inverse is formed.
    """
    L = gauss.factor()
    mean = gauss.mean_from(L)
    eps = as_generator(rng).standard_normal(mean.shape[0])
    return mean + linalg.solve_triangular(L.T, eps, lower=False, check_finite=False)
