"""Configuration, draw storage and the sweep driver shared by both samplers."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .randkit import PrecisionError, PrecisionGaussian, RngStream, sample_mvn_precision


class DivergenceError(RuntimeError):
    """The chain produced a non-finite or non-positive-definite state."""


@dataclass
class GibbsConfig:
    """Normal prior ``beta ~ N(prior_mean, prior_cov)`` and chain length.

    ``prior_mean`` / ``prior_cov`` default to ``0`` and ``prior_sd**2 * I``
    once the dimension is known.
    """

    prior_mean: np.ndarray | None = None
    prior_cov: np.ndarray | None = None
    prior_sd: float = 10.0
    n_iter: int = 3000
    n_burnin: int = 1000
    thin: int = 1
    seed: int = 0
    stream_id: int = 0
    stream_path: tuple[int, ...] = ()
    max_failures: int = 10
    pg_exact_max: int = 20

    def __post_init__(self):
        if self.n_iter < 1 or self.thin < 1:
            raise ValueError("n_iter and thin must be positive")
        if not 0 <= self.n_burnin < self.n_iter:
            raise ValueError("need 0 <= n_burnin < n_iter")
        if self.prior_sd <= 0:
            raise ValueError("prior_sd must be positive")

    def prior(self, p: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return ``(b0, V0^{-1}, V0^{-1} b0)`` for dimension ``p``."""
        b0 = np.zeros(p) if self.prior_mean is None else np.asarray(self.prior_mean, float)
        V0 = self.prior_sd ** 2 * np.eye(p) if self.prior_cov is None \
            else np.asarray(self.prior_cov, float)
        if b0.shape != (p,) or V0.shape != (p, p):
            raise ValueError(f"prior dimensions do not match p={p}")
        try:
            V0inv = np.linalg.inv(np.linalg.cholesky(V0)).T
        except np.linalg.LinAlgError:
            raise ValueError("prior covariance must be symmetric positive definite") from None
        V0inv = V0inv @ V0inv.T
        return b0, V0inv, V0inv @ b0

    def rng(self) -> np.random.Generator:
        return RngStream(self.seed, self.stream_id, tuple(self.stream_path)).generator()


@dataclass
class PosteriorDraws:
    """Retained draws from one chain."""

    model: str
    names: tuple[str, ...]
    beta: np.ndarray
    loglik: np.ndarray
    iterations: np.ndarray
    elapsed: float
    has_intercept: bool = True
    sigma2_u: np.ndarray | None = None
    u: np.ndarray | None = None
    cluster_labels: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_draws(self) -> int:
        return self.beta.shape[0]

    def columns(self) -> dict[str, np.ndarray]:
        """Named scalar chains: coefficients, then the frailty variance."""
        out = {name: self.beta[:, k] for k, name in enumerate(self.names)}
        if self.sigma2_u is not None:
            out["frailty_variance"] = self.sigma2_u
        return out


def gaussian_beta_draw(X, w, kappa_adj, V0inv, V0inv_b0, rng):
    """Draw beta from ``N(B^{-1} g, B^{-1})``, ``B = X'WX + V0^{-1}``, ``g = X'k + V0^{-1} b0``."""
    B = (X * w[:, None]).T @ X + V0inv
    B = 0.5 * (B + B.T)
    g = X.T @ kappa_adj + V0inv_b0
    return sample_mvn_precision(PrecisionGaussian(g, B), rng)


def run_sweeps(config: GibbsConfig, sweep: Callable[[], None], record: Callable[[], tuple],
               on_failure: Callable[[], None] | None = None):
    """Drive ``sweep`` for ``n_iter`` iterations and collect ``record()`` after burn-in.

    ``sweep`` may raise :class:`PrecisionError`; the iteration is then counted
    as divergent and the previous state kept. ``max_failures`` consecutive
    failures abort the chain.
    """
    kept, iters = [], []
    failures = consecutive = 0
    t0 = time.perf_counter()
    for it in range(config.n_iter):
        try:
            sweep()
            consecutive = 0
        except (PrecisionError, FloatingPointError) as exc:
            failures += 1
            consecutive += 1
            if on_failure is not None:
                on_failure()
            if consecutive >= config.max_failures:
                raise DivergenceError(
                    f"chain diverged: {consecutive} consecutive failed updates "
                    f"at iteration {it} ({exc})") from None
        if it >= config.n_burnin and (it - config.n_burnin) % config.thin == 0:
            kept.append(record())
            iters.append(it)
    return kept, np.asarray(iters), time.perf_counter() - t0, failures
