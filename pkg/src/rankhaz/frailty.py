"""Shared log-normal frailty for both samplers.

The linear predictor becomes ``eta_i = x_i'beta + u_g(i)`` with
``u_g ~ N(0, sigma2_u)`` and ``sigma2_u ~ InvGamma(a0, b0)``. Given the
Polya-Gamma weights of the base sampler, every ``u_g`` has a Gaussian full
conditional and ``sigma2_u`` a conjugate inverse-gamma one, so the sweep
stays fully Gibbs: ``Z -> omega -> beta -> u -> sigma2_u``.

Under PL-Cox the likelihood is blind to a common shift of all ``u_g``; the
effects are recentred to mean zero after each draw and the shift moved into
the intercept, which leaves every ``eta_i`` untouched. GPL-Cox is not
shift-invariant and is left alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import gplcox, plcox
from .gibbs import GibbsConfig, PosteriorDraws, run_sweeps
from .survdata import DataError, RiskStructure, SurvivalDataset, build_risk_structure


@dataclass
class FrailtyConfig:
    """Inverse-gamma hyperparameters for ``sigma2_u`` plus the base chain config.

    ``fixed_variance`` pins ``sigma2_u`` (no variance update), which is how
    the no-frailty limit is checked.
    """

    base: GibbsConfig = field(default_factory=plcox.PLCoxConfig)
    a0: float = 0.01
    b0: float = 0.01
    sigma2_init: float = 1.0
    fixed_variance: float | None = None

    def __post_init__(self):
        if not (self.a0 > 0 and self.b0 > 0):
            raise ValueError("inverse-gamma hyperparameters must be positive")
        if not self.sigma2_init > 0:
            raise ValueError("sigma2_init must be positive")
        if self.fixed_variance is not None and not self.fixed_variance > 0:
            raise ValueError("fixed_variance must be positive")


@dataclass
class FrailtyState:
    u: np.ndarray
    sigma2_u: float
    cluster_index: np.ndarray   # subject -> 0..G-1
    labels: np.ndarray          # original label of each cluster

    @property
    def G(self) -> int:
        return self.u.shape[0]

    @property
    def shift(self) -> np.ndarray:
        return self.u[self.cluster_index]


def cluster_state(cluster, sigma2: float) -> FrailtyState:
    labels, index = np.unique(np.asarray(cluster), return_inverse=True)
    return FrailtyState(np.zeros(labels.size), float(sigma2), index.astype(np.int64), labels)


def frailty_conditional(omega, work, cluster_index, G, sigma2):
    """Per-cluster Gaussian conditional ``(mean, variance)`` of ``u``.

    ``work_i = kappa_i - omega_i (x_i'beta + o_i)``; precision is
    ``sum_g omega + 1/sigma2``. Clusters with no members fall back to the prior.
    """
    prec = np.bincount(cluster_index, weights=omega, minlength=G) + 1.0 / sigma2
    s = np.bincount(cluster_index, weights=work, minlength=G)
    return s / prec, 1.0 / prec


def _work(base) -> tuple[np.ndarray, np.ndarray]:
    """``(omega, kappa - omega (x'beta + o))``, zero for inert PL subjects."""
    if isinstance(base, plcox.PLCoxState):
        a = base.active
        xb = base.eta - base.shift
        omega = np.where(a, base.omega, 0.0)
        work = np.where(a, base.kappa - base.omega * (xb + base.offset), 0.0)
        return omega, work
    xb = base.eta - base.shift
    return base.omega, base.kappa - base.omega * xb


def update_frailty(state: FrailtyState, base, X, rng, *, recentre: bool) -> None:
    """Draw every ``u_g`` from its Gaussian conditional and refresh ``eta``."""
    omega, work = _work(base)
    mean, var = frailty_conditional(omega, work, state.cluster_index, state.G, state.sigma2_u)
    u = mean + np.sqrt(var) * rng.standard_normal(state.G)
    if recentre:
        ubar = u.mean()
        u = u - ubar
        base.beta = base.beta.copy()
        base.beta[0] += ubar
    state.u = u
    base.shift = state.shift
    eta = plcox._linear_predictor(base.beta, X, base.shift)
    if isinstance(base, gplcox.GPLCoxState):
        gplcox.set_eta(base, eta)
    else:
        base.eta = eta


def update_frailty_variance(state: FrailtyState, config: FrailtyConfig, rng) -> None:
    """``sigma2_u ~ InvGamma(a0 + G/2, b0 + sum u^2 / 2)``."""
    if config.fixed_variance is not None:
        state.sigma2_u = float(config.fixed_variance)
        return
    shape, rate = variance_posterior(state.u, config.a0, config.b0)
    state.sigma2_u = float(rate / rng.gamma(shape))


def variance_posterior(u, a0: float, b0: float) -> tuple[float, float]:
    u = np.asarray(u, float)
    return a0 + 0.5 * u.size, b0 + 0.5 * float(u @ u)


def run_frailty_gibbs(ds: SurvivalDataset, risk: RiskStructure | None = None,
                      config: FrailtyConfig | None = None, model: str = "pl") -> PosteriorDraws:
    """Shared-frailty chain for ``model`` in ``{"pl", "gpl"}``.

    Retained draws carry ``beta``, the cluster effects ``u`` (one column per
    cluster, in sorted label order) and ``sigma2_u``; the stored log-likelihood
    is conditional on the current frailties.
    """
    if ds.cluster is None:
        raise DataError("frailty model needs cluster labels")
    if not ds.has_intercept:
        raise DataError("frailty fits expect an intercept column; call with_intercept first")
    if model not in ("pl", "gpl"):
        raise ValueError(f"model must be 'pl' or 'gpl', got {model!r}")
    config = config or FrailtyConfig(
        base=plcox.PLCoxConfig() if model == "pl" else gplcox.GPLCoxConfig())
    base_cfg = config.base
    if model == "pl" and not isinstance(base_cfg, plcox.PLCoxConfig):
        raise ValueError("PL frailty model needs a PLCoxConfig base")
    risk = risk or build_risk_structure(ds)
    X = ds.X
    prior = base_cfg.prior(ds.p)
    rng = base_cfg.rng()
    sigma2 = config.fixed_variance or config.sigma2_init
    fs = cluster_state(ds.cluster, sigma2)

    if model == "pl":
        mod, loglik = plcox, plcox.pl_loglik
        state = plcox.init_state(prior[0], risk, X, base_cfg.delta, shift=fs.shift)
    else:
        mod, loglik = gplcox, gplcox.gpl_loglik
        state = gplcox.init_state(prior[0], risk, X, shift=fs.shift)

    def sweep():
        mod.update_z(state, risk, rng)
        mod.update_omega(state, rng, base_cfg.pg_exact_max)
        mod.update_beta(state, prior, X, rng)
        update_frailty(fs, state, X, rng, recentre=(model == "pl"))
        update_frailty_variance(fs, config, rng)

    def record():
        return (state.beta.copy(), fs.u.copy(), fs.sigma2_u,
                loglik(state.beta, risk, X, offset=fs.shift))

    kept, iters, elapsed, failures = run_sweeps(base_cfg, sweep, record)
    diag = {"failed_updates": failures, "clusters": fs.G}
    if model == "pl":
        diag.update(psi_clamped=state.clamped, delta=base_cfg.delta)
    else:
        diag.update(theta_clamped=state.clamped)
    return PosteriorDraws(
        model=f"{model}-frailty",
        names=ds.names,
        beta=np.array([k[0] for k in kept]),
        loglik=np.array([k[3] for k in kept]),
        iterations=iters,
        elapsed=elapsed,
        has_intercept=True,
        sigma2_u=np.array([k[2] for k in kept]),
        u=np.array([k[1] for k in kept]),
        cluster_labels=fs.labels,
        diagnostics=diag,
    )


def conditional_loglik(draws: PosteriorDraws, ds: SurvivalDataset, risk: RiskStructure | None = None,
                       beta=None, u=None) -> float:
    """Log-likelihood conditional on frailties, at the posterior means by default."""
    risk = risk or build_risk_structure(ds)
    beta = draws.beta.mean(0) if beta is None else np.asarray(beta, float)
    u = draws.u.mean(0) if u is None else np.asarray(u, float)
    _, index = np.unique(ds.cluster, return_inverse=True)
    f = plcox.pl_loglik if draws.model.startswith("pl") else gplcox.gpl_loglik
    return f(beta, risk, ds.X, offset=u[index])
