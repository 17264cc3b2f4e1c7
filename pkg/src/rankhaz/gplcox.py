"""GPL-Cox: the generalised (geometric) Plackett-Luce likelihood and its sampler.

Subject ``i`` carries success probability ``theta_i = expit(eta_i)``; at each
event time the tie block is the set of subjects whose geometric latent time
equals the risk-set minimum. Augmenting with ``Z_r`` (the minimum itself)
leaves a binomial-logit kernel in ``beta``, handled by Polya-Gamma
augmentation::

    Z_r   | beta     ~ Geom(1 - prod_{j in R_r} (1 - theta_j))
    omega | beta, Z  ~ PG(zeta_i, eta_i)         (0 when zeta_i = 0)
    beta  | omega, Z ~ N(B^{-1} g, B^{-1}),  g = X'kappa + V0^-1 b0
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .gibbs import GibbsConfig, PosteriorDraws, gaussian_beta_draw, run_sweeps
from .plcox import _linear_predictor
from .randkit import sample_geometric, sample_polya_gamma
from .survdata import DataError, RiskStructure, SurvivalDataset, build_risk_structure

THETA_FLOOR = 1e-12
# |eta| bound equivalent to clamping theta to [1e-12, 1 - 1e-12]
ETA_CLAMP = float(np.log((1 - THETA_FLOOR) / THETA_FLOOR))


def _log1mexp(s):
    """``log(1 - exp(s))`` for ``s <= 0``."""
    s = np.asarray(s, float)
    with np.errstate(divide="ignore"):
        return np.where(s > -np.log(2), np.log(-np.expm1(s)), np.log1p(-np.exp(s)))


def _clamp(eta):
    clipped = np.clip(eta, -ETA_CLAMP, ETA_CLAMP)
    return clipped, int(np.count_nonzero(clipped != eta))


def gpl_loglik(beta, risk: RiskStructure, X, offset=None) -> float:
    """Log GPL-Cox likelihood.

    Per event time: ``sum_{E_r} log theta + sum_{R_r \\ E_r} log(1 - theta)
    - log(1 - prod_{R_r} (1 - theta))``, with the product accumulated as a
    suffix sum of ``log(1 - theta)``.
    """
    eta, _ = _clamp(_linear_predictor(beta, X, offset))
    log_theta = -np.logaddexp(0.0, -eta)
    log_1m = -np.logaddexp(0.0, eta)
    S = risk.risk_sums(log_1m)
    ev = risk.event_index
    return float(log_theta[ev].sum() + S.sum() - log_1m[ev].sum() - _log1mexp(S).sum())


def complete_data_loglik(beta, counts, zeta, X) -> float:
    """``sum_i c_i log theta_i + (zeta_i - c_i) log(1 - theta_i)`` for fixed ``Z``."""
    eta = _linear_predictor(beta, X)
    return float(counts @ -np.logaddexp(0.0, -eta) + (zeta - counts) @ -np.logaddexp(0.0, eta))


@dataclass
class GPLCoxConfig(GibbsConfig):
    pass


@dataclass
class GPLCoxState:
    beta: np.ndarray
    eta: np.ndarray
    z: np.ndarray
    zeta: np.ndarray
    omega: np.ndarray
    shift: np.ndarray
    counts: np.ndarray
    clamped: int = 0

    @property
    def theta(self) -> np.ndarray:
        return expit(self.eta)

    @property
    def kappa(self) -> np.ndarray:
        return self.counts - self.zeta / 2.0

    @property
    def offset(self) -> np.ndarray:
        return np.zeros_like(self.eta)


def init_state(beta0, risk: RiskStructure, X, shift=None) -> GPLCoxState:
    n = risk.n
    shift = np.zeros(n) if shift is None else np.asarray(shift, float)
    beta0 = np.array(beta0, dtype=float)
    state = GPLCoxState(
        beta=beta0, eta=np.zeros(n), z=np.ones(risk.R, dtype=np.int64),
        zeta=np.zeros(n, dtype=np.int64), omega=np.zeros(n), shift=shift,
        counts=risk.counts.astype(np.int64),
    )
    set_eta(state, _linear_predictor(beta0, X, shift))
    return state


def set_eta(state: GPLCoxState, eta) -> None:
    state.eta, k = _clamp(eta)
    state.clamped += k


def success_log_complement(eta, risk: RiskStructure) -> np.ndarray:
    """``S_r = sum_{j in R_r} log(1 - theta_j)``, i.e. log of the failure probability."""
    return risk.risk_sums(-np.logaddexp(0.0, eta))


def update_z(state: GPLCoxState, risk: RiskStructure, rng) -> None:
    """``Z_r ~ Geom(1 - exp(S_r))`` via the log-complement route; refresh ``zeta``."""
    S = success_log_complement(state.eta, risk)
    with np.errstate(divide="ignore"):
        S = np.where(S < 0, S, -np.inf)     # theta == 1 somewhere: Z_r = 1
    z = sample_geometric(rng=rng, log_q=S)
    zeta = risk.at_risk_sums(z)
    if zeta.max(initial=0) >= 2 ** 62:
        raise FloatingPointError("latent geometric sum overflowed")
    state.z, state.zeta = z, zeta


def update_omega(state: GPLCoxState, rng, exact_max: int = 20) -> None:
    """``omega_i ~ PG(zeta_i, eta_i)``, degenerate at 0 when ``zeta_i = 0``."""
    omega = np.zeros(state.eta.shape)
    pos = state.zeta > 0
    if pos.any():
        omega[pos] = sample_polya_gamma(state.zeta[pos].astype(float), state.eta[pos], rng,
                                        exact_max=exact_max)
    state.omega = omega


def update_beta(state: GPLCoxState, prior, X, rng) -> None:
    _, V0inv, V0inv_b0 = prior
    w = state.omega
    work = state.kappa - w * state.shift
    beta = gaussian_beta_draw(X, w, work, V0inv, V0inv_b0, rng)
    set_eta(state, _linear_predictor(beta, X, state.shift))
    state.beta = beta


def run_gpl_gibbs(ds: SurvivalDataset, risk: RiskStructure | None = None,
                  config: GPLCoxConfig | None = None) -> PosteriorDraws:
    """Run one GPL-Cox chain. The dataset must carry an intercept column."""
    if not ds.has_intercept:
        raise DataError("GPL-Cox requires an intercept column; call with_intercept first")
    config = config or GPLCoxConfig()
    risk = risk or build_risk_structure(ds)
    X = ds.X
    prior = config.prior(ds.p)
    rng = config.rng()
    state = init_state(prior[0], risk, X)

    def sweep():
        update_z(state, risk, rng)
        update_omega(state, rng, config.pg_exact_max)
        update_beta(state, prior, X, rng)

    def record():
        return state.beta.copy(), gpl_loglik(state.beta, risk, X)

    kept, iters, elapsed, failures = run_sweeps(config, sweep, record)
    return PosteriorDraws(
        model="gpl",
        names=ds.names,
        beta=np.array([k[0] for k in kept]),
        loglik=np.array([k[1] for k in kept]),
        iterations=iters,
        elapsed=elapsed,
        has_intercept=True,
        diagnostics={"theta_clamped": state.clamped, "failed_updates": failures},
    )
