"""Bayesian Cox regression through rank-ordered likelihoods.

PL-Cox treats each tie block as a Plackett-Luce selection from the risk set
(its likelihood is Breslow's partial likelihood); GPL-Cox uses the
geometric (generalised) Plackett-Luce model, which assigns probability to
ties directly. Both are fitted by Gibbs samplers with Polya-Gamma
augmentation.
"""

__version__ = "0.1.0"

from .baseline import MleResult, efron_loglik_grad_hess, breslow_loglik_grad_hess, newton_mle
from .diagnostics import dic, ess, model_dic, summarize
from .frailty import FrailtyConfig, run_frailty_gibbs
from .gibbs import DivergenceError, PosteriorDraws
from .gplcox import GPLCoxConfig, gpl_loglik, run_gpl_gibbs
from .plcox import PLCoxConfig, pl_loglik, run_pl_gibbs
from .randkit import RngStream
from .survdata import (DataError, RiskStructure, SurvivalDataset, build_risk_structure,
                       coarsen_grid, coarsen_round, load_csv, with_intercept)

__all__ = [
    "DataError", "DivergenceError", "FrailtyConfig", "GPLCoxConfig", "MleResult",
    "PLCoxConfig", "PosteriorDraws", "RiskStructure", "RngStream", "SurvivalDataset",
    "breslow_loglik_grad_hess", "build_risk_structure", "coarsen_grid", "coarsen_round",
    "dic", "efron_loglik_grad_hess", "ess", "gpl_loglik", "load_csv", "model_dic",
    "newton_mle", "pl_loglik", "run_frailty_gibbs", "run_gpl_gibbs", "run_pl_gibbs",
    "summarize", "with_intercept",
]
