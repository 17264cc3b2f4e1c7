"""Partial-likelihood maximisation with Breslow or Efron tie handling.

All risk-set moments ``S0 = sum exp(eta)``, ``S1 = sum exp(eta) x`` and
``S2 = sum exp(eta) x x'`` come from suffix sums over the time-sorted
subjects, after subtracting ``max(eta)`` so nothing overflows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .survdata import RiskStructure


class SingularHessianError(np.linalg.LinAlgError):
    """Observed information is singular; ``direction`` spans its null space."""

    def __init__(self, message, direction):
        super().__init__(message)
        self.direction = direction


def _moments(beta, risk: RiskStructure, X):
    X = np.asarray(X, float)
    eta = X @ np.asarray(beta, float)
    if not np.all(np.isfinite(eta)):
        raise FloatingPointError("non-finite linear predictor")
    m = eta.max()
    w = np.exp(eta - m)
    wx = w[:, None] * X
    wxx = wx[:, :, None] * X[:, None, :]
    S0 = risk.risk_sums(w)
    S1 = risk.risk_sums(wx)
    S2 = risk.risk_sums(wxx)
    return eta, m, w, wx, wxx, S0, S1, S2


def breslow_loglik_grad_hess(beta, risk: RiskStructure, X):
    """Breslow log partial likelihood with analytic gradient and Hessian."""
    eta, m, _, _, _, S0, S1, S2 = _moments(beta, risk, X)
    d = risk.tie_counts.astype(float)
    ev = risk.event_index
    X = np.asarray(X, float)
    ll = eta[ev].sum() - d @ (np.log(S0) + m)
    a = S1 / S0[:, None]
    grad = X[ev].sum(0) - d @ a
    hess = -np.einsum("r,rjk->jk", d, S2 / S0[:, None, None] - a[:, :, None] * a[:, None, :])
    return float(ll), grad, 0.5 * (hess + hess.T)


def efron_loglik_grad_hess(beta, risk: RiskStructure, X):
    """Efron log partial likelihood with analytic gradient and Hessian.

    The ``l``-th event (``l = 0..d-1``) of a tie block sees the denominator
    ``S0 - (l/d) sum_{E_r} exp(eta)``, and likewise for ``S1`` and ``S2``.
    Without ties this is the Breslow likelihood, which is then returned as is.
    """
    if risk.tie_counts.max() == 1:
        return breslow_loglik_grad_hess(beta, risk, X)
    eta, m, w, wx, wxx, S0, S1, S2 = _moments(beta, risk, X)
    X = np.asarray(X, float)
    ev = risk.event_index
    blk = risk.block[ev]
    frac = risk.event_rank / risk.tie_counts[blk]
    E0 = risk.event_sums(w)[blk]
    E1 = risk.event_sums(wx)[blk]
    E2 = risk.event_sums(wxx)[blk]
    D0 = S0[blk] - frac * E0
    D1 = S1[blk] - frac[:, None] * E1
    D2 = S2[blk] - frac[:, None, None] * E2
    ll = eta[ev].sum() - (np.log(D0) + m).sum()
    a = D1 / D0[:, None]
    grad = X[ev].sum(0) - a.sum(0)
    hess = -(D2 / D0[:, None, None] - a[:, :, None] * a[:, None, :]).sum(0)
    return float(ll), grad, 0.5 * (hess + hess.T)


_TIES = {"breslow": breslow_loglik_grad_hess, "efron": efron_loglik_grad_hess}


@dataclass
class MleResult:
    beta_hat: np.ndarray
    covariance: np.ndarray
    loglik: float
    converged: bool
    n_iter: int
    ties: str = "breslow"
    names: tuple[str, ...] = ()
    message: str = ""
    gradient: np.ndarray = field(default=None, repr=False)

    @property
    def std_err(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance))

    def wald_ci(self, level: float = 0.95) -> np.ndarray:
        """``(p, 2)`` array of Wald interval endpoints."""
        q = stats.norm.ppf(0.5 + level / 2)
        se = self.std_err
        return np.column_stack([self.beta_hat - q * se, self.beta_hat + q * se])


def _null_direction(H):
    vals, vecs = np.linalg.eigh(-H)
    scale = max(np.abs(vals).max(), 1e-300)
    if vals[0] <= 1e-10 * scale:
        v = vecs[:, 0]
        k = np.argmax(np.abs(v))
        return v * np.sign(v[k])
    return None


def newton_mle(risk: RiskStructure, X, ties: str = "breslow", tol: float = 1e-8,
               max_iter: int = 50, bound: float = 50.0, names=(), beta0=None) -> MleResult:
    """Maximise the partial likelihood by Newton's method with step-halving.

    Converged means ``max|grad| < tol`` *and* a vanishing Newton step. A
    small gradient with a step that stays large, or ``|beta|`` passing
    ``bound``, is the monotone-likelihood signature (an estimate drifting to
    infinity) and returns ``converged=False`` with a message. A Hessian that
    is singular at the starting point raises :class:`SingularHessianError`.
    """
    if ties not in _TIES:
        raise ValueError(f"ties must be one of {sorted(_TIES)}, got {ties!r}")
    f = _TIES[ties]
    X = np.asarray(X, float)
    if X.ndim != 2 or X.shape[1] < 1:
        raise ValueError("need at least one covariate column")
    p = X.shape[1]
    beta = np.zeros(p) if beta0 is None else np.array(beta0, dtype=float)
    ll, g, H = f(beta, risk, X)
    names = tuple(names) or tuple(f"x{k + 1}" for k in range(p))

    def result(converged, it, message=""):
        try:
            cov = np.linalg.inv(-H)
        except np.linalg.LinAlgError:
            cov = np.full((p, p), np.nan)
        return MleResult(beta, cov, ll, converged, it, ties, names, message, g)

    null = _null_direction(H)
    if null is not None:
        desc = ", ".join(f"{n}={v:+.3f}" for n, v in zip(names, null))
        raise SingularHessianError(
            f"singular information matrix; null direction ({desc})", null)

    for it in range(1, max_iter + 1):
        try:
            L = np.linalg.cholesky(-H)
            step = np.linalg.solve(L.T, np.linalg.solve(L, g))
        except np.linalg.LinAlgError:
            return result(False, it, "information matrix lost definiteness; "
                                     "likely monotone likelihood")
        small_grad = np.abs(g).max() < tol
        if small_grad:
            if np.abs(step).max() <= 1e-4 * (1 + np.abs(beta).max()):
                return result(True, it - 1)
            return result(False, it - 1, _monotone_msg(beta, step, names))
        t = 1.0
        for _ in range(21):
            cand = beta + t * step
            try:
                ll_c, g_c, H_c = f(cand, risk, X)
            except FloatingPointError:
                ll_c = -np.inf
            if ll_c >= ll - 1e-12 * abs(ll):
                break
            t *= 0.5
        else:
            return result(False, it, "step-halving failed to increase the log-likelihood")
        beta, ll, g, H = cand, ll_c, g_c, H_c
        if np.abs(beta).max() > bound:
            return result(False, it, _monotone_msg(beta, step, names))
    if np.abs(g).max() < tol:
        return result(True, max_iter)
    return result(False, max_iter, f"no convergence in {max_iter} iterations")


def _monotone_msg(beta, step, names):
    k = int(np.argmax(np.abs(step)))
    return (f"monotone likelihood: coefficient '{names[k]}' diverging "
            f"(current {beta[k]:+.3g}, Newton step {step[k]:+.3g}); no finite maximiser")
