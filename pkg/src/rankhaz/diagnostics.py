"""Posterior summaries, effective sample size and DIC."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .gibbs import PosteriorDraws
from .gplcox import gpl_loglik
from .plcox import pl_loglik
from .survdata import RiskStructure


def _autocorr(x: np.ndarray) -> np.ndarray:
    n = x.size
    x = x - x.mean()
    m = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, m)
    acov = np.fft.irfft(f * np.conj(f), m)[:n] / n
    return acov / acov[0]


def ess(chain) -> float:
    """Effective sample size by Geyer's initial monotone positive sequence.

    Autocorrelations are summed in adjacent pairs ``rho_{2k} + rho_{2k+1}``
    while the pair sums stay positive, each pair clipped to the running
    minimum. A constant chain returns ``N``; the result is capped at ``N``.
    """
    x = np.asarray(chain, dtype=float)
    n = x.size
    if n < 10:
        raise ValueError("ESS needs a chain of length >= 10")
    if not np.all(np.isfinite(x)):
        raise ValueError("chain contains non-finite values")
    if np.ptp(x) == 0 or x.var() <= 1e-300:
        return float(n)
    rho = _autocorr(x)
    npairs = n // 2
    pairs = rho[: 2 * npairs].reshape(npairs, 2).sum(1)
    neg = np.flatnonzero(pairs <= 0)
    pairs = pairs[: neg[0] if neg.size else npairs]
    pairs = np.minimum.accumulate(pairs)
    tau = -1.0 + 2.0 * pairs.sum()
    return float(min(n, n / max(tau, 1e-12)))


@dataclass
class ParameterSummary:
    name: str
    mean: float
    sd: float
    lower: float
    upper: float
    ess: float
    hr: float | None = None
    hr_lower: float | None = None
    hr_upper: float | None = None


@dataclass
class PosteriorSummary:
    model: str
    parameters: list[ParameterSummary]
    n_draws: int
    seconds: float
    median_ess_per_sec: float
    dic: float | None = None
    p_d: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)

    def table(self, digits: int = 3, timing: bool = True) -> str:
        """Aligned text table: posterior mean (SD) and ``HR [low, high]``.

        ``timing=False`` drops the ESS/sec footer, which varies run to run.
        """
        rows = [("parameter", "mean", "sd", "95% interval", "HR [low, high]", "ESS")]
        for s in self.parameters:
            hr = "" if s.hr is None else \
                f"{s.hr:.{digits}f} [{s.hr_lower:.{digits}f}, {s.hr_upper:.{digits}f}]"
            rows.append((s.name, f"{s.mean:.{digits}f}", f"{s.sd:.{digits}f}",
                         f"[{s.lower:.{digits}f}, {s.upper:.{digits}f}]", hr, f"{s.ess:.0f}"))
        widths = [max(len(r[k]) for r in rows) for k in range(len(rows[0]))]
        lines = ["  ".join(c.ljust(w) if k == 0 else c.rjust(w)
                           for k, (c, w) in enumerate(zip(r, widths))).rstrip() for r in rows]
        foot = [f"draws: {self.n_draws}"
                + (f"   median ESS/sec: {self.median_ess_per_sec:.1f}" if timing else "")]
        if self.dic is not None:
            foot.append(f"DIC: {self.dic:.{digits}f}   pD: {self.p_d:.{digits}f}")
        return "\n".join(lines + foot)


def summarize(draws: PosteriorDraws, dic_value: tuple[float, float] | None = None) -> PosteriorSummary:
    """Means, SDs, equal-tailed 95% intervals, ESS and hazard ratios.

    Hazard ratios are ``exp`` of the coefficient mean and interval endpoints
    and are omitted for the intercept and the frailty variance.
    """
    cols = draws.columns()
    if draws.n_draws < 2:
        raise ValueError("summaries need at least 2 retained draws")
    out = []
    for k, (name, x) in enumerate(cols.items()):
        lo, hi = np.quantile(x, [0.025, 0.975])
        mean = float(x.mean())
        lo, hi = min(lo, mean), max(hi, mean)   # guard rounding on constant chains
        e = ess(x) if x.size >= 10 else float(x.size)
        s = ParameterSummary(name, mean, float(x.std(ddof=1)), float(lo), float(hi), e)
        is_coef = k < draws.beta.shape[1]
        if is_coef and not (draws.has_intercept and k == 0):
            s.hr, s.hr_lower, s.hr_upper = float(np.exp(mean)), float(np.exp(lo)), float(np.exp(hi))
        out.append(s)
    reported = [s.ess for k, s in enumerate(out) if not (draws.has_intercept and k == 0)] \
        or [s.ess for s in out]
    secs = float(draws.elapsed)
    med = float(np.median(reported)) / secs if secs > 0 else float("inf")
    dic_v, pd = dic_value if dic_value is not None else (None, None)
    return PosteriorSummary(draws.model, out, draws.n_draws, secs, med, dic_v, pd)


def dic(loglik_draws, loglik_at_mean: float) -> tuple[float, float]:
    """``(DIC, p_D)`` with ``p_D = Dbar - D(theta_bar)`` and ``DIC = D(theta_bar) + 2 p_D``."""
    ll = np.asarray(loglik_draws, dtype=float)
    if ll.size == 0 or not np.all(np.isfinite(ll)) or not np.isfinite(loglik_at_mean):
        raise ValueError("DIC inputs must be finite and non-empty")
    dbar = -2.0 * ll.mean()
    dhat = -2.0 * float(loglik_at_mean)
    pd = dbar - dhat
    return float(dhat + 2 * pd), float(pd)


def model_dic(draws: PosteriorDraws, risk: RiskStructure, X, offset=None) -> tuple[float, float]:
    """DIC of a chain using its own likelihood at the posterior-mean ``beta``.

    ``offset`` carries plug-in frailties (``u`` means mapped to subjects) for
    frailty chains, so the focus is conditional on the cluster effects.
    """
    f = pl_loglik if draws.model.startswith("pl") else gpl_loglik
    return dic(draws.loglik, f(draws.beta.mean(0), risk, X, offset=offset))
