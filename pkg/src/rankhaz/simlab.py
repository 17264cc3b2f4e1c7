"""Simulation lab: data-generating mechanisms and replication metrics.

Three families are available, each with four standard-normal covariates by
default:

* ``weibull-ph``: ``T ~ Weibull(a, b exp(-x'beta / a))``, ``C ~ U(0.5, 30)``,
  optional rounding of the observed time to a grid of width ``Delta``;
* ``discrete-logistic``: per-period hazard ``expit(alpha_t + x'beta)`` on
  ``t = 1..T_max``, ``C ~ U{1..T_max}``, optional observation grid ``u``;
* ``lognormal-nph``: ``log T ~ N(log mu - x'beta, sigma^2)``,
  ``C ~ U(0, 300)``, optional observation grid ``u``.

The last one violates proportional hazards; its target is the Efron estimate
on one very large uncoarsened sample (a pseudo-truth).
"""

from __future__ import annotations

import configparser
import csv
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.special import expit, log_expit

from .baseline import newton_mle
from .gibbs import DivergenceError
from .gplcox import GPLCoxConfig, run_gpl_gibbs
from .plcox import PLCoxConfig, run_pl_gibbs
from .randkit import RngStream, as_generator
from .survdata import (DataError, SurvivalDataset, build_risk_structure, coarsen_grid,
                       coarsen_round, with_intercept)

FAMILIES = ("weibull-ph", "discrete-logistic", "lognormal-nph")
METHODS = ("breslow", "efron", "pl", "gpl")
HAZARDS = ("constant", "decreasing", "increasing")
DEFAULT_BETA = (0.10, 0.05, -0.15, 0.30)
PSEUDO_STREAM = 2 ** 31 - 1


@dataclass(frozen=True)
class ScenarioSpec:
    """One data-generating scenario.

    ``coarsen`` is ``None``, ``("round", Delta)`` or ``("grid", u)``.
    ``censor`` holds uniform bounds ``(low, high)`` for the continuous
    families; the discrete family always censors on ``U{1..T_max}``.
    ``cluster_size > 0`` groups consecutive subjects into clusters sharing a
    ``N(0, frailty_var)`` log-hazard effect.
    """

    family: str = "weibull-ph"
    n: int = 300
    beta_true: tuple[float, ...] = DEFAULT_BETA
    a: float = 1.0
    b: float = 10.0
    alpha0: float = -5.0
    hazard: str = "constant"
    t_max: int = 300
    mu: float = 60.0
    sigma: float = 0.6
    censor: tuple[float, float] | None = None
    coarsen: tuple[str, float] | None = None
    cluster_size: int = 0
    frailty_var: float = 0.0
    name: str = ""

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if self.family == "weibull-ph" and not (self.a > 0 and self.b > 0):
            raise ValueError("Weibull shape a and scale b must be positive")
        if self.family == "discrete-logistic":
            if self.t_max < 1:
                raise ValueError("T_max must be >= 1")
            if self.hazard not in HAZARDS:
                raise ValueError(f"hazard must be one of {HAZARDS}")
        if self.family == "lognormal-nph" and not (self.mu > 0 and self.sigma > 0):
            raise ValueError("log-normal mu and sigma must be positive")
        if self.censor is not None and not 0 <= self.censor[0] < self.censor[1]:
            raise ValueError("censoring bounds must satisfy 0 <= low < high")
        if self.coarsen is not None:
            kind, width = self.coarsen
            if kind not in ("round", "grid") or not width > 0:
                raise ValueError(f"bad coarsening {self.coarsen!r}")
            if kind == "round" and self.family != "weibull-ph":
                raise ValueError("round-Delta coarsening applies to the Weibull family")
        if self.cluster_size < 0 or self.frailty_var < 0:
            raise ValueError("cluster_size and frailty_var must be nonnegative")
        object.__setattr__(self, "beta_true", tuple(float(v) for v in self.beta_true))

    @property
    def p(self) -> int:
        return len(self.beta_true)

    @property
    def proportional(self) -> bool:
        return self.family != "lognormal-nph"

    def censor_bounds(self) -> tuple[float, float]:
        if self.censor is not None:
            return self.censor
        return (0.5, 30.0) if self.family == "weibull-ph" else (0.0, 300.0)


def _design(spec: ScenarioSpec, rng):
    X = rng.standard_normal((spec.n, spec.p))
    lp = X @ np.asarray(spec.beta_true)
    cluster = None
    if spec.cluster_size > 0:
        cluster = np.arange(spec.n) // spec.cluster_size
        G = int(cluster.max()) + 1
        u = rng.normal(0.0, np.sqrt(spec.frailty_var), G)
        lp = lp + u[cluster]
    return X, lp, cluster


def _check_family(spec, family):
    if spec.family != family:
        raise ValueError(f"scenario family is {spec.family!r}, expected {family!r}")


def gen_weibull_ph(spec: ScenarioSpec, rng) -> SurvivalDataset:
    """Weibull proportional-hazards data with uniform censoring."""
    _check_family(spec, "weibull-ph")
    rng = as_generator(rng)
    X, lp, cluster = _design(spec, rng)
    T = spec.b * np.exp(-lp / spec.a) * rng.weibull(spec.a, spec.n)
    C = rng.uniform(*spec.censor_bounds(), spec.n)
    obs, flag = np.minimum(T, C), T <= C
    if spec.coarsen is not None:
        kind, width = spec.coarsen
        if kind == "round":
            obs = coarsen_round(obs, width)
        else:
            obs, flag = coarsen_grid(T, C, int(width))
    return SurvivalDataset(obs, flag, X, cluster=cluster)


def baseline_logit(spec: ScenarioSpec) -> np.ndarray:
    """``alpha_t`` for ``t = 1..T_max``."""
    t = np.arange(1, spec.t_max + 1)
    ramp = (t - 1) / max(spec.t_max - 1, 1)
    if spec.hazard == "decreasing":
        return spec.alpha0 + 1.2 * (1 - ramp)
    if spec.hazard == "increasing":
        return spec.alpha0 + 1.2 * ramp
    return np.full(spec.t_max, spec.alpha0)


def gen_discrete_logistic(spec: ScenarioSpec, rng, chunk: int = 20000) -> SurvivalDataset:
    """Discrete logistic-hazard data on ``1..T_max`` with grid observation.

    Each subject faces Bernoulli trials with success probability
    ``expit(alpha_t + x'beta)``; the first success is the event time and
    subjects without a success by ``T_max`` never fail. Sampling inverts the
    discrete survival function with one uniform per subject, which yields
    the same distribution as running the trials.
    """
    _check_family(spec, "discrete-logistic")
    rng = as_generator(rng)
    X, lp, cluster = _design(spec, rng)
    alpha = baseline_logit(spec)
    logU = np.log(rng.uniform(size=spec.n))
    T = np.full(spec.n, np.inf)
    for lo in range(0, spec.n, chunk):
        sl = slice(lo, lo + chunk)
        # log S(t) = sum_{s <= t} log(1 - h_s)
        logS = np.cumsum(log_expit(-(alpha[None, :] + lp[sl, None])), axis=1)
        hit = logS < logU[sl, None]
        first = hit.argmax(axis=1)
        T[sl] = np.where(hit.any(axis=1), first + 1.0, np.inf)
    C = rng.integers(1, spec.t_max + 1, spec.n).astype(float)
    u = 1 if spec.coarsen is None else int(spec.coarsen[1])
    obs, flag = coarsen_grid(T, C, u)
    return SurvivalDataset(obs, flag, X, cluster=cluster)


def gen_lognormal_nph(spec: ScenarioSpec, rng, coarsen: bool = True) -> SurvivalDataset:
    """Log-normal (non-proportional hazards) data with uniform censoring."""
    _check_family(spec, "lognormal-nph")
    rng = as_generator(rng)
    X, lp, cluster = _design(spec, rng)
    T = np.exp(rng.normal(np.log(spec.mu) - lp, spec.sigma))
    C = rng.uniform(*spec.censor_bounds(), spec.n)
    if coarsen and spec.coarsen is not None:
        obs, flag = coarsen_grid(T, C, int(spec.coarsen[1]))
    else:
        obs, flag = np.minimum(T, C), T <= C
    return SurvivalDataset(obs, flag, X, cluster=cluster)


GENERATORS = {
    "weibull-ph": gen_weibull_ph,
    "discrete-logistic": gen_discrete_logistic,
    "lognormal-nph": gen_lognormal_nph,
}


def generate(spec: ScenarioSpec, rng) -> SurvivalDataset:
    return GENERATORS[spec.family](spec, rng)


def pseudo_truth(spec: ScenarioSpec, n: int = 500_000, seed: int = 0) -> np.ndarray:
    """Efron estimate on one large uncoarsened sample from ``spec``."""
    big = replace(spec, n=n, coarsen=None)
    ds = generate(big, RngStream(seed, PSEUDO_STREAM).generator())
    fit = newton_mle(build_risk_structure(ds), ds.X, ties="efron")
    if not fit.converged:
        raise RuntimeError(f"pseudo-truth fit failed: {fit.message}")
    return fit.beta_hat


# ---------------------------------------------------------------------------
# replications
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RunSettings:
    methods: tuple[str, ...] = METHODS
    n_iter: int = 3000
    n_burnin: int = 1000
    prior_sd: float = 10.0
    delta: float = 10.0

    def __post_init__(self):
        bad = set(self.methods) - set(METHODS)
        if bad or not self.methods:
            raise ValueError(f"unknown methods {sorted(bad)}; choose from {METHODS}")


def fit_method(method: str, ds: SurvivalDataset, settings: RunSettings, seed: int,
               rep: int, slot: int):
    """Point estimate and 95% interval for the non-intercept coefficients."""
    t0 = time.perf_counter()
    if method in ("breslow", "efron"):
        fit = newton_mle(build_risk_structure(ds), ds.X, ties=method)
        if not fit.converged:
            raise DivergenceError(fit.message)
        ci = fit.wald_ci()
        est, lo, hi = fit.beta_hat, ci[:, 0], ci[:, 1]
    else:
        dsi = with_intercept(ds)
        common = dict(n_iter=settings.n_iter, n_burnin=settings.n_burnin,
                      prior_sd=settings.prior_sd, seed=seed, stream_id=rep,
                      stream_path=(slot,))
        if method == "pl":
            draws = run_pl_gibbs(dsi, None, PLCoxConfig(delta=settings.delta, **common))
        else:
            draws = run_gpl_gibbs(dsi, None, GPLCoxConfig(**common))
        b = draws.beta[:, 1:]
        est = b.mean(0)
        lo, hi = np.quantile(b, [0.025, 0.975], axis=0)
    return est, lo, hi, time.perf_counter() - t0


def run_one(spec: ScenarioSpec, settings: RunSettings, seed: int, rep: int) -> dict:
    """Generate replication ``rep`` and fit every method; failures are recorded."""
    ds = generate(spec, RngStream(seed, rep, (0,)).generator())
    out = {}
    for slot, method in enumerate(settings.methods, start=1):
        try:
            est, lo, hi, secs = fit_method(method, ds, settings, seed, rep, slot)
            out[method] = (est, lo, hi, secs, None)
        except (DivergenceError, DataError, FloatingPointError, np.linalg.LinAlgError) as exc:
            out[method] = (None, None, None, 0.0, f"{type(exc).__name__}: {exc}")
    return out


def _run_chunk(args):
    spec, settings, seed, reps = args
    return [(r, run_one(spec, settings, seed, r)) for r in reps]


@dataclass
class MetricRow:
    method: str
    parameter: str
    Bias: float
    SD: float | None
    RMSE: float
    CP: float
    AW: float


@dataclass
class ReplicationReport:
    """Bias, SD, RMSE, CP (percent) and AW per method and coefficient.

    SD uses the ``R - 1`` denominator and is ``None`` when ``R = 1``;
    RMSE is ``sqrt(mean((est - truth)^2))``, so
    ``RMSE^2 = Bias^2 + SD^2 (R - 1) / R``.
    """

    scenario: str
    n_replications: int
    truth: list[float]
    rows: list[MetricRow]
    failures: dict[str, int]
    timing: dict[str, float]
    failure_messages: dict[str, list[str]] = field(default_factory=dict)
    estimates: dict[str, list] = field(default_factory=dict, repr=False)

    def success_rate(self, method: str) -> float:
        return 1.0 - self.failures.get(method, 0) / self.n_replications

    def row(self, method: str, parameter: str) -> MetricRow:
        for r in self.rows:
            if r.method == method and r.parameter == parameter:
                return r
        raise KeyError((method, parameter))

    def to_dict(self, timing: bool = True) -> dict:
        d = {
            "scenario": self.scenario,
            "n_replications": self.n_replications,
            "truth": self.truth,
            "failures": self.failures,
            "failure_messages": self.failure_messages,
            "metrics": [asdict(r) for r in self.rows],
        }
        if self.n_replications == 1:
            d["note"] = "single replication: SD is undefined and reported as null"
        if timing:
            d["timing_seconds"] = self.timing
        return d

    def to_json(self, timing: bool = True) -> str:
        return json.dumps(self.to_dict(timing), indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "parameter", "Bias", "SD", "RMSE", "CP", "AW"])
        for r in self.rows:
            w.writerow([r.method, r.parameter, _fmt(r.Bias), "" if r.SD is None else _fmt(r.SD),
                        _fmt(r.RMSE), _fmt(r.CP), _fmt(r.AW)])
        return buf.getvalue()

    def table(self) -> str:
        lines = [f"{'method':<8} {'param':<6} {'Bias':>8} {'SD':>7} {'RMSE':>7} {'CP':>7} {'AW':>7}"]
        for r in self.rows:
            sd = "    n/a" if r.SD is None else f"{r.SD:7.3f}"
            lines.append(f"{r.method:<8} {r.parameter:<6} {r.Bias:8.3f} {sd} {r.RMSE:7.3f} "
                         f"{r.CP:7.2f} {r.AW:7.3f}")
        return "\n".join(lines)


def _fmt(x: float) -> str:
    return repr(float(x))


def replication_metrics(est, lo, hi, truth):
    """``(Bias, SD, RMSE, CP, AW)`` arrays over coefficients for ``(R, p)`` inputs."""
    est, lo, hi = (np.asarray(a, float) for a in (est, lo, hi))
    truth = np.asarray(truth, float)
    err = est - truth
    R = est.shape[0]
    bias = err.mean(0)
    sd = est.std(0, ddof=1) if R > 1 else None
    rmse = np.sqrt((err ** 2).mean(0))
    cp = 100.0 * ((lo <= truth) & (truth <= hi)).mean(0)
    aw = (hi - lo).mean(0)
    return bias, sd, rmse, cp, aw


def run_replications(spec: ScenarioSpec, settings: RunSettings | None = None, reps: int = 200,
                     seed: int = 0, truth=None, parallel: int = 1,
                     pseudo_n: int = 500_000) -> ReplicationReport:
    """Replicate ``spec`` ``reps`` times and aggregate per-method metrics.

    ``truth`` defaults to ``beta_true`` for proportional-hazards families and
    to :func:`pseudo_truth` (with ``pseudo_n`` subjects) otherwise. Results
    are gathered in replication order, so the report does not depend on
    ``parallel``.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    settings = settings or RunSettings()
    if truth is None:
        truth = np.asarray(spec.beta_true) if spec.proportional \
            else pseudo_truth(spec, pseudo_n, seed)
    truth = np.asarray(truth, float)
    if truth.shape != (spec.p,):
        raise ValueError(f"truth must have length {spec.p}")

    if parallel <= 1:
        results = _run_chunk((spec, settings, seed, range(reps)))
    else:
        chunks = [list(range(k, reps, parallel)) for k in range(parallel)]
        chunks = [c for c in chunks if c]
        with ProcessPoolExecutor(max_workers=parallel) as ex:
            parts = ex.map(_run_chunk, [(spec, settings, seed, c) for c in chunks])
            results = [item for part in parts for item in part]
    results.sort(key=lambda t: t[0])

    names = [f"beta{k + 1}" for k in range(spec.p)]
    rows, failures, timing, messages, estimates = [], {}, {}, {}, {}
    for m in settings.methods:
        ok = [res[m] for _, res in results if res[m][4] is None]
        failures[m] = reps - len(ok)
        msgs = [f"rep {r}: {res[m][4]}" for r, res in results if res[m][4] is not None]
        if msgs:
            messages[m] = msgs
        timing[m] = float(np.mean([o[3] for o in ok])) if ok else 0.0
        if not ok:
            continue
        est = np.array([o[0] for o in ok])
        lo = np.array([o[1] for o in ok])
        hi = np.array([o[2] for o in ok])
        estimates[m] = est.tolist()
        bias, sd, rmse, cp, aw = replication_metrics(est, lo, hi, truth)
        for k, nm in enumerate(names):
            rows.append(MetricRow(m, nm, float(bias[k]), None if sd is None else float(sd[k]),
                                  float(rmse[k]), float(cp[k]), float(aw[k])))
    return ReplicationReport(spec.name or spec.family, reps, truth.tolist(), rows,
                             failures, timing, messages, estimates)


# ---------------------------------------------------------------------------
# scenario files
# ---------------------------------------------------------------------------

SCENARIO_KEYS = {
    "name": str, "family": str, "n": int, "beta": str, "a": float, "b": float,
    "alpha0": float, "hazard": str, "t_max": int, "mu": float, "sigma": float,
    "censor": str, "coarsen": str, "cluster_size": int, "frailty_var": float,
}
RUN_KEYS = {
    "methods": str, "reps": int, "seed": int, "iters": int, "burnin": int,
    "prior_sd": float, "delta": float, "pseudo_n": int, "truth": str,
}


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _parse_coarsen(text: str):
    text = text.strip().lower()
    if text in ("", "none", "0"):
        return None
    kind, _, width = text.partition(":")
    if kind not in ("round", "grid") or not width:
        raise ValueError(f"coarsen must be 'none', 'round:<Delta>' or 'grid:<u>', got {text!r}")
    return (kind, float(width))


def load_scenario(path) -> tuple[ScenarioSpec, RunSettings, dict]:
    """Read a scenario file with ``[scenario]`` and optional ``[run]`` sections.

    Returns the spec, the fitting settings and a dict with ``reps``, ``seed``,
    ``pseudo_n`` and ``truth`` (``None`` or a coefficient tuple).
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if not cp.read(path, encoding="utf-8"):
        raise FileNotFoundError(path)
    if "scenario" not in cp:
        raise ValueError(f"{path}: missing [scenario] section")
    sc, run = cp["scenario"], cp["run"] if "run" in cp else {}
    for sect, keys, label in ((sc, SCENARIO_KEYS, "scenario"), (run, RUN_KEYS, "run")):
        unknown = set(sect) - set(keys)
        if unknown:
            raise ValueError(f"{path}: unknown keys in [{label}]: {sorted(unknown)}")

    kw = {}
    for key, typ in SCENARIO_KEYS.items():
        if key not in sc:
            continue
        raw = sc[key]
        if key == "beta":
            kw["beta_true"] = _floats(raw)
        elif key == "censor":
            lo, hi = _floats(raw)
            kw["censor"] = (lo, hi)
        elif key == "coarsen":
            kw["coarsen"] = _parse_coarsen(raw)
        else:
            kw[key] = typ(raw)
    spec = ScenarioSpec(**kw)

    def get(key, default):
        return RUN_KEYS[key](run[key]) if key in run else default

    methods = tuple(m.strip().lower() for m in get("methods", ",".join(METHODS)).split(",") if m.strip())
    settings = RunSettings(methods=methods, n_iter=get("iters", 3000), n_burnin=get("burnin", 1000),
                           prior_sd=get("prior_sd", 10.0), delta=get("delta", 10.0))
    truth = get("truth", "")
    extra = {"reps": get("reps", 200), "seed": get("seed", 0), "pseudo_n": get("pseudo_n", 500_000),
             "truth": _floats(truth) if truth.strip() not in ("", "auto") else None}
    return spec, settings, extra
