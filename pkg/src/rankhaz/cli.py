"""Command-line interface: ``rankhaz fit | mle | simulate``.

Exit codes
----------
0  success
2  invalid input (bad file, missing column, bad option, singular design)
3  non-convergence (diverging chain, monotone partial likelihood)
4  replication-failure budget exceeded (fewer than 90% of replications
   succeeded for some method)
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .baseline import SingularHessianError, newton_mle
from .diagnostics import model_dic, summarize
from .frailty import FrailtyConfig, run_frailty_gibbs
from .gibbs import DivergenceError, PosteriorDraws
from .gplcox import GPLCoxConfig, run_gpl_gibbs
from .plcox import PLCoxConfig, run_pl_gibbs
from .simlab import RunSettings, load_scenario, run_replications
from .survdata import DataError, build_risk_structure, load_csv, with_intercept

EXIT_OK, EXIT_INPUT, EXIT_CONVERGENCE, EXIT_BUDGET = 0, 2, 3, 4
SEED_ENV = "RANKHAZ_SEED"


class CliError(Exception):
    def __init__(self, message, code=EXIT_INPUT):
        super().__init__(message)
        self.code = code


def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _seed(args) -> int:
    env = os.environ.get(SEED_ENV)
    if env is None or env.strip() == "":
        return args.seed
    try:
        return int(env)
    except ValueError:
        raise CliError(f"{SEED_ENV}={env!r} is not an integer") from None


def _covariates(text):
    if text is None:
        return None
    cols = [c.strip() for c in text.split(",") if c.strip()]
    if not cols:
        raise CliError("--covariates is empty")
    return cols


def _write(path: Path, text: str):
    path.write_text(text, encoding="utf-8")


def _run_id(command, config, digest) -> str:
    blob = json.dumps({"command": command, "config": config, "input": digest}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _manifest(out: Path, command, config, seed, digest, started, outputs):
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "version": __version__,
        "input_sha256": digest,
        "run_id": _run_id(command, config, digest),
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "outputs": {name: _digest(out / name) for name in outputs},
    }
    _write(out / "manifest.json", json.dumps(manifest, indent=2) + "\n")
    return manifest


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------

def _chain(job):
    model, ds, config, frailty = job
    if frailty is not None:
        return run_frailty_gibbs(ds, None, replace(frailty, base=config), model)
    if model == "pl":
        return run_pl_gibbs(ds, None, config)
    return run_gpl_gibbs(ds, None, config)


def _draws_csv(chains: list[PosteriorDraws]) -> str:
    multi = len(chains) > 1
    lines = [("chain," if multi else "") + "iteration,parameter,value"]
    for c, d in enumerate(chains):
        cols = d.columns()
        for row, it in enumerate(d.iterations):
            lead = f"{c}," if multi else ""
            for name, x in cols.items():
                lines.append(f"{lead}{int(it)},{name},{float(x[row])!r}")
    return "\n".join(lines) + "\n"


def _pooled(chains: list[PosteriorDraws]) -> PosteriorDraws:
    if len(chains) == 1:
        return chains[0]
    d0 = chains[0]
    cat = lambda attr: None if getattr(d0, attr) is None else \
        np.concatenate([getattr(d, attr) for d in chains])
    return replace(d0, beta=cat("beta"), loglik=cat("loglik"), iterations=cat("iterations"),
                   sigma2_u=cat("sigma2_u"), u=cat("u"),
                   elapsed=sum(d.elapsed for d in chains))


def cmd_fit(args) -> int:
    started = _now()
    seed = _seed(args)
    ds = load_csv(args.data, time=args.time, event=args.event,
                  covariates=_covariates(args.covariates), cluster=args.frailty_col)
    ds = with_intercept(ds)
    common = dict(n_iter=args.iters, n_burnin=args.burnin, thin=args.thin,
                  prior_sd=args.prior_sd, seed=seed)
    try:
        configs = [PLCoxConfig(delta=args.delta, stream_id=k, **common) if args.model == "pl"
                   else GPLCoxConfig(stream_id=k, **common) for k in range(args.chains)]
    except ValueError as exc:
        raise CliError(str(exc)) from None
    frailty = FrailtyConfig(base=configs[0]) if args.frailty_col else None
    jobs = [(args.model, ds, cfg, frailty) for cfg in configs]
    if args.parallel > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(args.parallel, len(jobs))) as ex:
            chains = list(ex.map(_chain, jobs))
    else:
        chains = [_chain(j) for j in jobs]

    pooled = _pooled(chains)
    risk = build_risk_structure(ds)
    offset = None
    if pooled.u is not None:
        _, index = np.unique(ds.cluster, return_inverse=True)
        offset = pooled.u.mean(0)[index]
    summary = summarize(pooled, model_dic(pooled, risk, ds.X, offset))

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config = {k: v for k, v in vars(args).items() if k not in ("func", "out_dir", "parallel")}
    config["seed"] = seed
    digest = _digest(args.data)
    run_id = _run_id("fit", config, digest)

    sdict = summary.to_dict()
    timing = {"seconds": sdict.pop("seconds"), "median_ess_per_sec": sdict.pop("median_ess_per_sec"),
              "per_chain_seconds": [d.elapsed for d in chains]}
    sdict.update(run_id=run_id, manifest="manifest.json",
                 diagnostics=[_jsonable(d.diagnostics) for d in chains])
    _write(out / "draws.csv", _draws_csv(chains))
    _write(out / "summary.json", json.dumps(sdict, indent=2) + "\n")
    table = summary.table()
    _write(out / "summary.txt", summary.table(timing=False) + "\n")
    _write(out / "timing.json", json.dumps(timing, indent=2) + "\n")
    outputs = ["draws.csv", "summary.json", "summary.txt", "timing.json"]
    if pooled.u is not None:
        _write(out / "frailty_effects.csv", _frailty_csv(pooled))
        outputs.append("frailty_effects.csv")
    _manifest(out, "fit", config, seed, digest, started, outputs)
    print(table)
    return EXIT_OK


def _frailty_csv(d: PosteriorDraws) -> str:
    lo, hi = np.quantile(d.u, [0.025, 0.975], axis=0)
    lines = ["cluster,mean,sd,lower,upper"]
    for k, lab in enumerate(d.cluster_labels):
        u = d.u[:, k]
        lines.append(f"{int(lab)},{float(u.mean())!r},{float(u.std(ddof=1))!r},"
                     f"{float(lo[k])!r},{float(hi[k])!r}")
    return "\n".join(lines) + "\n"


def _jsonable(d: dict) -> dict:
    return {k: (v.item() if hasattr(v, "item") else v) for k, v in d.items()}


# ---------------------------------------------------------------------------
# mle
# ---------------------------------------------------------------------------

def cmd_mle(args) -> int:
    started = _now()
    ds = load_csv(args.data, time=args.time, event=args.event,
                  covariates=_covariates(args.covariates))
    if ds.p == 0:
        raise CliError("no covariate columns to estimate")
    risk = build_risk_structure(ds)
    fit = newton_mle(risk, ds.X, ties=args.ties, names=ds.names)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config = {k: v for k, v in vars(args).items() if k not in ("func", "out_dir")}
    digest = _digest(args.data)
    if not fit.converged:
        raise CliError(f"Newton iterations did not converge: {fit.message}", EXIT_CONVERGENCE)
    ci = fit.wald_ci()
    rows = []
    for k, name in enumerate(fit.names):
        rows.append({"parameter": name, "estimate": float(fit.beta_hat[k]),
                     "std_err": float(fit.std_err[k]), "lower": float(ci[k, 0]),
                     "upper": float(ci[k, 1]), "hr": float(np.exp(fit.beta_hat[k])),
                     "hr_lower": float(np.exp(ci[k, 0])), "hr_upper": float(np.exp(ci[k, 1]))})
    result = {"ties": fit.ties, "loglik": fit.loglik, "n_iter": fit.n_iter,
              "coefficients": rows, "run_id": _run_id("mle", config, digest),
              "manifest": "manifest.json"}
    table = _mle_table(result)
    _write(out / "mle.json", json.dumps(result, indent=2) + "\n")
    _write(out / "mle.txt", table + "\n")
    _manifest(out, "mle", config, None, digest, started, ["mle.json", "mle.txt"])
    print(table)
    return EXIT_OK


def _mle_table(result) -> str:
    head = ("parameter", "estimate", "se", "95% Wald interval", "HR [low, high]")
    rows = [head]
    for r in result["coefficients"]:
        rows.append((r["parameter"], f"{r['estimate']:.4f}", f"{r['std_err']:.4f}",
                     f"[{r['lower']:.4f}, {r['upper']:.4f}]",
                     f"{r['hr']:.3f} [{r['hr_lower']:.3f}, {r['hr_upper']:.3f}]"))
    widths = [max(len(r[k]) for r in rows) for k in range(len(head))]
    lines = ["  ".join(c.ljust(w) if k == 0 else c.rjust(w)
                       for k, (c, w) in enumerate(zip(r, widths))).rstrip() for r in rows]
    lines.append(f"ties: {result['ties']}   log partial likelihood: {result['loglik']:.6f}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    started = _now()
    try:
        spec, settings, extra = load_scenario(args.scenario)
    except (ValueError, KeyError) as exc:
        raise CliError(f"{args.scenario}: {exc}") from None
    reps = args.reps if args.reps is not None else extra["reps"]
    if args.seed is not None or os.environ.get(SEED_ENV):
        seed = _seed(argparse.Namespace(seed=args.seed if args.seed is not None else extra["seed"]))
    else:
        seed = extra["seed"]
    pseudo_n = args.pseudo_n if args.pseudo_n is not None else extra["pseudo_n"]
    if args.iters is not None or args.burnin is not None:
        settings = RunSettings(settings.methods, args.iters or settings.n_iter,
                               args.burnin if args.burnin is not None else settings.n_burnin,
                               settings.prior_sd, settings.delta)
    report = run_replications(spec, settings, reps=reps, seed=seed, truth=extra["truth"],
                              parallel=args.parallel, pseudo_n=pseudo_n)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config = {"scenario": str(args.scenario), "reps": reps, "pseudo_n": pseudo_n,
              "spec": _jsonable_spec(spec), "settings": vars(settings) | {"methods": list(settings.methods)}}
    digest = _digest(args.scenario)
    body = report.to_dict(timing=False)
    body.update(run_id=_run_id("simulate", config | {"seed": seed}, digest), manifest="manifest.json")
    _write(out / "report.csv", report.to_csv())
    _write(out / "report.json", json.dumps(body, indent=2) + "\n")
    _write(out / "timing.json", json.dumps(report.timing, indent=2) + "\n")
    _manifest(out, "simulate", config, seed, digest, started,
              ["report.csv", "report.json", "timing.json"])
    print(report.table())
    failed = {m: report.failures[m] for m in settings.methods if report.success_rate(m) < 0.9}
    for m, k in report.failures.items():
        if k:
            print(f"{m}: {k}/{reps} replications failed", file=sys.stderr)
    if failed:
        print(f"replication-failure budget exceeded for {sorted(failed)}", file=sys.stderr)
        return EXIT_BUDGET
    return EXIT_OK


def _jsonable_spec(spec):
    from dataclasses import asdict
    d = asdict(spec)
    d["beta_true"] = list(d["beta_true"])
    return d


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="rankhaz",
        description="Bayesian Cox regression with rank-ordered likelihood Gibbs samplers.",
        epilog="exit codes: 0 ok, 2 invalid input, 3 non-convergence, "
               "4 replication-failure budget exceeded. "
               f"{SEED_ENV}, when set, overrides --seed.",
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def data_args(sp):
        sp.add_argument("--data", required=True, help="CSV file with a header row")
        sp.add_argument("--time", default="time", help="observed-time column (default: time)")
        sp.add_argument("--event", default="event", help="event-indicator column (default: event)")
        sp.add_argument("--covariates", help="comma-separated covariate columns (default: all others)")
        sp.add_argument("--out-dir", default="rankhaz-out", help="output directory")

    f = sub.add_parser("fit", help="run a PL-Cox or GPL-Cox Gibbs sampler")
    data_args(f)
    f.add_argument("--model", choices=("pl", "gpl"), default="pl")
    f.add_argument("--frailty-col", help="cluster column; adds a shared log-normal frailty")
    f.add_argument("--iters", type=_positive_int, default=3000)
    f.add_argument("--burnin", type=int, default=1000)
    f.add_argument("--thin", type=_positive_int, default=1)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--delta", type=float, default=10.0, help="PL-Cox approximation parameter")
    f.add_argument("--prior-sd", type=float, default=10.0, help="normal prior SD for every coefficient")
    f.add_argument("--chains", type=_positive_int, default=1, help="independent chains (pooled)")
    f.add_argument("--parallel", type=_positive_int, default=1, help="worker processes")
    f.set_defaults(func=cmd_fit)

    m = sub.add_parser("mle", help="partial-likelihood MLE with Wald intervals")
    data_args(m)
    m.add_argument("--ties", choices=("breslow", "efron"), default="breslow")
    m.set_defaults(func=cmd_mle)

    s = sub.add_parser("simulate", help="run a replication study from a scenario file")
    s.add_argument("--scenario", required=True, help="scenario file ([scenario] and [run] sections)")
    s.add_argument("--reps", type=_positive_int)
    s.add_argument("--seed", type=int)
    s.add_argument("--iters", type=_positive_int)
    s.add_argument("--burnin", type=int)
    s.add_argument("--pseudo-n", type=_positive_int, help="sample size of the pseudo-truth fit")
    s.add_argument("--parallel", type=_positive_int, default=1)
    s.add_argument("--out-dir", default="rankhaz-sim")
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except SingularHessianError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (DataError, ValueError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
