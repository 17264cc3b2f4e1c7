"""A miniature replication study.

Ten replications of the exponential scenario in ``scenario_small.ini``,
comparing the Breslow and Efron estimators with the PL-Cox posterior mean.
The same study runs from the command line with

    rankhaz simulate --scenario demos/scenario_small.ini --out-dir sim-out

Run:  python demos/04_replication_study.py   (about a minute)
"""

from pathlib import Path

from rankhaz.simlab import load_scenario, run_replications

spec, settings, extra = load_scenario(Path(__file__).with_name("scenario_small.ini"))
report = run_replications(spec, settings, reps=extra["reps"], seed=extra["seed"])
print(f"scenario {report.scenario}: {report.n_replications} replications, truth {report.truth}")
print(report.table())
print("\nmean seconds per fit:", {m: round(s, 2) for m, s in report.timing.items()})
