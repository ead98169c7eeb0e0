"""Experiment runner: load a scenario, run the selected architectures over
Monte Carlo trials with paired per-trial seeds, and write per-BS GOSPA curve
CSVs plus communication statistics.

Within a trial, every architecture consumes the same ground truth and the same
scans, and every tracker is seeded identically across architectures, so the
comparison is fully paired. Outputs are byte-deterministic in
(scenario, seed, trials, particles).
"""
from __future__ import annotations

import argparse
import dataclasses
import sys
from dataclasses import dataclass
from importlib.resources import files
from pathlib import Path

import numpy as np
from numpy.random import SeedSequence, default_rng

from .fusion import ARCHITECTURES, run_architecture
from .metrics import (
    CurveSet,
    GospaParams,
    curve_from_results,
    filter_by_fov,
    gospa,
    mc_aggregate,
)
from .scenario import ScenarioError, generate_measurements, generate_truth, load_scenario

# Fixed column order and spelling of the per-architecture CSV blocks.
ARCH_COLUMN = {
    "centralized": "Centralized",
    "distributed": "Distributed",
    "handover_no_meas": "HandoverNoMeas",
    "handover_meas": "HandoverMeas",
}
ARCH_ORDER = ("centralized", "distributed", "handover_no_meas", "handover_meas")
COMPONENTS = ("gospa", "localization", "miss_truth", "false_tracks")


@dataclass
class RunConfig:
    scenario: str
    architectures: tuple
    trials: int = 100
    seed: int = 0
    out_dir: str = "."
    particles: int | None = 10000
    gospa: GospaParams = dataclasses.field(default_factory=GospaParams)

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.architectures:
            raise ValueError("at least one architecture is required")


def default_scenario_path() -> str:
    return str(files("bptrack").joinpath("scenarios/two_bs_crossing.scenario"))


def parse_args(argv=None) -> RunConfig:
    parser = argparse.ArgumentParser(
        prog="bptrack",
        description="Run multi-architecture tracking experiments and write "
                    "per-BS GOSPA curves as CSV.")
    parser.add_argument("--scenario", default=None, metavar="PATH",
                        help="scenario file (default: shipped two-BS crossing)")
    parser.add_argument("--arch", default=",".join(ARCH_ORDER), metavar="LIST",
                        help="comma-separated subset of: " + ", ".join(ARCHITECTURES))
    parser.add_argument("--trials", type=int, default=100, metavar="N")
    parser.add_argument("--seed", type=int, default=0, metavar="N")
    parser.add_argument("--out", default=".", metavar="DIR")
    parser.add_argument("--particles", type=int, default=10000, metavar="N")
    parser.add_argument("--gospa-c", type=float, default=10.0, metavar="C")
    parser.add_argument("--gospa-p", type=float, default=2.0, metavar="P")
    ns = parser.parse_args(argv)

    archs = tuple(a.strip() for a in ns.arch.split(",") if a.strip())
    for a in archs:
        if a not in ARCHITECTURES:
            parser.error(f"unknown architecture {a!r}; choose from "
                         + ", ".join(ARCHITECTURES))
    if ns.trials < 1:
        parser.error("--trials must be >= 1")
    if ns.particles < 1:
        parser.error("--particles must be >= 1")
    try:
        gp = GospaParams(c=ns.gospa_c, p=ns.gospa_p)
    except ValueError as e:
        parser.error(str(e))
    scenario = ns.scenario if ns.scenario is not None else default_scenario_path()
    return RunConfig(scenario=scenario, architectures=archs, trials=ns.trials,
                     seed=ns.seed, out_dir=ns.out, particles=ns.particles,
                     gospa=gp)


def format_cell(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.6g" % float(v)


def write_csv(table, path):
    """Write (header, rows) as comma-separated text: header first, floats with
    6 significant digits, '\\n' newlines."""
    header, rows = table
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(format_cell(v) for v in row) + "\n")


def run_trial(cfg_sc, archs, particles, gospa_params, trial_seed):
    """One paired trial: shared truth/scans, one run per architecture.

    Returns (per-BS CurveSets keyed by sensor id, per-arch CommStats).
    """
    params = cfg_sc.tracker
    if particles is not None:
        params = dataclasses.replace(params, n_particles=particles)
    truth = generate_truth(cfg_sc, default_rng(SeedSequence((trial_seed, 0))))
    scans = generate_measurements(truth, cfg_sc.sensors,
                                  default_rng(SeedSequence((trial_seed, 1))))

    results = {}
    comms = {}
    for arch in archs:
        # Identical tracker seeds across architectures keep the trial paired.
        res = run_architecture(arch, scans, cfg_sc.sensors, cfg_sc.motion,
                               params, SeedSequence((trial_seed, 2)),
                               cfg_sc.horizon)
        results[arch] = res
        comms[arch] = res.comm

    per_bs_curves = {}
    for s in cfg_sc.sensors:
        truth_fov = [filter_by_fov(truth.positions(k), s)
                     for k in range(cfg_sc.horizon)]
        arch_results = {}
        for arch in archs:
            scores = []
            for k in range(cfg_sc.horizon):
                ests = results[arch].per_bs[s.id][k]
                pos = np.array([e.position for e in ests]).reshape(-1, 2)
                scores.append(gospa(truth_fov[k], filter_by_fov(pos, s),
                                    gospa_params))
            arch_results[arch] = scores
        counts = [len(t) for t in truth_fov]
        per_bs_curves[s.id] = curve_from_results(arch_results, counts)
    return per_bs_curves, comms


def run_experiment(cfg: RunConfig, stdout=None) -> list:
    """Execute the configured experiment and write the output CSVs.

    Returns the list of written paths; a one-line summary per file goes to
    ``stdout``.
    """
    stdout = stdout if stdout is not None else sys.stdout
    sc = load_scenario(cfg.scenario)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    per_bs_trials = {s.id: [] for s in sc.sensors}
    comm_sums = {a: None for a in cfg.architectures}
    for trial in range(cfg.trials):
        curves, comms = run_trial(sc, cfg.architectures, cfg.particles,
                                  cfg.gospa, cfg.seed + trial)
        for sid, cs in curves.items():
            per_bs_trials[sid].append(cs)
        for a, c in comms.items():
            if comm_sums[a] is None:
                comm_sums[a] = [c.priors_sent.copy(),
                                c.measurements_sent.copy(),
                                c.payload_scalars.copy()]
            else:
                comm_sums[a][0] += c.priors_sent
                comm_sums[a][1] += c.measurements_sent
                comm_sums[a][2] += c.payload_scalars

    written = []
    archs_ordered = [a for a in ARCH_ORDER if a in cfg.architectures]
    for s in sc.sensors:
        agg: CurveSet = mc_aggregate(per_bs_trials[s.id])
        header = ["Time"]
        for a in archs_ordered:
            header += [f"{ARCH_COLUMN[a]}_{comp}" for comp in COMPONENTS]
        rows = []
        for k in range(agg.horizon):
            row = [k]
            for a in archs_ordered:
                row += [agg.curves[a][comp][k] for comp in COMPONENTS]
            rows.append(row)
        path = out / f"bs{s.id}_combined.csv"
        write_csv((header, rows), path)
        written.append(path)

        tpath = out / f"bs{s.id}_targets.csv"
        write_csv((["Time", "AvgTargets"],
                   [[k, agg.avg_targets[k]] for k in range(agg.horizon)]), tpath)
        written.append(tpath)

    header = ["Time"]
    for a in archs_ordered:
        header += [f"{ARCH_COLUMN[a]}_{key}"
                   for key in ("priors_sent", "measurements_sent", "payload_scalars")]
    rows = []
    for k in range(sc.horizon):
        row = [k]
        for a in archs_ordered:
            row += [v[k] / cfg.trials for v in comm_sums[a]]
        rows.append(row)
    cpath = out / "comm_stats.csv"
    write_csv((header, rows), cpath)
    written.append(cpath)

    for p in written:
        print(f"wrote {p}", file=stdout)
    return written


def main(argv=None) -> int:
    cfg = parse_args(argv)
    try:
        run_experiment(cfg)
    except (ScenarioError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
