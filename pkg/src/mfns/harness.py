"""Experiment orchestration: Monte-Carlo convergence sweeps and file comparison."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BlowUpError, ConfigurationError
from .io import read_snapshot, write_csv
from .meanfield import initial_condition, run
from .reference import integrate_reference, l2_error, taylor_green
from .spectral import energy, l2_norm

log = logging.getLogger(__name__)

CONVERGENCE_HEADER = ["N", "dt", "seed", "l2_error", "rel_error"]
SUMMARY_HEADER = ["N", "dt", "median_l2_error", "n_runs", "n_failed"]


@dataclass
class ExperimentPlan:
    base: object  # SimConfig
    N_list: list
    dt_list: list
    seeds: list
    out_dir: str = "."
    target: str = "taylor-green"

    def validate(self):
        for name in ("N_list", "dt_list", "seeds"):
            if not getattr(self, name):
                raise ConfigurationError(f"experiment plan: {name} is empty")
        kind = self.target.partition(":")[0]
        if kind not in ("reference", "taylor-green", "file"):
            raise ConfigurationError(f"unknown comparison target {self.target!r}")
        if kind == "taylor-green" and self.base.ic != "taylor-green":
            raise ConfigurationError("taylor-green target needs the taylor-green initial condition")
        out = Path(self.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if not out.is_dir():
            raise ConfigurationError(f"output directory {out} is not a directory")  # pragma: no cover


def comparison_target(config, target):
    """Velocity field the ensemble mean at ``config.T`` is compared with."""
    kind, _, arg = target.partition(":")
    if kind == "taylor-green":
        return taylor_green(config.T, config.effective_viscosity, config.k_field)
    if kind == "reference":
        state = integrate_reference(initial_condition(config), config.effective_viscosity,
                                    config.dt, config.n_steps)
        return state.velocity()
    _, f = read_snapshot(arg)
    return f


@dataclass
class ConvergenceReport:
    rows: list
    summary: list
    failed: int

    def medians(self, dt=None):
        """``{N: median error}`` at one ``dt`` (the first one by default)."""
        dts = sorted({r[1] for r in self.summary})
        dt = dts[0] if dt is None else dt
        return {r[0]: r[2] for r in self.summary if r[1] == dt}

    def monotone_in_N(self, dt=None):
        m = self.medians(dt)
        vals = [m[n] for n in sorted(m)]
        return all(b < a for a, b in zip(vals, vals[1:]))


def run_convergence(plan, workers=1):
    """Run every ``(N, dt, seed)`` cell and tabulate terminal errors.

    A cell that blows up is recorded with NaN errors; it is never dropped.
    Writes ``convergence.csv`` and ``convergence_summary.csv`` to the plan's
    output directory.
    """
    plan.validate()
    rows = []
    failed = 0
    targets = {}
    for dt in plan.dt_list:
        for N in plan.N_list:
            for seed in plan.seeds:
                cfg = plan.base.replace(N=int(N), dt=float(dt), seed=int(seed))
                if dt not in targets:
                    targets[dt] = comparison_target(cfg, plan.target)
                ref = targets[dt]
                try:
                    res = run(cfg, workers=workers, reference=False)
                    err = l2_error(res.mean, ref)
                    rel = err / l2_norm(ref) if l2_norm(ref) > 0 else math.nan
                except BlowUpError as exc:
                    log.warning("cell N=%s dt=%s seed=%s failed: %s", N, dt, seed, exc)
                    err = rel = math.nan
                    failed += 1
                rows.append([int(N), float(dt), int(seed), err, rel])
                log.info("N=%s dt=%s seed=%s error=%.4g", N, dt, seed, err)
    summary = []
    for dt in plan.dt_list:
        for N in plan.N_list:
            errs = [r[3] for r in rows if r[0] == N and r[1] == dt]
            # NaN propagates: a failed cell makes the median undefined
            med = float(np.median(errs)) if not any(math.isnan(e) for e in errs) else math.nan
            summary.append([int(N), float(dt), med, len(errs), sum(math.isnan(e) for e in errs)])
    out = Path(plan.out_dir)
    write_csv(out / "convergence.csv", CONVERGENCE_HEADER, rows)
    write_csv(out / "convergence_summary.csv", SUMMARY_HEADER, summary)
    return ConvergenceReport(rows, summary, failed)


def compare(path_a, path_b):
    """Distances between two snapshot files."""
    ta, a = read_snapshot(path_a)
    tb, b = read_snapshot(path_b)
    if a.K != b.K:
        raise ConfigurationError(f"truncation mismatch: {path_a} has K={a.K}, {path_b} has K={b.K}")
    return {
        "t_a": ta,
        "t_b": tb,
        "l2_error": l2_error(a, b),
        "max_mode_deviation": float(np.max(np.abs(a.coeffs - b.coeffs))),
        "energy_difference": energy(a) - energy(b),
    }
