"""Command-line front end.

Exit codes: 0 success, 1 invalid input (bad flags, missing or corrupt
files, inconsistent parameters), 2 runtime failure (blow-up, failed check).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .errors import BlowUpError, ConfigurationError, DataError
from .harness import ExperimentPlan, compare, run_convergence
from .io import load_config, write_config, write_csv, write_diagnostics, write_snapshot
from .meanfield import CSV_HEADER, SimConfig, initial_condition, run
from .noise import (
    build_basis,
    covariance_defect,
    orthonormality_defect,
    self_advection_defect,
)
from .reference import VorticityState, ns_reference_step, taylor_green
from .spectral import energy, enstrophy, l2_norm

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2

BASIS_TOL = {"orthonormality": 1e-12, "self_advection": 1e-13, "covariance": 1e-10}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _csv_floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _csv_ints(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_sim_flags(p):
    g = p.add_argument_group("simulation parameters (override the config file)")
    g.add_argument("--config", help="key=value configuration file")
    g.add_argument("--eta", type=float, help="viscosity")
    g.add_argument("--dt", type=float, help="time step")
    g.add_argument("--T", type=float, help="final time")
    g.add_argument("--N", type=int, help="number of particles")
    g.add_argument("--k-field", type=int, help="field truncation K_f")
    g.add_argument("--k-noise", type=int, help="noise truncation K_W")
    g.add_argument("--scheme", choices=["ito-euler", "strat-heun"])
    g.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    g.add_argument("--ic", help="taylor-green | random-smooth[:seed[:slope[:energy]]] | file:<path>")
    g.add_argument("--nu-override", type=float, help="noise amplitude replacing sqrt(2 eta / c_K)")


def _config_from(args):
    overrides = {
        "eta": args.eta, "dt": args.dt, "T": args.T, "N": args.N,
        "k_field": args.k_field, "k_noise": args.k_noise, "scheme": args.scheme,
        "seed": args.seed, "ic": args.ic, "nu_override": args.nu_override,
    }
    if args.config:
        return load_config(args.config, overrides)
    return SimConfig(**{k: v for k, v in overrides.items() if v is not None})


def _out_dir(path):
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigurationError(f"cannot create output directory {out}: {exc}") from None
    return out


def cmd_run(args):
    cfg = _config_from(args)
    out = _out_dir(args.out_dir)
    res = run(cfg, snapshot_every=args.snapshot_every, workers=args.workers)
    write_config(out / "config.cfg", cfg)
    write_diagnostics(out / "diagnostics.csv", res.diagnostics)
    for t, f in res.snapshots:
        write_snapshot(out / f"mean_{int(round(t / cfg.dt)):06d}.mfns", t, f)
    last = res.diagnostics[-1]
    print(f"t={last.t:g} energy_mean={last.energy_mean:.6e} l2_err_ref={last.l2_err_ref:.6e}")
    return EXIT_OK


def cmd_reference(args):
    cfg = _config_from(args)
    out = _out_dir(args.out_dir)
    eta = cfg.effective_viscosity
    state = VorticityState.from_velocity(initial_condition(cfg))
    exact = cfg.ic == "taylor-green"

    def record(s):
        u = s.velocity()
        err = l2_norm(u - taylor_green(s.t, eta, cfg.k_field)) if exact else float("nan")
        return [s.t, energy(u), enstrophy(u), 0.0, 0.0, err]

    rows = [record(state)]
    snaps = [(0, state)]
    for n in range(1, cfg.n_steps + 1):
        state = ns_reference_step(state, eta, cfg.dt)
        state.t = n * cfg.dt
        rows.append(record(state))
        if args.snapshot_every and n % args.snapshot_every == 0 and n != cfg.n_steps:
            snaps.append((n, state))
    snaps.append((cfg.n_steps, state))
    write_config(out / "config.cfg", cfg)
    write_csv(out / "reference.csv", CSV_HEADER, rows)
    for n, s in snaps if args.snapshot_every else snaps[-1:]:
        write_snapshot(out / f"reference_{n:06d}.mfns", s.t, s.velocity())
    print(f"t={state.t:g} energy={rows[-1][1]:.6e}")
    return EXIT_OK


def cmd_basis_check(args):
    basis = build_basis(args.k_max)
    k_field = args.k_field if args.k_field is not None else max(8, args.k_max + 1)
    if k_field <= args.k_max:
        raise ConfigurationError(f"--k-field must exceed --k-max to leave interior modes")
    defects = {
        "orthonormality": orthonormality_defect(basis),
        "self_advection": self_advection_defect(basis),
        "covariance": covariance_defect(basis, k_field),
    }
    print(f"elements: {len(basis)}")
    print(f"c_K: {basis.c_K}")
    ok = True
    for name, val in defects.items():
        good = val <= BASIS_TOL[name]
        ok &= good
        print(f"max {name.replace('_', '-')} defect: {val:.3e} (tol {BASIS_TOL[name]:.0e}) {'ok' if good else 'FAIL'}")
    return EXIT_OK if ok else EXIT_RUNTIME


def cmd_compare(args):
    rep = compare(args.a, args.b)
    print(f"l2_error: {rep['l2_error']:.6e}")
    print(f"max_mode_deviation: {rep['max_mode_deviation']:.6e}")
    print(f"energy_difference: {rep['energy_difference']:.6e}")
    return EXIT_OK


def cmd_convergence(args):
    cfg = _config_from(args)
    plan = ExperimentPlan(
        base=cfg,
        N_list=args.N_list if args.N_list is not None else [cfg.N],
        dt_list=args.dt_list if args.dt_list is not None else [cfg.dt],
        seeds=args.seeds if args.seeds is not None else [cfg.seed],
        out_dir=args.out_dir,
        target=args.target,
    )
    report = run_convergence(plan, workers=args.workers)
    for N, dt, med, n, nf in report.summary:
        print(f"N={N} dt={dt:g} median_error={med:.6e} runs={n} failed={nf}")
    for dt in plan.dt_list:
        print(f"dt={dt:g} median error strictly decreasing in N: {report.monotone_in_N(dt)}")
    return EXIT_RUNTIME if report.failed else EXIT_OK


def cmd_taylor_green(args):
    f = taylor_green(args.time, args.eta, args.k)
    write_snapshot(args.out, args.time, f)
    print(f"wrote {args.out} (K={args.k}, t={args.time:g}, energy={energy(f):.6e})")
    return EXIT_OK


def build_parser():
    p = _Parser(prog="mfns", description="Mean-field particle Navier-Stokes on the 2-torus.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("run", help="integrate the particle ensemble")
    _add_sim_flags(s)
    s.add_argument("--out-dir", default=".", help="directory for diagnostics.csv and snapshots")
    s.add_argument("--snapshot-every", type=int, default=0,
                   help="mean-field snapshot cadence in steps (0: final time only)")
    s.add_argument("--workers", type=int, default=1, help="threads for particle updates (results do not depend on it)")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("reference", help="deterministic vorticity-form Navier-Stokes solve")
    _add_sim_flags(s)
    s.add_argument("--out-dir", default=".")
    s.add_argument("--snapshot-every", type=int, default=0)
    s.set_defaults(func=cmd_reference)

    s = sub.add_parser("basis-check", help="verify the noise basis identities")
    s.add_argument("--k-max", type=int, required=True, help="noise truncation K_W")
    s.add_argument("--k-field", type=int, help="field truncation for the covariance test (default max(8, K_W+1))")
    s.set_defaults(func=cmd_basis_check)

    s = sub.add_parser("compare", help="distance between two MFNS snapshots")
    s.add_argument("a")
    s.add_argument("b")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("convergence", help="Monte-Carlo sweep over N, dt and seeds")
    _add_sim_flags(s)
    s.add_argument("--N-list", type=_csv_ints, help="comma-separated particle counts")
    s.add_argument("--dt-list", type=_csv_floats, help="comma-separated time steps")
    s.add_argument("--seeds", type=_csv_ints, help="comma-separated master seeds")
    s.add_argument("--target", default="taylor-green", help="taylor-green | reference | file:<path>")
    s.add_argument("--out-dir", default=".")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_convergence)

    s = sub.add_parser("taylor-green", help="write the exact Taylor-Green field as a snapshot")
    s.add_argument("--time", type=float, default=0.0)
    s.add_argument("--eta", type=float, required=True)
    s.add_argument("--k", type=int, required=True, help="field truncation")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_taylor_green)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigurationError, DataError) as exc:
        print(f"mfns {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except BlowUpError as exc:
        print(f"mfns {args.command}: blow-up: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
