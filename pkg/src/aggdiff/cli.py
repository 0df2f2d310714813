"""``aggdiff`` command line: simulate, check, classify, sweep, pde.

Exit codes: 0 success, 1 invariant or regime violation, 2 configuration
error.
"""
from __future__ import annotations

import argparse
import collections
import json
import os
import sys

import numpy as np

from . import invariants, patterns, pde
from .config import (
    ConfigError,
    ExperimentConfig,
    initial_function,
    initial_nodes,
    initial_state,
    load_config,
    parse_config,
    parse_dx_list,
)
from .errors import (
    DegenerateDiffusionError,
    DomainError,
    EmptyTrajectoryError,
    NotConvergedError,
    PreconditionError,
    RegimeExitError,
)
from .lattice import (
    BoundaryKind,
    Trajectory,
    equilibrate,
    interior_mass,
    interior_total_variation,
    run,
)

OK, VIOLATION, CONFIG = 0, 1, 2


def _fmt(v) -> str:
    return format(float(v), ".17g")


def _workers() -> int:
    n = os.cpu_count() or 1
    cap = os.environ.get("AGGDIFF_THREADS")
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ConfigError("AGGDIFF_THREADS must be an integer") from None
    return n


def _open_out(path, default):
    path = path or default
    try:
        return open(path, "w", newline="")
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc.strerror}") from None


def _resolve(args) -> ExperimentConfig:
    raw = load_config(args.config) if args.config else {}
    overrides = {
        "steps": getattr(args, "steps", None),
        "eps_stop": getattr(args, "eps_stop", None),
        "tol": getattr(args, "tol", None),
        "record_every": getattr(args, "record_every", None),
        "out": getattr(args, "out", None),
    }
    for key, value in overrides.items():
        if value is not None:
            raw[key] = value
    if getattr(args, "dx_list", None) is not None:
        raw["dx_list"] = parse_dx_list(args.dx_list)
    if getattr(args, "checks", None) is not None:
        raw["checks"] = [c for c in args.checks.split(",") if c]
    return parse_config(raw)


# --- lattice runs -----------------------------------------------------------

def _default_record_every(steps: int) -> int:
    return max(1, steps // 100)


def lattice_trajectory(cfg: ExperimentConfig) -> Trajectory:
    """Fixed-step run when ``steps`` is set, otherwise a run to equilibrium.

    Equilibrium runs are done twice: once to find the step count, then again
    with recording; both use the same compiled update, so they agree exactly.
    The final state is always the last snapshot.
    """
    state = initial_state(cfg)
    kernel = cfg.kernel
    if cfg.steps is not None:
        every = cfg.record_every or _default_record_every(cfg.steps)
        traj = run(state, kernel, cfg.steps - cfg.steps % every, every)
        rest = cfg.steps % every
        if rest:
            tail = run(traj.state(-1), kernel, rest, rest)
            traj = _concat(traj, tail, None)
        return traj
    final, converged, taken = equilibrate(state, kernel, cfg.eps_stop, cfg.max_steps)
    every = cfg.record_every or _default_record_every(taken)
    traj = run(state, kernel, taken - taken % every, every)
    if taken % every:
        tail = run(traj.state(-1), kernel, taken % every, taken % every)
        traj = _concat(traj, tail, converged)
    traj.converged = converged
    return traj


def _concat(head: Trajectory, tail: Trajectory, converged) -> Trajectory:
    return Trajectory(
        np.concatenate([head.steps, tail.steps[1:]]),
        np.concatenate([head.u, tail.u[1:]]),
        head.boundary, head.kernel, head.tau, converged,
        np.minimum(head.envelope_min, tail.envelope_min),
        np.maximum(head.envelope_max, tail.envelope_max),
    )


def write_lattice_csv(traj: Trajectory, fh) -> None:
    N = traj.N
    fh.write(",".join(["t"] + [f"u_{j}" for j in range(1, N)] + ["mass", "tv"]) + "\n")
    for step, row in zip(traj.steps, traj.u):
        t = step * traj.tau
        cells = [_fmt(t)] + [_fmt(v) for v in row[1:-1]]
        cells += [_fmt(interior_mass(row)), _fmt(interior_total_variation(row))]
        fh.write(",".join(cells) + "\n")


def read_lattice_csv(path, cfg: ExperimentConfig) -> Trajectory:
    """Rebuild a trajectory from the ``simulate`` CSV format.

    Endpoints are not stored: Dirichlet pads zeros, Neumann copies the
    neighbouring value.  The file is taken as a complete run, so its last
    row counts as the run's limit.
    """
    try:
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if header[0] != "t" or header[-2:] != ["mass", "tv"] or data.shape[1] != len(header):
        raise ConfigError(f"{path}: expected header t,u_1..u_(N-1),mass,tv")
    inner = data[:, 1:-2]
    if cfg.boundary is BoundaryKind.DIRICHLET:
        u = np.pad(inner, ((0, 0), (1, 1)))
    else:
        u = np.pad(inner, ((0, 0), (1, 1)), mode="edge")
    steps = np.rint(data[:, 0] / cfg.tau).astype(np.int64)
    return Trajectory(steps, u, cfg.boundary, cfg.kernel, cfg.tau, converged=True)


# --- commands ---------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = _resolve(args)
    if not cfg.is_lattice:
        raise ConfigError("simulate runs the aggdiff or heat lattice; use 'pde' for the continuum model")
    fh = _open_out(cfg.out, "trajectory.csv")
    with fh:
        traj = lattice_trajectory(cfg)
        write_lattice_csv(traj, fh)
    summary = {"steps": int(traj.steps[-1]), "snapshots": len(traj),
               "initial_mass": float(traj.mass[0]), "final_mass": float(traj.mass[-1])}
    if traj.converged is not None:
        summary["converged"] = bool(traj.converged)
    print(json.dumps(summary))
    return OK


def cmd_check(args) -> int:
    out = args.out or "report.json"
    reports = []
    status = OK
    error = None
    try:
        cfg = _resolve(args)
        if not cfg.is_lattice:
            raise ConfigError("checks apply to the aggdiff and heat lattices")
        if not cfg.checks:
            raise ConfigError("no checks requested (use --checks or the 'checks' key)")
        fixed = read_lattice_csv(args.trajectory, cfg) if args.trajectory else None
        cache = {}
        for name in cfg.checks:
            traj = fixed if fixed is not None else _check_trajectory(cfg, name, cache)
            kwargs = {"tol": cfg.tol} if cfg.tol is not None else {}
            try:
                report = invariants.CHECKS[name](traj, **kwargs)
            except NotConvergedError as exc:
                report = invariants.InvariantReport(name, False, float("inf"), None,
                                                    kwargs.get("tol", 0.0), {"error": str(exc)})
            reports.append(report)
            if not report.passed:
                status = VIOLATION
    except (ConfigError, PreconditionError, DomainError, EmptyTrajectoryError) as exc:
        status, error = CONFIG, str(exc)
    payload = {"passed": status == OK, "exit_code": status,
               "reports": [r.to_dict() for r in reports]}
    if error:
        payload["error"] = error
    try:
        with open(out, "w") as fh:
            json.dump(payload, fh, indent=2, default=float)
            fh.write("\n")
    except OSError as exc:
        print(f"error: cannot write {out}: {exc.strerror}", file=sys.stderr)
        return CONFIG
    for r in reports:
        print(f"{r.check_name}: {'pass' if r.passed else 'FAIL'} "
              f"(worst {r.worst_violation:.3g}, tol {r.tolerance:.3g})")
    if error:
        print(f"error: {error}", file=sys.stderr)
    return status


def _check_trajectory(cfg, name, cache):
    if name == "mean_convergence" or cfg.steps is None:
        key = "_equilibrium"
        if key not in cache:
            saved = cfg.steps
            cfg.steps = None
            cache[key] = lattice_trajectory(cfg)
            cfg.steps = saved
        return cache[key]
    key = "_fixed"
    if key not in cache:
        cache[key] = lattice_trajectory(cfg)
    return cache[key]


def cmd_classify(args) -> int:
    triple = tuple(args.u)
    try:
        patterns.classify(*triple)
    except DomainError as exc:
        raise ConfigError(str(exc)) from None
    eps = args.eps_stop if args.eps_stop is not None else patterns.DEFAULT_EPS_STOP
    tol = args.tol if args.tol is not None else patterns.MATCH_TOL
    try:
        report = patterns.verify(*triple, eps_stop=eps, max_steps=args.max_steps, tol=tol)
    except NotConvergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return VIOLATION
    text = report.to_json(indent=2)
    if args.out:
        fh = _open_out(args.out, None)
        with fh:
            fh.write(text + "\n")
    print(text)
    return OK


def cmd_sweep(args) -> int:
    if args.resolution < 2:
        raise ConfigError("resolution must be >= 2")
    eps = args.eps_stop if args.eps_stop is not None else patterns.DEFAULT_EPS_STOP
    tol = args.tol if args.tol is not None else patterns.MATCH_TOL
    fh = _open_out(args.out, "catalog.csv")
    with fh:
        rows = patterns.sweep(args.resolution, eps, args.max_steps, tol, workers=_workers())
        fh.write(",".join(patterns.CATALOG_HEADER) + "\n")
        for r in rows:
            cells = [_fmt(v) for v in r.triple] + [r.case_id, r.limit_class]
            cells += [_fmt(v) for v in r.limit] + [str(r.matched).lower()]
            fh.write(",".join(cells) + "\n")
    counts = collections.Counter(r.case_id for r in rows)
    summary = " ".join(f"{k}={counts[k]}" for k in sorted(counts))
    unmatched = sum(not r.matched for r in rows)
    print(f"rows={len(rows)} unmatched={unmatched} {summary}")
    return OK


def _diffusivity(cfg):
    if isinstance(cfg.diffusivity, dict):
        return pde.ConstantDiffusivity(float(cfg.diffusivity["constant"]))
    return pde.BackwardForward()


def cmd_pde(args) -> int:
    cfg = _resolve(args)
    if cfg.model != "pde":
        raise ConfigError("pde needs model 'pde'")
    D = _diffusivity(cfg)
    if cfg.dx_list:
        u0 = initial_function(cfg)
        fh = _open_out(cfg.out, "probe.csv")
        with fh:
            metrics = pde.refinement_probe(u0, cfg.dx_list, cfg.T_probe, cfg.theta, cfg.boundary, D,
                                           workers=_workers())
            fh.write(",".join(pde.PROBE_HEADER) + "\n")
            for m in metrics:
                fh.write(f"{_fmt(m.dx)},{_fmt(m.tv_final)},{_fmt(m.osc_amp)},{m.steps_completed}\n")
        print(json.dumps({"verdict": pde.probe_verdict(metrics)}))
        return OK
    grid = pde.ContinuumGrid(initial_nodes(cfg, cfg.M), 0.0, D)
    fh = _open_out(cfg.out, "pde.csv")
    with fh:
        try:
            traj = pde.solve(grid, cfg.T_final, cfg.boundary, cfg.theta, cfg.record_every or 1000)
        except RegimeExitError as exc:
            print(f"regime exit: {exc}", file=sys.stderr)
            return VIOLATION
        except DegenerateDiffusionError as exc:
            raise ConfigError(str(exc)) from None
        M = traj.u.shape[1] - 1
        fh.write(",".join(["t"] + [f"x_{j}" for j in range(M + 1)]) + "\n")
        for t, row in zip(traj.times, traj.u):
            fh.write(",".join([_fmt(t)] + [_fmt(v) for v in row]) + "\n")
    final = traj.u[-1]
    mass = traj.mass()
    print(json.dumps({"steps": traj.steps, "t_final": float(traj.times[-1]),
                      "mass_drift": float(abs(mass[-1] - mass[0])),
                      "final_min": float(final.min()), "final_max": float(final.max())}))
    return OK


# --- argument parsing -------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aggdiff", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, record=True):
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--out", help="output path")
        p.add_argument("--steps", type=int)
        p.add_argument("--eps-stop", type=float)
        p.add_argument("--tol", type=float)
        if record:
            p.add_argument("--record-every", type=int)

    p = sub.add_parser("simulate", help="run a lattice and write its trajectory CSV")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("check", help="run invariant checks and write a JSON report")
    common(p)
    p.add_argument("--checks", help="comma-separated check names")
    p.add_argument("--trajectory", help="check this simulate-format CSV instead of running")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("classify", help="classify and verify an N=5 triple")
    p.add_argument("u", type=float, nargs=3, metavar=("U1", "U2", "U3"))
    p.add_argument("--eps-stop", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-steps", type=int, default=patterns.DEFAULT_MAX_STEPS)
    p.add_argument("--out")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("sweep", help="classify a grid of triples into a CSV catalog")
    p.add_argument("--resolution", type=int, default=10)
    p.add_argument("--out")
    p.add_argument("--eps-stop", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-steps", type=int, default=10**6)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("pde", help="continuum solver or refinement probe")
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--out")
    p.add_argument("--record-every", type=int)
    p.add_argument("--dx-list", help="comma-separated mesh sizes, e.g. 0.01,0.005 or 1/100,1/200")
    p.set_defaults(func=cmd_pde)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return CONFIG if exc.code else OK
    try:
        return args.func(args)
    except (ConfigError, DomainError, PreconditionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return CONFIG


if __name__ == "__main__":
    sys.exit(main())
