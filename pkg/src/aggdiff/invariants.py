"""Executable checks for the qualitative properties of the lattice maps.

Every check takes a :class:`~aggdiff.lattice.Trajectory` (possibly batched)
and returns an :class:`InvariantReport`.  A report passes iff its
``worst_violation`` does not exceed its ``tolerance``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import EmptyTrajectoryError, NotConvergedError, PreconditionError
from .lattice import (
    AggDiff,
    BoundaryKind,
    ConstantProb,
    LatticeState,
    Trajectory,
    coupling_coefficients,
)

BOUNDS_TOL = 1e-12
ORDER_TOL = 1e-12
CONSERVATION_TOL = 1e-10
MEAN_TOL = 1e-3
HEAT_TOL = 1e-6
FORWARD_REGIME = (0.5, 1.0)


def per_step_conservation_tol(N: int) -> float:
    """Rounding budget for one aggregation-diffusion step: 8 N eps."""
    return 8 * N * np.finfo(float).eps


@dataclass
class InvariantReport:
    check_name: str
    passed: bool
    worst_violation: float
    violation_step: int | None
    tolerance: float
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def _report(name, violation, steps, tol, **details) -> InvariantReport:
    """Build a report from per-snapshot violations (shape (n_snap, ...))."""
    violation = np.asarray(violation, dtype=float)
    per_snap = violation.reshape(len(steps), -1).max(axis=1) if violation.size else np.zeros(len(steps))
    worst = float(per_snap.max()) if per_snap.size else 0.0
    worst = max(worst, 0.0) + 0.0  # no -0.0
    bad = np.flatnonzero(per_snap > tol)
    step = int(steps[bad[0]]) if bad.size else None
    return InvariantReport(name, worst <= tol, worst, step, tol, details)


def _require_nonempty(traj: Trajectory):
    if len(traj) == 0:
        raise EmptyTrajectoryError("trajectory has no snapshots")


def _require_forward_initial(traj: Trajectory, name: str):
    initial = traj.u[0][..., 1:-1]
    lo, hi = FORWARD_REGIME
    if initial.min() < lo - ORDER_TOL or initial.max() > hi + ORDER_TOL:
        raise PreconditionError(f"{name}: initial interior must lie in [1/2, 1]")


def _require_dirichlet_aggdiff(traj: Trajectory, name: str):
    if traj.boundary is not BoundaryKind.DIRICHLET or not isinstance(traj.kernel, AggDiff):
        raise PreconditionError(f"{name}: needs a Dirichlet aggregation-diffusion run")


def _with_envelope(report: InvariantReport, violation: np.ndarray) -> InvariantReport:
    """Fold the all-steps envelope violation into a snapshot-based report."""
    env = float(np.max(violation, initial=0.0))
    report.details["envelope_violation"] = env
    if env > report.worst_violation:
        report.worst_violation = env
        report.passed = env <= report.tolerance
    return report


def check_bounds(traj: Trajectory, tol: float = BOUNDS_TOL) -> InvariantReport:
    """Every density stays in [0, 1]."""
    _require_nonempty(traj)
    u = traj.u
    excursion = np.maximum(-u, u - 1.0).max(axis=-1)
    report = _report("bounds", excursion, traj.steps, tol)
    if traj.envelope_min is not None:
        env = np.maximum(-np.asarray(traj.envelope_min), np.asarray(traj.envelope_max) - 1.0)
        report = _with_envelope(report, env)
    return report


def check_conservation(traj: Trajectory, tol: float = CONSERVATION_TOL) -> InvariantReport:
    """Interior mass never drifts from its initial value by more than ``tol``."""
    _require_nonempty(traj)
    mass = traj.mass
    drift = np.abs(mass - mass[0])
    return _report(
        "conservation", drift, traj.steps, tol,
        initial_mass=np.ravel(mass[0]).tolist() if np.ndim(mass[0]) else float(mass[0]),
    )


def check_max_principle(traj: Trajectory, tol: float = BOUNDS_TOL) -> InvariantReport:
    """Interior values stay between the initial interior min and max.

    Only meaningful for initial data in the diffusion regime [1/2, 1].
    """
    _require_nonempty(traj)
    _require_forward_initial(traj, "max_principle")
    inner = traj.u[..., 1:-1]
    lo = inner[0].min(axis=-1)
    hi = inner[0].max(axis=-1)
    excess = np.maximum(lo[..., None] - inner, inner - hi[..., None]).max(axis=-1)
    report = _report("max_principle", excess, traj.steps, tol)
    if traj.envelope_min is not None:
        env = np.maximum(lo - traj.envelope_min, traj.envelope_max - hi)
        report = _with_envelope(report, env)
    return report


def check_monotonicity(traj: Trajectory, tol: float = ORDER_TOL) -> InvariantReport:
    """A monotone initial interior profile keeps its ordering direction."""
    _require_nonempty(traj)
    _require_forward_initial(traj, "monotonicity")
    diffs = np.diff(traj.u[..., 1:-1], axis=-1)
    first = diffs[0]
    increasing = np.all(first >= -tol, axis=-1)
    decreasing = np.all(first <= tol, axis=-1)
    if not np.all(increasing | decreasing):
        raise PreconditionError("monotonicity: initial interior is not monotone")
    sign = np.where(increasing, 1.0, -1.0)
    reversal = (-sign[..., None] * diffs).max(axis=-1, initial=0.0)
    return _report("monotonicity", reversal, traj.steps, tol)


def check_tv_decay(traj: Trajectory, tol: float = ORDER_TOL) -> InvariantReport:
    """Interior total variation is nonincreasing between consecutive records."""
    _require_nonempty(traj)
    _require_dirichlet_aggdiff(traj, "tv_decay")
    _require_forward_initial(traj, "tv_decay")
    tv = traj.total_variation
    growth = np.zeros_like(tv)
    growth[1:] = tv[1:] - tv[:-1]
    return _report("tv_decay", growth, traj.steps, tol)


def check_mean_convergence(traj: Trajectory, tol: float = MEAN_TOL) -> InvariantReport:
    """The final interior equals the initial interior mean, mass(0)/(N-1).

    The last snapshot must come from a converged equilibrium run.
    """
    _require_nonempty(traj)
    _require_dirichlet_aggdiff(traj, "mean_convergence")
    _require_forward_initial(traj, "mean_convergence")
    if traj.converged is None or not np.all(traj.converged):
        raise NotConvergedError("mean_convergence: trajectory did not reach equilibrium")
    limit = traj.mass[0] / (traj.N - 1)
    final = traj.u[-1][..., 1:-1]
    deviation = np.abs(final - np.asarray(limit)[..., None]).max(axis=-1)
    worst = float(np.max(deviation))
    return InvariantReport(
        "mean_convergence", worst <= tol, worst,
        int(traj.steps[-1]) if worst > tol else None, tol,
        {"limit": np.ravel(limit).tolist() if np.ndim(limit) else float(limit)},
    )


def check_heat_vanishing(traj: Trajectory, tol: float = HEAT_TOL) -> InvariantReport:
    """Under the constant-probability lattice with Dirichlet ends, mass dies out.

    The violation is the larger of the final mass and the largest increase of
    mass between consecutive records.
    """
    _require_nonempty(traj)
    kernel = traj.kernel
    if not isinstance(kernel, ConstantProb) or traj.boundary is not BoundaryKind.DIRICHLET:
        raise PreconditionError("heat_vanishing: needs a Dirichlet constant-probability run")
    if not 0.0 < kernel.p < 1.0:
        raise PreconditionError("heat_vanishing: p must lie strictly between 0 and 1")
    mass = traj.mass
    growth = np.maximum(mass[1:] - mass[:-1], 0.0).max(initial=0.0)
    final = float(np.max(mass[-1]))
    worst = max(final, float(growth))
    increases = np.flatnonzero(np.any((mass[1:] - mass[:-1]).reshape(len(mass) - 1, -1) > 0, axis=1))
    step = None
    if worst > tol:
        step = int(traj.steps[increases[0] + 1]) if increases.size else int(traj.steps[-1])
    return InvariantReport(
        "heat_vanishing", worst <= tol, worst, step, tol,
        {"final_mass": final, "max_mass_increase": float(growth)},
    )


CHECKS = {
    "bounds": check_bounds,
    "conservation": check_conservation,
    "max_principle": check_max_principle,
    "monotonicity": check_monotonicity,
    "tv_decay": check_tv_decay,
    "mean_convergence": check_mean_convergence,
    "heat_vanishing": check_heat_vanishing,
}


def difference_matrix(state: LatticeState) -> np.ndarray:
    """Tridiagonal map taking consecutive interior differences one step ahead.

    With D_i = u_i - u_{i-1} for i = 2..N-1 and Dirichlet ends (so that
    C_1 = C_N = 0), one aggregation-diffusion step gives

        D_i' = C_{i-1} D_{i-1} + (1 - 2 C_i) D_i + C_{i+1} D_{i+1}.

    Returns the (N-2) x (N-2) matrix (batched states give a stack).
    """
    if state.boundary is not BoundaryKind.DIRICHLET:
        raise PreconditionError("difference recursion holds only with Dirichlet ends")
    c = coupling_coefficients(state)  # c[..., j-1] = C_j
    inner = c[..., 1:-1]  # C_2 .. C_{N-1}
    n = inner.shape[-1]
    mat = np.zeros(c.shape[:-1] + (n, n))
    idx = np.arange(n)
    mat[..., idx, idx] = 1.0 - 2.0 * inner
    mat[..., idx[1:], idx[:-1]] = inner[..., :-1]
    mat[..., idx[:-1], idx[1:]] = inner[..., 1:]
    return mat


def consecutive_differences(u: np.ndarray) -> np.ndarray:
    return np.diff(np.asarray(u)[..., 1:-1], axis=-1)
