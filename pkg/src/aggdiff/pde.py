"""Explicit finite differences for u_t = (D(u) u_x)_x on [0, 1].

The default diffusivity is D(u) = u^2 (u - 1/2): parabolic above 1/2 and
backward below it.  ``solve`` refuses to leave the forward regime;
``refinement_probe`` runs the same scheme with a fixed step and no regime
check, to watch what the backward regime does under mesh refinement.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import (
    CFLViolationError,
    DegenerateDiffusionError,
    PreconditionError,
    RegimeExitError,
)
from .lattice import BoundaryKind

ALPHA = 0.5
REGIME_TOL = 1e-12
OVERFLOW = 1e6
GRONWALL_SLACK = 1e-6


@dataclass(frozen=True)
class BackwardForward:
    """D(u) = u^2 (u - 1/2)."""

    name: str = "backward_forward"

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        return u * u * (u - ALPHA)


@dataclass(frozen=True)
class ConstantDiffusivity:
    c: float = 1.0
    name: str = "constant"

    def __call__(self, u):
        return np.full(np.shape(u), float(self.c))


Diffusivity = Callable[[np.ndarray], np.ndarray]


def _is_default(diffusivity) -> bool:
    return isinstance(diffusivity, BackwardForward)


@dataclass(frozen=True)
class ContinuumGrid:
    """Nodal values u_0..u_M on x_j = j dx with dx = 1/M."""

    u: np.ndarray
    time: float = 0.0
    diffusivity: Diffusivity = field(default_factory=BackwardForward)

    def __post_init__(self):
        u = np.array(self.u, dtype=float)
        if u.ndim != 1 or u.size < 3:
            raise ValueError("need a 1-D array with at least 3 nodes")
        if not np.all(np.isfinite(u)):
            raise ValueError("nodal values must be finite")
        u.setflags(write=False)
        object.__setattr__(self, "u", u)

    @property
    def M(self) -> int:
        return self.u.size - 1

    @property
    def dx(self) -> float:
        return 1.0 / self.M

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.M + 1)

    @classmethod
    def sample(cls, func, M: int, diffusivity: Diffusivity | None = None) -> "ContinuumGrid":
        x = np.linspace(0.0, 1.0, M + 1)
        return cls(np.asarray(func(x), dtype=float) * np.ones_like(x), 0.0, diffusivity or BackwardForward())


def trapezoid(f: np.ndarray, dx: float) -> float:
    f = np.asarray(f, dtype=float)
    return float(dx * (math.fsum(f[1:-1]) + 0.5 * (f[0] + f[-1])))


def cfl_dt(grid: ContinuumGrid, theta: float = 0.9) -> float:
    """theta dx^2 / (2 max D) over the current nodal values."""
    if not 0.0 < theta <= 1.0:
        raise ValueError("theta must lie in (0, 1]")
    dmax = float(np.max(grid.diffusivity(grid.u)))
    if not dmax > 0.0:
        raise DegenerateDiffusionError(f"max D = {dmax:g}; no forward diffusion to time-step")
    return theta * grid.dx**2 / (2.0 * dmax)


def explicit_flux_step(u: np.ndarray, r: float, diffusivity: Diffusivity, bc: BoundaryKind) -> np.ndarray:
    """One conservative update with r = dt / dx^2 and D at pair means."""
    d = diffusivity(0.5 * (u[1:] + u[:-1]))
    flux = d * np.diff(u)  # D_{j+1/2} (u_{j+1} - u_j)
    new = u.copy()
    new[1:-1] += r * (flux[1:] - flux[:-1])
    if bc is BoundaryKind.NEUMANN:
        # mirror ghosts u_{-1} = u_1, u_{M+1} = u_{M-1}
        new[0] += 2.0 * r * flux[0]
        new[-1] -= 2.0 * r * flux[-1]
    else:
        new[0] = 0.0
        new[-1] = 0.0
    return new


def step_fd(grid: ContinuumGrid, dt: float, bc: BoundaryKind = BoundaryKind.NEUMANN) -> ContinuumGrid:
    bc = BoundaryKind(bc)
    limit = cfl_dt(grid, 1.0)
    if dt > limit * (1.0 + 1e-12):
        raise CFLViolationError(f"dt = {dt:g} exceeds the stability limit {limit:g}")
    new = explicit_flux_step(grid.u, dt / grid.dx**2, grid.diffusivity, bc)
    return replace(grid, u=new, time=grid.time + dt)


@dataclass
class ContinuumTrajectory:
    times: np.ndarray
    u: np.ndarray  # (n_snap, M + 1)
    boundary: BoundaryKind
    diffusivity: Diffusivity
    steps: int = 0

    @property
    def dx(self) -> float:
        return 1.0 / (self.u.shape[1] - 1)

    @property
    def final(self) -> ContinuumGrid:
        return ContinuumGrid(self.u[-1], float(self.times[-1]), self.diffusivity)

    def mass(self) -> np.ndarray:
        return np.array([trapezoid(row, self.dx) for row in self.u])

    def l2_mass(self) -> np.ndarray:
        return np.array([trapezoid(row * row, self.dx) for row in self.u])


def _check_regime(u, time):
    low = float(u.min())
    if low < ALPHA - REGIME_TOL:
        j = int(np.argmin(u))
        raise RegimeExitError(f"u[{j}] = {low:.17g} < 1/2 at t = {time:.6g}")


def solve(
    grid: ContinuumGrid,
    T_final: float,
    bc: BoundaryKind = BoundaryKind.NEUMANN,
    theta: float = 0.9,
    record_every: int = 1,
) -> ContinuumTrajectory:
    """Explicit Euler to ``T_final`` with the step recomputed from the CFL bound.

    Under the default diffusivity every nodal value must stay >= 1/2
    (up to 1e-12); with Dirichlet ends this fails at once, since the ends
    are pinned to 0.
    """
    bc = BoundaryKind(bc)
    if T_final < 0:
        raise ValueError("T_final must be nonnegative")
    if record_every < 1:
        raise ValueError("record_every must be >= 1")
    default = _is_default(grid.diffusivity)
    u = grid.u.copy()
    if bc is BoundaryKind.DIRICHLET:
        u[0] = u[-1] = 0.0
    if default:
        if u.max() > 1.0 + REGIME_TOL:
            raise PreconditionError("initial data must not exceed 1")
        _check_regime(u, grid.time)
    dx2 = grid.dx**2
    t = grid.time
    end = grid.time + T_final
    times, snaps = [t], [u.copy()]
    n = 0
    while t < end:
        dmax = float(np.max(grid.diffusivity(u)))
        if not dmax > 0.0:
            # nothing can move: D vanishes at every node
            if dmax == 0.0 and default:
                break
            raise DegenerateDiffusionError(f"max D = {dmax:g}")
        dt = min(theta * dx2 / (2.0 * dmax), end - t)
        u = explicit_flux_step(u, dt / dx2, grid.diffusivity, bc)
        t = end if dt == end - t else t + dt
        n += 1
        if default:
            _check_regime(u, t)
        if n % record_every == 0:
            times.append(t)
            snaps.append(u.copy())
    if times[-1] != t or len(times) == 1 and t != grid.time:
        times.append(t)
        snaps.append(u.copy())
    return ContinuumTrajectory(np.array(times), np.array(snaps), bc, grid.diffusivity, n)


@dataclass(frozen=True)
class EnergyDiagnostics:
    l2_mass: float
    weak_energy: float
    lp_norms: dict

    def to_dict(self) -> dict:
        return {"l2_mass": self.l2_mass, "weak_energy": self.weak_energy,
                "lp_norms": {str(k): v for k, v in self.lp_norms.items()}}


def energy_diagnostics(grid: ContinuumGrid, ps: Sequence[int] = (2, 4, 8)) -> EnergyDiagnostics:
    """Trapezoidal int u^2, int [u^2 + |D(u)| u_x^2] and L^p norms."""
    u, dx = grid.u, grid.dx
    ux = np.gradient(u, dx)  # one-sided at the ends
    l2 = trapezoid(u * u, dx)
    weak = l2 + trapezoid(np.abs(grid.diffusivity(u)) * ux * ux, dx)
    norms = {p: trapezoid(np.abs(u) ** p, dx) ** (1.0 / p) for p in ps}
    return EnergyDiagnostics(l2, weak, norms)


def dirichlet_poincare_constant(M: int) -> float:
    """Smallest eigenvalue of the 3-point Dirichlet Laplacian on M - 1 nodes."""
    n = M - 1
    dx2 = (1.0 / M) ** 2
    diag = np.full(n, 2.0 / dx2)
    off = np.full(n - 1, -1.0 / dx2)
    return float(eigh_tridiagonal(diag, off, eigvals_only=True, select="i", select_range=(0, 0))[0])


@dataclass
class DecayResult:
    rate: float
    passed: bool
    worst_ratio: float
    c_lower: float
    delta: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def l2_decay_check(traj: ContinuumTrajectory, c_lower: float | None = None) -> DecayResult:
    """Fit the exponential rate of int u^2 and test the Gronwall envelope.

    Passes iff int u^2(t) <= int u^2(0) exp(-2 c_lower delta t) (1 + 1e-6)
    at every record, delta being the discrete Poincare constant.
    """
    if traj.boundary is not BoundaryKind.DIRICHLET:
        raise PreconditionError("l2 decay needs Dirichlet ends")
    dmin = float(np.min(traj.diffusivity(traj.u)))
    if c_lower is None:
        c_lower = dmin
    if not c_lower > 0.0 or dmin < c_lower * (1.0 - 1e-12):
        raise PreconditionError(f"D must stay >= c_lower > 0 (min D = {dmin:g}, c_lower = {c_lower:g})")
    M = traj.u.shape[1] - 1
    delta = dirichlet_poincare_constant(M)
    t = traj.times - traj.times[0]
    l2 = traj.l2_mass()
    if l2[0] == 0.0:
        return DecayResult(float("nan"), bool(np.all(l2 == 0.0)), 0.0, c_lower, delta)
    envelope = l2[0] * np.exp(-2.0 * c_lower * delta * t) * (1.0 + GRONWALL_SLACK)
    ratio = float(np.max(l2 / envelope))
    keep = l2 > 0
    rate = float(np.polyfit(t[keep], np.log(l2[keep]), 1)[0]) if keep.sum() >= 2 else float("nan")
    return DecayResult(rate, ratio <= 1.0, ratio, c_lower, delta)


@dataclass(frozen=True)
class ProbeMetrics:
    dx: float
    tv_final: float
    osc_amp: float
    steps_completed: int
    completed: bool


PROBE_HEADER = ("dx", "tv_final", "osc_amp", "steps_completed")
NO_LIMIT = "no stable continuum limit observed"
STABLE = "consistent with a stable continuum limit"


def _probe_one(u0, dx, T_probe, theta, bc, diffusivity) -> ProbeMetrics:
    M = int(round(1.0 / dx))
    x = np.linspace(0.0, 1.0, M + 1)
    u = np.asarray(u0(x), dtype=float) * np.ones_like(x)
    if bc is BoundaryKind.DIRICHLET:
        u[0] = u[-1] = 0.0
    h = 1.0 / M
    dt = theta * h * h
    n_steps = max(1, math.ceil(T_probe / dt - 1e-9))
    r = (T_probe / n_steps) / (h * h)
    done = 0
    completed = True
    for _ in range(n_steps):
        new = explicit_flux_step(u, r, diffusivity, bc)
        if not np.all(np.isfinite(new)) or np.abs(new).max() > OVERFLOW:
            completed = False
            break
        u = new
        done += 1
    tv = float(np.abs(np.diff(u)).sum())
    osc = float(np.abs(u[2:] - 2.0 * u[1:-1] + u[:-2]).max())
    return ProbeMetrics(h, tv, osc, done, completed)


def _workers(requested: int | None) -> int:
    cap = os.environ.get("AGGDIFF_THREADS")
    n = requested or os.cpu_count() or 1
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


def refinement_probe(
    u0: Callable[[np.ndarray], np.ndarray],
    dx_list: Sequence[float],
    T_probe: float = 1e-3,
    theta: float = 0.9,
    bc: BoundaryKind = BoundaryKind.DIRICHLET,
    diffusivity: Diffusivity | None = None,
    workers: int | None = None,
) -> list[ProbeMetrics]:
    """Run the explicit scheme at each dx with dt = theta dx^2 up to T_probe.

    No regime check; a run stops early once values blow past 1e6 or turn
    non-finite, and reports the last finite state.  Results come back in
    the order of ``dx_list``.
    """
    bc = BoundaryKind(bc)
    diffusivity = diffusivity or BackwardForward()
    if not dx_list:
        raise ValueError("dx_list is empty")
    args = [(u0, float(dx), T_probe, theta, bc, diffusivity) for dx in dx_list]
    n = min(_workers(workers), len(args))
    if n == 1:
        return [_probe_one(*a) for a in args]
    with ThreadPoolExecutor(n) as pool:
        return list(pool.map(lambda a: _probe_one(*a), args))


def probe_verdict(metrics: Sequence[ProbeMetrics]) -> str:
    """NO_LIMIT iff TV and oscillation both grow strictly as dx shrinks."""
    ordered = sorted(metrics, key=lambda m: -m.dx)
    tv = [m.tv_final for m in ordered]
    osc = [m.osc_amp for m in ordered]
    grows = len(ordered) >= 2 and all(b > a for a, b in zip(tv, tv[1:])) and all(
        b > a for a, b in zip(osc, osc[1:]))
    return NO_LIMIT if grows else STABLE


def lattice_bridge_discrepancy(u: np.ndarray, bc: BoundaryKind = BoundaryKind.NEUMANN) -> tuple[float, float]:
    """Compare one lattice step with the flux update at dt/dx^2 = 1.

    Returns (max |lattice - flux|, max |u_{j+1} - u_j|).  The lattice
    coupling u_{j-1} u_j (u_{j-1} + u_j - 1)/2 differs from D at the pair
    mean by a term quadratic in the jump, so the first number is
    O(second^2).  Neumann ends are the default because pinned zero ends put
    an O(1) jump at the boundary.
    """
    from .lattice import LatticeState, step_aggdiff

    bc = BoundaryKind(bc)
    u = np.asarray(u, dtype=float)
    lattice = step_aggdiff(LatticeState(u, bc)).u
    flux = explicit_flux_step(u, 1.0, BackwardForward(), bc)
    return float(np.abs(lattice - flux).max()), float(np.abs(np.diff(u)).max())


def _fmt(v) -> str:
    return format(float(v), ".17g")


def write_trajectory_csv(traj: ContinuumTrajectory, path) -> None:
    M = traj.u.shape[1] - 1
    with open(path, "w", newline="") as fh:
        fh.write(",".join(["t"] + [f"x_{j}" for j in range(M + 1)]) + "\n")
        for t, row in zip(traj.times, traj.u):
            fh.write(",".join([_fmt(t)] + [_fmt(v) for v in row]) + "\n")


def write_probe_csv(metrics: Sequence[ProbeMetrics], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(PROBE_HEADER) + "\n")
        for m in metrics:
            fh.write(f"{_fmt(m.dx)},{_fmt(m.tv_final)},{_fmt(m.osc_amp)},{m.steps_completed}\n")
