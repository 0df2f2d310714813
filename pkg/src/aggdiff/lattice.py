"""Aggregation-diffusion lattice model and its constant-probability counterpart.

The aggregation-diffusion map updates every interior site synchronously::

    u_j <- u_j + C_j (u_{j-1} - u_j) + C_{j+1} (u_{j+1} - u_j)
    C_j  = (u_j u_{j-1} / 2) (u_j + u_{j-1} - 1)

which is the master equation of a random walk whose jump probability
toward a neighbour of density v is K(v) = (v**2 - v**3) / 2.  The time step
``tau`` never enters the arithmetic; it only converts step counts into time.

Arrays of shape ``(..., N + 1)`` are accepted throughout: leading axes are
treated as a batch of independent lattices.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from typing import NamedTuple, Union

import numpy as np

from . import _kernels
from .errors import DomainError

RANGE_SLACK = 1e-12


class BoundaryKind(str, Enum):
    DIRICHLET = "dirichlet"  # u_0 = u_N = 0
    NEUMANN = "neumann"  # ghosts u_{-1} = u_1, u_{N+1} = u_{N-1}


@dataclass(frozen=True)
class AggDiff:
    """Density-dependent jump probability K(u) = (u**2 - u**3) / 2."""

    name = "aggdiff"


@dataclass(frozen=True)
class ConstantProb:
    """Stay with probability ``p``, jump left/right with (1 - p) / 2 each."""

    p: float
    name = "heat"

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise DomainError(f"probability p={self.p} outside [0, 1]")


TransferKernel = Union[AggDiff, ConstantProb]


def _check_density(u):
    arr = np.asarray(u, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise DomainError("density outside [0, 1]")
    return arr


def _scalar_or_array(x):
    return float(x) if np.ndim(x) == 0 else x


def transfer_probability(u):
    """K(u) = (u^2 - u^3)/2, the probability of moving toward density u.

    Maximal (2/27) at u = 2/3 and zero at both ends of [0, 1].
    """
    u = _check_density(u)
    return _scalar_or_array((u * u - u * u * u) / 2.0)


def transfer_probability_derivative(u):
    u = _check_density(u)
    return _scalar_or_array((2.0 * u - 3.0 * u * u) / 2.0)


def diffusion_coefficient(u):
    """Signed diffusivity D(u) = u^2 (u - 1/2) = K(u) - u K'(u).

    Negative on (0, 1/2), where the continuum limit aggregates.
    """
    u = _check_density(u)
    return _scalar_or_array(u * u * (u - 0.5))


@dataclass(frozen=True)
class LatticeState:
    """Densities ``u[0..N]`` after ``step_count`` steps.

    ``u`` may carry leading batch axes; the last axis is the lattice.
    """

    u: np.ndarray
    boundary: BoundaryKind = BoundaryKind.DIRICHLET
    step_count: int = 0
    tau: float = 0.1

    def __post_init__(self):
        u = np.array(self.u, dtype=float)
        if u.ndim == 0 or u.shape[-1] < 3:
            raise DomainError("a lattice needs N >= 2 (at least three nodes)")
        if np.any(~np.isfinite(u)):
            raise DomainError("non-finite density")
        if u.min() < -RANGE_SLACK or u.max() > 1.0 + RANGE_SLACK:
            raise DomainError("density outside [0, 1]")
        boundary = BoundaryKind(self.boundary)
        if boundary is BoundaryKind.DIRICHLET and (
            np.any(u[..., 0] != 0.0) or np.any(u[..., -1] != 0.0)
        ):
            raise DomainError("Dirichlet states must have u[0] = u[N] = 0")
        if self.step_count < 0:
            raise DomainError("step_count must be nonnegative")
        u.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "boundary", boundary)

    @property
    def N(self) -> int:
        return self.u.shape[-1] - 1

    @property
    def interior(self) -> np.ndarray:
        return self.u[..., 1:-1]

    @property
    def time(self) -> float:
        return self.step_count * self.tau

    @classmethod
    def from_interior(cls, values, boundary=BoundaryKind.DIRICHLET, tau=0.1):
        """Wrap interior values ``u_1..u_{N-1}``.

        Dirichlet pads with zeros; Neumann pads by copying the adjacent value.
        """
        values = np.asarray(values, dtype=float)
        boundary = BoundaryKind(boundary)
        pad = ((0, 0),) * (values.ndim - 1) + ((1, 1),)
        if boundary is BoundaryKind.DIRICHLET:
            u = np.pad(values, pad, constant_values=0.0)
        else:
            u = np.pad(values, pad, mode="edge")
        return cls(u, boundary, 0, tau)

    @classmethod
    def sample(cls, func, N: int, boundary=BoundaryKind.DIRICHLET, tau=0.1):
        """Sample ``func`` at x_j = j/N; Dirichlet endpoints are then zeroed."""
        x = np.arange(N + 1) / N
        u = np.asarray(func(x), dtype=float) * np.ones_like(x)
        if BoundaryKind(boundary) is BoundaryKind.DIRICHLET:
            u[0] = u[-1] = 0.0
        return cls(u, boundary, 0, tau)


def sine_profile(amplitude: float, offset: float, frequency: float):
    """x -> offset + amplitude * sin(frequency * pi * x)."""

    def profile(x):
        return offset + amplitude * np.sin(frequency * np.pi * np.asarray(x))

    return profile


def coupling_coefficients(state: LatticeState) -> np.ndarray:
    """Edge couplings ``c[..., j-1] = C_j`` for j = 1..N.

    C_j lies in [-1/8, 1/2] for densities in [0, 1], and in [0, 1/2] when
    both endpoints of the edge are at least 1/2.
    """
    a = state.u[..., :-1]
    b = state.u[..., 1:]
    return 0.5 * a * b * (a + b - 1.0)


def _aggdiff_next(u: np.ndarray, boundary: BoundaryKind) -> np.ndarray:
    a = u[..., :-1]
    c = u[..., 1:]
    # same operation order as the compiled kernel
    flux = 0.5 * a * c * (a + c - 1.0) * (c - a)
    new = u.copy()
    new[..., 1:-1] = u[..., 1:-1] - flux[..., :-1] + flux[..., 1:]
    if boundary is BoundaryKind.NEUMANN:
        new[..., 0] = u[..., 0] + 2.0 * flux[..., 0]
        new[..., -1] = u[..., -1] - 2.0 * flux[..., -1]
    return new


def _heat_next(u: np.ndarray, p: float, boundary: BoundaryKind) -> np.ndarray:
    q = 0.5 * (1.0 - p)
    new = u.copy()
    new[..., 1:-1] = p * u[..., 1:-1] + q * (u[..., :-2] + u[..., 2:])
    if boundary is BoundaryKind.NEUMANN:
        new[..., 0] = p * u[..., 0] + q * (u[..., 1] + u[..., 1])
        new[..., -1] = p * u[..., -1] + q * (u[..., -2] + u[..., -2])
    return new


def _advanced(state: LatticeState, u: np.ndarray, steps: int = 1) -> LatticeState:
    return replace(state, u=u, step_count=state.step_count + steps)


def step_aggdiff(state: LatticeState) -> LatticeState:
    """One synchronous step of the aggregation-diffusion map."""
    return _advanced(state, _aggdiff_next(state.u, state.boundary))


def step_heat(state: LatticeState, p: float) -> LatticeState:
    """One step of the constant-probability (discrete heat) lattice."""
    ConstantProb(p)
    return _advanced(state, _heat_next(state.u, p, state.boundary))


def step(state: LatticeState, kernel: TransferKernel) -> LatticeState:
    if isinstance(kernel, ConstantProb):
        return step_heat(state, kernel.p)
    return step_aggdiff(state)


def _kernel_args(kernel: TransferKernel):
    if isinstance(kernel, ConstantProb):
        return _kernels.HEAT, float(kernel.p)
    return _kernels.AGGDIFF, 0.0


def interior_mass(u: np.ndarray):
    """Compensated (fsum) sum of ``u[..., 1:-1]``."""
    interior = np.asarray(u)[..., 1:-1]
    if interior.ndim == 1:
        return math.fsum(interior)
    out = np.empty(interior.shape[:-1])
    for idx in np.ndindex(out.shape):
        out[idx] = math.fsum(interior[idx])
    return out


def interior_total_variation(u: np.ndarray):
    return np.abs(np.diff(np.asarray(u)[..., 1:-1], axis=-1)).sum(axis=-1)


class Observables(NamedTuple):
    mass: float
    total_variation: float
    min: float
    max: float


def observables(state: LatticeState) -> Observables:
    """Interior mass, interior total variation, interior min and max."""
    inner = state.interior
    return Observables(
        _scalar_or_array(interior_mass(state.u)),
        _scalar_or_array(interior_total_variation(state.u)),
        _scalar_or_array(inner.min(axis=-1)),
        _scalar_or_array(inner.max(axis=-1)),
    )


@dataclass
class Trajectory:
    """Recorded snapshots of a lattice run.

    ``u`` has shape ``(n_snapshots, *batch, N + 1)``.  ``envelope_min`` and
    ``envelope_max``, when present, hold the interior extremes over *every*
    step of the run (not only the recorded ones), per batch member.
    """

    steps: np.ndarray
    u: np.ndarray
    boundary: BoundaryKind = BoundaryKind.DIRICHLET
    kernel: TransferKernel = field(default_factory=AggDiff)
    tau: float = 0.1
    converged: object = None
    envelope_min: np.ndarray | None = None
    envelope_max: np.ndarray | None = None

    def __post_init__(self):
        self.steps = np.asarray(self.steps, dtype=np.int64)
        self.u = np.asarray(self.u, dtype=float)
        self.boundary = BoundaryKind(self.boundary)
        if self.u.shape[:1] != self.steps.shape:
            raise ValueError("one step index per snapshot is required")
        if np.any(np.diff(self.steps) <= 0):
            raise ValueError("snapshot step indices must be strictly increasing")

    def __len__(self):
        return len(self.steps)

    @property
    def times(self) -> np.ndarray:
        return self.steps * self.tau

    @property
    def N(self) -> int:
        return self.u.shape[-1] - 1

    @cached_property
    def mass(self) -> np.ndarray:
        return np.asarray(interior_mass(self.u))

    @cached_property
    def total_variation(self) -> np.ndarray:
        return interior_total_variation(self.u)

    @property
    def min(self) -> np.ndarray:
        return self.u[..., 1:-1].min(axis=-1)

    @property
    def max(self) -> np.ndarray:
        return self.u[..., 1:-1].max(axis=-1)

    def state(self, index: int = -1) -> LatticeState:
        return LatticeState(self.u[index], self.boundary, int(self.steps[index]), self.tau)

    @classmethod
    def from_endpoints(cls, initial: LatticeState, final: LatticeState, kernel, converged):
        """Two-snapshot trajectory (initial and equilibrium state)."""
        steps = [initial.step_count]
        u = [initial.u]
        if final.step_count > initial.step_count:
            steps.append(final.step_count)
            u.append(final.u)
        return cls(np.array(steps), np.array(u), initial.boundary, kernel, initial.tau, converged)


def run(
    state: LatticeState,
    kernel: TransferKernel,
    steps: int,
    record_every: int = 1,
) -> Trajectory:
    """Iterate ``steps`` steps, recording every ``record_every`` steps.

    The trajectory holds ``steps // record_every + 1`` snapshots; the run
    stops at the last recorded step.
    """
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    if record_every < 1:
        raise ValueError("record_every must be at least 1")
    n_records = steps // record_every
    batch_shape = state.u.shape[:-1]
    work = np.ascontiguousarray(state.u.reshape(-1, state.N + 1)).copy()
    snapshots = np.empty((n_records + 1,) + work.shape)
    snapshots[0] = work
    lo = work[:, 1:-1].min(axis=1)
    hi = work[:, 1:-1].max(axis=1)
    kind, p = _kernel_args(kernel)
    neumann = state.boundary is BoundaryKind.NEUMANN
    for k in range(1, n_records + 1):
        _kernels.advance(work, record_every, kind, p, neumann, lo, hi)
        snapshots[k] = work
    shape = (n_records + 1,) + batch_shape + (state.N + 1,)
    return Trajectory(
        steps=state.step_count + record_every * np.arange(n_records + 1),
        u=snapshots.reshape(shape),
        boundary=state.boundary,
        kernel=kernel,
        tau=state.tau,
        envelope_min=lo.reshape(batch_shape),
        envelope_max=hi.reshape(batch_shape),
    )


def run_to_equilibrium(
    state: LatticeState,
    kernel: TransferKernel,
    eps_stop: float = 1e-13,
    max_steps: int = 10**7,
):
    """Step until ``max_j |u_j(t+1) - u_j(t)| < eps_stop`` or the budget runs out.

    Returns ``(final_state, converged)``.  Batch members run independently;
    ``converged`` is then a boolean array and ``step_count`` is that of the
    slowest member (use :func:`equilibrate` for per-member counts).
    """
    final, converged, _ = equilibrate(state, kernel, eps_stop, max_steps)
    return final, converged


def equilibrate(state: LatticeState, kernel: TransferKernel, eps_stop=1e-13, max_steps=10**7):
    """Like :func:`run_to_equilibrium` but also returns per-member step counts."""
    if eps_stop <= 0:
        raise ValueError("eps_stop must be positive")
    batch_shape = state.u.shape[:-1]
    work = np.ascontiguousarray(state.u.reshape(-1, state.N + 1)).copy()
    taken = np.zeros(work.shape[0], dtype=np.int64)
    converged = np.zeros(work.shape[0], dtype=np.bool_)
    kind, p = _kernel_args(kernel)
    _kernels.equilibrate(
        work, float(eps_stop), int(max_steps), kind, p,
        state.boundary is BoundaryKind.NEUMANN, taken, converged,
    )
    final = _advanced(state, work.reshape(state.u.shape), int(taken.max()))
    if not batch_shape:
        return final, bool(converged[0]), int(taken[0])
    return final, converged.reshape(batch_shape), taken.reshape(batch_shape)
