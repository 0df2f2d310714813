"""Asymptotic pattern taxonomy of the five-node lattice (three interior sites).

A triple (u1, u2, u3) is the interior of the Dirichlet lattice
(0, u1, u2, u3, 0).  The two pair sums s12 = u1 + u2 and s23 = u2 + u3 decide
whether each edge aggregates (< 1) or diffuses (> 1); the position of the
minimum/maximum and the total mass then select a subcase with a predicted
long-time limit.  Boundary ties (a pair sum within ``EQ_TOL`` of 1) count as
"< 1" unless the triple is one of the steady states of case 5.
"""
from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DomainError, InconsistentCaseError, NotConvergedError
from .lattice import AggDiff, LatticeState, _aggdiff_next, equilibrate

EQ_TOL = 1e-12
MATCH_TOL = 1e-3
DEFAULT_EPS_STOP = 1e-13
DEFAULT_MAX_STEPS = 10**7


class CaseId(str, Enum):
    C1S1 = "C1S1"
    C1S2 = "C1S2"
    C1S3 = "C1S3"
    C1S4 = "C1S4"
    C2S1 = "C2S1"
    C2S2 = "C2S2"
    C2S3 = "C2S3"
    C2S4 = "C2S4"
    C3S1 = "C3S1"
    C3S2 = "C3S2"
    C3S3 = "C3S3"
    C4_MIRROR = "C4_mirror"
    C5_STEADY = "C5_steady"
    INDETERMINATE = "Indeterminate"


# the image of each label under u1 <-> u3
MIRROR = {
    CaseId.C2S2: CaseId.C2S3,
    CaseId.C2S3: CaseId.C2S2,
    CaseId.C3S1: CaseId.C4_MIRROR,
    CaseId.C3S2: CaseId.C4_MIRROR,
    CaseId.C3S3: CaseId.C4_MIRROR,
}


@dataclass(frozen=True)
class PatternCase:
    case_id: CaseId
    conditions_met: tuple[str, ...] = ()
    # subcase of the reversed triple, for C4_mirror
    mirrored: CaseId | None = None
    # True when u1 plays the role the taxonomy gives to u3
    reversed_orientation: bool = False


class LimitKind(str, Enum):
    EXACT = "ExactVector"
    CONSTRAINED = "ConstrainedSet"
    SIMULATE = "SimulateToResolve"


@dataclass(frozen=True)
class PredictedLimit:
    """Admissible long-time states for a triple of total mass ``mass``.

    ``vectors`` are exact admissible limits.  ``families`` name constrained
    sets: ``"middle_zero"`` is {(a, 0, mass - a)}, ``"fixed_point"`` is any
    mass-conserving fixed point of the map.
    """

    kind: LimitKind
    mass: float
    vectors: tuple[tuple[float, float, float], ...] = ()
    families: tuple[str, ...] = ()
    description: str = ""

    def distance(self, v) -> float:
        """Sup-norm distance from ``v`` to the nearest admissible state."""
        v = np.asarray(v, dtype=float)
        best = np.inf
        for w in self.vectors:
            best = min(best, float(np.abs(v - np.asarray(w)).max()))
        for name in self.families:
            best = min(best, _family_distance(name, v, self.mass))
        return best

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "mass": self.mass,
            "vectors": [list(w) for w in self.vectors],
            "families": list(self.families),
            "description": self.description,
        }


def _family_distance(name: str, v: np.ndarray, mass: float) -> float:
    if name == "middle_zero":
        # nearest point of {(a, 0, m - a) : 0 <= a <= m}
        a = np.clip((v[0] - v[2] + mass) / 2.0, 0.0, mass)
        return float(np.abs(v - np.array([a, 0.0, mass - a])).max())
    if name == "fixed_point":
        u = np.concatenate([[0.0], v, [0.0]])
        residual = np.abs(_aggdiff_next(u, LatticeState(u).boundary) - u).max()
        return max(float(residual), abs(float(v.sum()) - mass))
    if name == "balanced_end":
        # nearest point of {(0, b, 1 - b)} or {(1 - b, b, 0)}, b in [0, 1]
        b = np.clip((v[1] - v[2] + 1.0) / 2.0, 0.0, 1.0)
        right = float(np.abs(v - np.array([0.0, b, 1.0 - b])).max())
        b = np.clip((v[1] - v[0] + 1.0) / 2.0, 0.0, 1.0)
        left = float(np.abs(v - np.array([1.0 - b, b, 0.0])).max())
        return min(right, left)
    raise ValueError(f"unknown family {name!r}")


def _check_triple(u1, u2, u3):
    for v in (u1, u2, u3):
        if not (np.isfinite(v) and 0.0 <= v <= 1.0):
            raise DomainError(f"densities must lie in [0, 1], got {(u1, u2, u3)}")


def _eq(a, b) -> bool:
    return abs(a - b) <= EQ_TOL


def _edge_at_rest(a, b) -> bool:
    # C(a, b) (b - a) vanishes
    return _eq(a, 0.0) or _eq(b, 0.0) or _eq(a + b, 1.0) or _eq(a, b)


def is_steady(u1, u2, u3) -> bool:
    """True when (0, u1, u2, u3, 0) is an exact fixed point of the map.

    Includes u1 + u2 = 1 with u2 = u3, its mirror image, constant triples and
    configurations split by an empty site.
    """
    return _edge_at_rest(u1, u2) and _edge_at_rest(u2, u3)


def classify(u1: float, u2: float, u3: float) -> PatternCase:
    """Case label of the initial interior (u1, u2, u3)."""
    _check_triple(u1, u2, u3)
    s12, s23, m = u1 + u2, u2 + u3, u1 + u2 + u3
    conds = [f"u1+u2={s12:.12g}", f"u2+u3={s23:.12g}", f"mass={m:.12g}"]
    if is_steady(u1, u2, u3):
        return PatternCase(CaseId.C5_STEADY, tuple(conds + ["no flux across either edge"]))
    left_diffuses = s12 > 1.0 + EQ_TOL
    right_diffuses = s23 > 1.0 + EQ_TOL
    conds += [f"u1+u2>1: {left_diffuses}", f"u2+u3>1: {right_diffuses}"]
    middle_min = u2 <= min(u1, u3)
    middle_max = u2 >= max(u1, u3)

    if not left_diffuses and not right_diffuses:
        if middle_min:
            return PatternCase(CaseId.C1S1, tuple(conds + ["u2 is the minimum"]))
        if middle_max:
            if m <= 1.0 + EQ_TOL:
                return PatternCase(CaseId.C1S2, tuple(conds + ["u2 is the maximum", "mass<1"]))
            return PatternCase(CaseId.INDETERMINATE, tuple(conds + ["u2 is the maximum", "mass>=1"]))
        # strictly monotone through the middle
        rev = u1 > u3
        label = CaseId.C1S3 if m <= 1.0 + EQ_TOL else CaseId.C1S4
        order = "u1>u2>u3" if rev else "u3>u2>u1"
        return PatternCase(label, tuple(conds + [order, f"mass<1: {m < 1.0}"]), reversed_orientation=rev)

    if left_diffuses and right_diffuses:
        if middle_min:
            return PatternCase(CaseId.C2S1, tuple(conds + ["u2 is the minimum"]))
        if middle_max:
            return PatternCase(CaseId.C2S4, tuple(conds + ["u2 is the maximum"]))
        if u3 > u1:
            return PatternCase(CaseId.C2S2, tuple(conds + ["u3>u2>u1"]))
        return PatternCase(CaseId.C2S3, tuple(conds + ["u3<u2<u1"]), reversed_orientation=True)

    if right_diffuses:
        return _classify_case3(u1, u2, u3, conds)

    inner = _classify_case3(u3, u2, u1, [])
    if inner.case_id is CaseId.INDETERMINATE:
        return PatternCase(CaseId.INDETERMINATE, tuple(conds + ["mirror: u2<=1/2 and u2<=u3"]))
    return PatternCase(
        CaseId.C4_MIRROR,
        tuple(conds + [f"mirror of {inner.case_id.value} on (u3, u2, u1)"] + list(inner.conditions_met)),
        mirrored=inner.case_id,
        reversed_orientation=True,
    )


def _classify_case3(u1, u2, u3, conds) -> PatternCase:
    # u1 + u2 <= 1 < u2 + u3
    if u2 >= u3:
        return PatternCase(CaseId.C3S1, tuple(conds + ["u2>=u3"]))
    if u2 > 0.5 + EQ_TOL:
        return PatternCase(CaseId.C3S2, tuple(conds + ["u3>u2>1/2"]))
    if u2 > u1:
        return PatternCase(CaseId.C3S3, tuple(conds + ["u3>1/2>=u2>u1"]))
    return PatternCase(CaseId.INDETERMINATE, tuple(conds + ["u2<=1/2 and u2<=u1"]))


def _uniform(m):
    return (m / 3.0, m / 3.0, m / 3.0)


def _reverse(vectors):
    return tuple(tuple(reversed(w)) for w in vectors)


def predict(case: PatternCase, u1: float, u2: float, u3: float) -> PredictedLimit:
    """Admissible limits for a classified triple."""
    _check_triple(u1, u2, u3)
    actual = classify(u1, u2, u3)
    if actual.case_id != case.case_id:
        raise InconsistentCaseError(
            f"{case.case_id.value} does not describe {(u1, u2, u3)} ({actual.case_id.value})"
        )
    m = u1 + u2 + u3
    cid = case.case_id
    rev = actual.reversed_orientation

    if cid is CaseId.C5_STEADY:
        return PredictedLimit(LimitKind.EXACT, m, ((u1, u2, u3),), description="steady state")
    if cid is CaseId.C1S1:
        return PredictedLimit(LimitKind.CONSTRAINED, m, families=("middle_zero",),
                              description="u2 -> 0, u1 + u3 = mass")
    # at mass = 1 an end site can empty while the other pair balances at sum 1
    tie = ("balanced_end",) if _eq(m, 1.0) else ()
    if cid is CaseId.C1S2:
        kind = LimitKind.SIMULATE if tie else LimitKind.EXACT
        return PredictedLimit(kind, m, ((0.0, m, 0.0),), families=tie, description="all mass to u2")
    if cid is CaseId.C1S3:
        vec = ((m, 0.0, 0.0),) if rev else ((0.0, 0.0, m),)
        return PredictedLimit(LimitKind.SIMULATE, m, vec + ((0.0, m, 0.0),), families=("middle_zero",) + tie,
                              description="all mass to the largest end site, unless u2 becomes extremal")
    if cid is CaseId.C1S4:
        pair = ((0.0, m / 2, m / 2),)
        return PredictedLimit(
            LimitKind.SIMULATE, m, (_reverse(pair) if rev else pair) + (_uniform(m),),
            families=("middle_zero",), description="resolved dynamically",
        )
    if cid in (CaseId.C2S1, CaseId.C2S2, CaseId.C2S3):
        return PredictedLimit(LimitKind.EXACT, m, (_uniform(m),), description="uniform mass/3")
    if cid is CaseId.C2S4:
        # (m-1, 2-m, m-1): both edges balance at sum 1, reached from symmetric data
        vectors = (_uniform(m), (0.0, m / 2, m / 2), (m / 2, m / 2, 0.0), (m - 1.0, 2.0 - m, m - 1.0))
        return PredictedLimit(LimitKind.SIMULATE, m, vectors,
                              description="uniform mass/3, a mass/2 pair, or both edges balanced")
    if cid in (CaseId.C3S1, CaseId.C3S2, CaseId.C3S3):
        return _predict_case3(cid, m)
    if cid is CaseId.C4_MIRROR:
        inner = _predict_case3(actual.mirrored, m)
        return PredictedLimit(inner.kind, m, _reverse(inner.vectors), inner.families,
                              "mirror: " + inner.description)
    return PredictedLimit(LimitKind.SIMULATE, m, families=("fixed_point",),
                          description="outside the taxonomy; any mass-conserving fixed point")


def _predict_case3(cid: CaseId, m: float) -> PredictedLimit:
    pair = (0.0, m / 2, m / 2)
    # the uniform state m/3 is a stable limit only inside the diffusion regime
    uniform_reachable = m / 3.0 >= 0.5
    if cid is CaseId.C3S3 or uniform_reachable:
        vectors = (pair, _uniform(m)) if uniform_reachable else (pair,)
        kind = LimitKind.SIMULATE if cid is CaseId.C3S3 or len(vectors) > 1 else LimitKind.EXACT
        families = ("middle_zero",) if cid is CaseId.C3S3 else ()
        if cid is CaseId.C3S3 and not uniform_reachable:
            vectors = vectors + (_uniform(m),)
        return PredictedLimit(kind, m, vectors, families,
                              description="mass/2 pair, or uniform mass/3 once u1+u2 exceeds 1")
    return PredictedLimit(LimitKind.EXACT, m, (pair,), description="u1 -> 0, u2 = u3 = mass/2")


@dataclass
class VerificationReport:
    triple: tuple[float, float, float]
    case: PatternCase
    predicted: PredictedLimit
    simulated: tuple[float, float, float]
    matched: bool
    mismatch_norm: float
    steps: int
    flag: str | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "triple": list(self.triple),
            "case_id": self.case.case_id.value,
            "conditions_met": list(self.case.conditions_met),
            "predicted": self.predicted.to_dict(),
            "simulated": list(self.simulated),
            "matched": self.matched,
            "mismatch_norm": self.mismatch_norm,
            "steps": self.steps,
            "flag": self.flag,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def _assemble(triple, final, steps, tol) -> VerificationReport:
    case = classify(*triple)
    predicted = predict(case, *triple)
    final = tuple(float(x) for x in final)
    dist = predicted.distance(final)
    matched = dist <= tol
    flag = None
    if not matched and predicted.kind is LimitKind.SIMULATE:
        flag = CaseId.INDETERMINATE.value
    return VerificationReport(tuple(float(x) for x in triple), case, predicted, final,
                              matched, dist, int(steps), flag)


def verify(u1, u2, u3, eps_stop=DEFAULT_EPS_STOP, max_steps=DEFAULT_MAX_STEPS,
           tol=MATCH_TOL) -> VerificationReport:
    """Simulate (0, u1, u2, u3, 0) to equilibrium and compare with the prediction."""
    _check_triple(u1, u2, u3)
    state = LatticeState.from_interior([u1, u2, u3])
    final, converged, taken = equilibrate(state, AggDiff(), eps_stop, max_steps)
    if not converged:
        raise NotConvergedError(f"{(u1, u2, u3)} did not settle within {max_steps} steps")
    return _assemble((u1, u2, u3), final.interior, taken, tol)


LIMIT_CLASSES = ("steady", "uniform", "pair_right", "pair_left", "center", "right", "left",
                 "middle_zero", "zero", "other")


def limit_class(v, mass: float, tol: float = MATCH_TOL) -> str:
    """Coarse shape label of a limit vector of total ``mass``."""
    v = np.asarray(v, dtype=float)
    if mass <= tol:
        return "zero"
    shapes = {
        "uniform": _uniform(mass),
        "pair_right": (0.0, mass / 2, mass / 2),
        "pair_left": (mass / 2, mass / 2, 0.0),
        "center": (0.0, mass, 0.0),
        "right": (0.0, 0.0, mass),
        "left": (mass, 0.0, 0.0),
    }
    for name, w in shapes.items():
        if np.abs(v - np.asarray(w)).max() <= tol:
            return name
    if abs(v[1]) <= tol:
        return "middle_zero"
    return "other"


CATALOG_HEADER = ("u1", "u2", "u3", "case_id", "limit_class", "l1", "l2", "l3", "matched")


@dataclass
class CatalogRow:
    triple: tuple[float, float, float]
    case_id: str
    limit_class: str
    limit: tuple[float, float, float]
    matched: bool
    converged: bool
    mass_drift: float


def _sweep_chunk(args):
    triples, eps_stop, max_steps, tol = args
    state = LatticeState.from_interior(np.asarray(triples, dtype=float))
    final, converged, taken = equilibrate(state, AggDiff(), eps_stop, max_steps)
    rows = []
    for t, u, ok, n in zip(triples, final.interior, converged, taken):
        report = _assemble(t, u, n, tol)
        mass = sum(t)
        if ok:
            cls = "steady" if n == 0 else limit_class(u, mass, tol)
        else:
            cls = "not_converged"
        rows.append(CatalogRow(
            tuple(t), report.case.case_id.value, cls, report.simulated,
            bool(ok) and report.matched, bool(ok), abs(float(u.sum()) - mass),
        ))
    return rows


def sweep_grid(resolution: int) -> list[tuple[float, float, float]]:
    """Grid {i/resolution}^3 in lexicographic (u1, u2, u3) order."""
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    axis = [i / resolution for i in range(resolution + 1)]
    return [(a, b, c) for a in axis for b in axis for c in axis]


def sweep(resolution: int, eps_stop=DEFAULT_EPS_STOP, max_steps=10**6, tol=MATCH_TOL,
          workers: int = 1) -> list[CatalogRow]:
    """Verify every grid triple; rows come back in grid order regardless of ``workers``."""
    triples = sweep_grid(resolution)
    workers = max(1, int(workers))
    chunks = [triples[i::workers] for i in range(workers)]
    jobs = [(c, eps_stop, max_steps, tol) for c in chunks if c]
    if workers == 1 or len(jobs) == 1:
        parts = [_sweep_chunk(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_sweep_chunk, jobs))
    rows = [None] * len(triples)
    for offset, part in enumerate(parts):
        for k, row in enumerate(part):
            rows[offset + k * workers] = row
    return rows
