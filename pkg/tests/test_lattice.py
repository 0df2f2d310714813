import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aggdiff.errors import DomainError
from aggdiff.lattice import (
    AggDiff,
    BoundaryKind,
    ConstantProb,
    LatticeState,
    Trajectory,
    coupling_coefficients,
    diffusion_coefficient,
    equilibrate,
    interior_mass,
    observables,
    run,
    run_to_equilibrium,
    sine_profile,
    step,
    step_aggdiff,
    step_heat,
    transfer_probability,
    transfer_probability_derivative,
)

D, N_ = BoundaryKind.DIRICHLET, BoundaryKind.NEUMANN


def oracle_aggdiff(u, neumann=False):
    """Term-by-term evaluation of the update in plain Python."""
    u = [float(v) for v in u]
    n = len(u) - 1
    ext = [u[1]] + u + [u[n - 1]] if neumann else [0.0] + u + [0.0]

    def C(j):  # coupling between ext[j-1] and ext[j]
        return ext[j] * ext[j - 1] / 2 * (ext[j] + ext[j - 1] - 1)

    out = []
    for j in range(1, n + 2):
        out.append(ext[j] + C(j) * (ext[j - 1] - ext[j]) + C(j + 1) * (ext[j + 1] - ext[j]))
    if not neumann:
        out[0] = out[-1] = 0.0
    return out


def oracle_heat(u, p, neumann=False):
    u = [float(v) for v in u]
    n = len(u) - 1
    ext = [u[1]] + u + [u[n - 1]] if neumann else [0.0] + u + [0.0]
    out = [p * ext[j] + (1 - p) / 2 * (ext[j - 1] + ext[j + 1]) for j in range(1, n + 2)]
    if not neumann:
        out[0] = out[-1] = 0.0
    return out


interiors = st.lists(st.floats(0.0, 1.0), min_size=1, max_size=12)


class TestKernels:
    def test_transfer_probability_values(self):
        assert transfer_probability(0.0) == 0.0
        assert transfer_probability(1.0) == 0.0
        assert transfer_probability(2 / 3) == pytest.approx(2 / 27, abs=1e-16)

    def test_transfer_probability_peak(self):
        grid = np.linspace(0, 1, 100001)
        k = transfer_probability(grid)
        assert grid[np.argmax(k)] == pytest.approx(2 / 3, abs=1e-5)

    def test_diffusion_coefficient_values(self):
        assert diffusion_coefficient(0.5) == 0.0
        assert diffusion_coefficient(1.0) == 0.5
        assert diffusion_coefficient(0.25) < 0

    def test_d_equals_k_minus_u_kprime(self):
        u = np.linspace(0, 1, 1001)
        lhs = diffusion_coefficient(u)
        rhs = transfer_probability(u) - u * transfer_probability_derivative(u)
        assert np.max(np.abs(lhs - rhs)) <= 1e-15

    def test_scalars_come_back_as_float(self):
        assert type(diffusion_coefficient(0.7)) is float

    @pytest.mark.parametrize("bad", [-0.1, 1.1, float("nan")])
    def test_domain(self, bad):
        with pytest.raises(DomainError):
            transfer_probability(bad)
        with pytest.raises(DomainError):
            diffusion_coefficient(bad)

    def test_constant_prob_validates(self):
        with pytest.raises(DomainError):
            ConstantProb(1.5)


class TestState:
    def test_dirichlet_ends_must_be_zero(self):
        with pytest.raises(DomainError):
            LatticeState([0.1, 0.5, 0.0])

    def test_rejects_out_of_range(self):
        with pytest.raises(DomainError):
            LatticeState([0.0, 1.2, 0.0])
        with pytest.raises(DomainError):
            LatticeState([0.0, np.inf, 0.0])

    def test_needs_three_nodes(self):
        with pytest.raises(DomainError):
            LatticeState([0.0, 0.0])

    def test_read_only(self):
        s = LatticeState([0.0, 0.5, 0.0])
        with pytest.raises(ValueError):
            s.u[1] = 0.2

    def test_sample_zeroes_dirichlet_ends(self):
        s = LatticeState.sample(sine_profile(0.25, 0.75, 10), 500)
        assert s.u[0] == s.u[-1] == 0.0
        x = 3 / 500
        assert s.u[3] == pytest.approx(0.75 + 0.25 * math.sin(10 * math.pi * x), abs=1e-15)

    def test_time_is_a_label(self):
        s = LatticeState.from_interior([0.4, 0.3, 0.6], tau=0.25)
        s2 = run(s, AggDiff(), 4).state()
        assert s2.time == pytest.approx(1.0)
        s3 = run(LatticeState.from_interior([0.4, 0.3, 0.6], tau=7.0), AggDiff(), 4).state()
        assert np.array_equal(s2.u, s3.u)


class TestCoupling:
    def test_half(self):
        c = coupling_coefficients(LatticeState(np.full(6, 0.5), N_))
        assert np.all(c == 0)

    def test_ones(self):
        c = coupling_coefficients(LatticeState(np.ones(6), N_))
        assert np.all(c == 0.5)

    def test_hand_value(self):
        c = coupling_coefficients(LatticeState([0, 0.4, 0.3, 0.6, 0]))
        assert c[1] == pytest.approx(-0.018, abs=1e-16)
        assert c[0] == 0.0 and c[-1] == 0.0


class TestStep:
    def test_hand_example(self):
        out = step_aggdiff(LatticeState([0, 0.4, 0.3, 0.6, 0])).u
        np.testing.assert_allclose(out, [0, 0.4018, 0.2955, 0.6027, 0], atol=5e-5)
        np.testing.assert_allclose(out, oracle_aggdiff([0, 0.4, 0.3, 0.6, 0]), atol=1e-16)
        assert math.fsum(out) == pytest.approx(1.3, abs=1e-15)

    def test_case5_fixed(self):
        s = LatticeState([0, 0.4, 0.6, 0.6, 0])
        assert np.array_equal(step_aggdiff(s).u, s.u)

    def test_single_interior_point_fixed(self):
        s = LatticeState([0, 0.7, 0])
        assert np.array_equal(step_aggdiff(s).u, s.u)

    @given(st.floats(0, 1), st.integers(2, 20))
    def test_neumann_constant_fixed(self, c, n):
        s = LatticeState(np.full(n + 1, c), N_)
        assert np.array_equal(step_aggdiff(s).u, s.u)

    @given(interiors)
    def test_matches_oracle_dirichlet(self, vals):
        s = LatticeState.from_interior(vals)
        np.testing.assert_allclose(step_aggdiff(s).u, oracle_aggdiff(s.u), atol=1e-15)

    @given(st.lists(st.floats(0.0, 1.0), min_size=3, max_size=12))
    def test_matches_oracle_neumann(self, vals):
        s = LatticeState(vals, N_)
        np.testing.assert_allclose(step_aggdiff(s).u, oracle_aggdiff(vals, True), atol=1e-15)

    @given(interiors)
    def test_per_step_conservation(self, vals):
        s = LatticeState.from_interior(vals)
        drift = abs(interior_mass(step_aggdiff(s).u) - interior_mass(s.u))
        assert drift <= 8 * s.N * np.finfo(float).eps

    @given(st.lists(st.floats(0.0, 1.0), min_size=3, max_size=12))
    def test_neumann_total_mass(self, vals):
        # with mirrored ghosts the trapezoid-weighted sum is invariant
        s = LatticeState(vals, N_)
        w = np.ones(len(vals))
        w[0] = w[-1] = 0.5
        before = math.fsum(w * s.u)
        after = math.fsum(w * step_aggdiff(s).u)
        assert after == pytest.approx(before, abs=1e-14)

    def test_heat_hand_example(self):
        out = step_heat(LatticeState([0, 1, 0, 0, 0]), 0.5).u
        np.testing.assert_allclose(out, [0, 0.5, 0.25, 0, 0], atol=0)

    @given(interiors)
    def test_heat_identity_at_p1(self, vals):
        s = LatticeState.from_interior(vals)
        assert np.array_equal(step_heat(s, 1.0).u, s.u)

    def test_heat_zero(self):
        s = LatticeState(np.zeros(7))
        assert np.all(step_heat(s, 0.3).u == 0)

    @given(interiors, st.floats(0, 1))
    def test_heat_matches_oracle(self, vals, p):
        s = LatticeState.from_interior(vals)
        np.testing.assert_allclose(step_heat(s, p).u, oracle_heat(s.u, p), atol=1e-15)

    @given(interiors, st.floats(0, 0.999))
    def test_heat_mass_nonincreasing(self, vals, p):
        s = LatticeState.from_interior(vals)
        before = interior_mass(s.u)
        after = interior_mass(step_heat(s, p).u)
        # the loss is (1-p)/2 (u_1 + u_{N-1}), zero iff both end values vanish
        loss = (1 - p) / 2 * (s.u[1] + s.u[-2])
        assert after == pytest.approx(before - loss, abs=1e-13)
        assert after <= before + 1e-15

    def test_dispatch(self):
        s = LatticeState([0, 1, 0, 0, 0])
        assert np.array_equal(step(s, ConstantProb(0.5)).u, step_heat(s, 0.5).u)
        assert np.array_equal(step(s, AggDiff()).u, step_aggdiff(s).u)

    def test_batch_rows_independent(self):
        rng = np.random.default_rng(1)
        vals = rng.uniform(0, 1, (5, 7))
        batch = LatticeState.from_interior(vals)
        out = step_aggdiff(batch).u
        for row, v in zip(out, vals):
            assert np.array_equal(row, step_aggdiff(LatticeState.from_interior(v)).u)


class TestRun:
    def test_zero_steps(self):
        s = LatticeState.from_interior([0.4, 0.3, 0.6])
        tr = run(s, AggDiff(), 0)
        assert len(tr) == 1 and np.array_equal(tr.u[0], s.u)

    def test_steady_snapshots_identical(self):
        s = LatticeState([0, 0.4, 0.6, 0.6, 0])
        tr = run(s, AggDiff(), 50, 10)
        assert np.all(tr.u == s.u)
        assert list(tr.steps) == [0, 10, 20, 30, 40, 50]

    def test_compiled_run_matches_numpy_steps(self):
        s = LatticeState.from_interior(np.random.default_rng(3).uniform(0, 1, 9))
        ref = s
        for _ in range(25):
            ref = step_aggdiff(ref)
        assert np.array_equal(run(s, AggDiff(), 25).u[-1], ref.u)

    def test_compiled_heat_matches_numpy_steps(self):
        s = LatticeState(np.random.default_rng(4).uniform(0, 1, 9), N_)
        ref = s
        for _ in range(25):
            ref = step_heat(ref, 0.3)
        assert np.array_equal(run(s, ConstantProb(0.3), 25).u[-1], ref.u)

    def test_envelope_sees_unrecorded_steps(self):
        s = LatticeState.from_interior([0.4, 0.3, 0.6])
        every = run(s, AggDiff(), 100, 1)
        sparse = run(s, AggDiff(), 100, 50)
        assert sparse.envelope_min == pytest.approx(every.u[..., 1:-1].min())
        assert sparse.envelope_max == pytest.approx(every.u[..., 1:-1].max())

    def test_record_count(self):
        s = LatticeState.from_interior([0.4, 0.3, 0.6])
        tr = run(s, AggDiff(), 105, 10)
        assert len(tr) == 11 and tr.steps[-1] == 100

    def test_trajectory_rejects_unordered_steps(self):
        with pytest.raises(ValueError):
            Trajectory(np.array([0, 0]), np.zeros((2, 5)))


class TestEquilibrium:
    def test_steady_converges_at_zero(self):
        s = LatticeState([0, 0.4, 0.6, 0.6, 0])
        final, ok, taken = equilibrate(s, AggDiff())
        assert ok and taken == 0 and final.step_count == 0

    def test_fig7(self):
        s = LatticeState.from_interior([0.81, 0.2, 0.9])
        final, ok = run_to_equilibrium(s, AggDiff())
        assert ok
        np.testing.assert_allclose(final.interior, 1.91 / 3, atol=1e-9)

    def test_budget_exhaustion(self):
        s = LatticeState.from_interior([0.81, 0.2, 0.9])
        final, ok = run_to_equilibrium(s, AggDiff(), eps_stop=1e-15, max_steps=3)
        assert not ok and final.step_count == 3

    def test_rejects_nonpositive_eps(self):
        with pytest.raises(ValueError):
            equilibrate(LatticeState([0, 0.5, 0]), AggDiff(), eps_stop=0.0)

    def test_batch_counts(self):
        s = LatticeState.from_interior([[0.81, 0.2, 0.9], [0.4, 0.6, 0.6]])
        final, ok, taken = equilibrate(s, AggDiff())
        assert ok.tolist() == [True, True]
        assert taken[1] == 0 and taken[0] > 0


class TestObservables:
    def test_constant(self):
        obs = observables(LatticeState.from_interior([0.3] * 5))
        assert obs.mass == pytest.approx(1.5) and obs.total_variation == 0.0

    def test_hand(self):
        obs = observables(LatticeState([0, 0.4, 0.3, 0.6, 0]))
        assert obs.mass == pytest.approx(1.3, abs=1e-15)
        assert obs.total_variation == pytest.approx(0.4, abs=1e-15)
        assert (obs.min, obs.max) == (0.3, 0.6)

    def test_zero(self):
        assert tuple(observables(LatticeState(np.zeros(5)))) == (0, 0, 0, 0)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=20), st.integers(1, 2000))
def test_range_invariance_property(vals, steps):
    tr = run(LatticeState.from_interior(vals), AggDiff(), steps, steps)
    assert tr.envelope_min >= -1e-12 and tr.envelope_max <= 1 + 1e-12
