import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aggdiff.errors import DomainError, InconsistentCaseError
from aggdiff.lattice import AggDiff, LatticeState, equilibrate
from aggdiff.patterns import (
    CaseId,
    LimitKind,
    MIRROR,
    classify,
    is_steady,
    limit_class,
    predict,
    sweep,
    sweep_grid,
    verify,
)

# initial triples from the figures, with the limits read off their captions
FIGURES = {
    "fig4": ((0.40, 0.30, 0.60), CaseId.C1S1),
    "fig5": ((0.10, 0.60, 0.20), CaseId.C1S2),
    "fig6": ((0.05, 0.40, 0.51), CaseId.C1S3),
    "fig7": ((0.81, 0.20, 0.90), CaseId.C2S1),
    "fig8": ((0.45, 0.67, 0.75), CaseId.C2S2),
    "fig9": ((0.85, 0.75, 0.30), CaseId.C2S3),
    "fig10": ((0.40, 0.85, 0.42), CaseId.C2S4),
    "fig12": ((0.15, 0.80, 0.30), CaseId.C3S1),
    "fig13": ((0.15, 0.65, 0.60), CaseId.C3S1),
    "fig14": ((0.15, 0.60, 0.70), CaseId.C3S2),
    "fig15": ((0.28, 0.70, 0.80), CaseId.C3S2),
    "fig16": ((0.41, 0.45, 0.71), CaseId.C3S3),
}

unit = st.floats(0.0, 1.0)


class TestClassify:
    @pytest.mark.parametrize("name", sorted(FIGURES))
    def test_figures(self, name):
        triple, expected = FIGURES[name]
        assert classify(*triple).case_id is expected

    def test_case5(self):
        assert classify(0.4, 0.6, 0.6).case_id is CaseId.C5_STEADY
        assert classify(0.6, 0.6, 0.4).case_id is CaseId.C5_STEADY

    def test_other_fixed_points_are_steady(self):
        assert is_steady(0.1, 0.1, 0.1)
        assert is_steady(0.0, 0.3, 0.3)
        assert classify(0.3, 0.0, 0.8).case_id is CaseId.C5_STEADY

    def test_pair_sum_one_counts_as_not_greater(self):
        # 0.3 + 0.7 = 1 is not > 1, so this is Case 1 with u2 the maximum;
        # mass 1.1 leaves it outside the subcases
        assert classify(0.3, 0.7, 0.1).case_id is CaseId.INDETERMINATE

    def test_mass_one_counts_as_below_one(self):
        assert classify(0.2, 0.7, 0.1).case_id is CaseId.C1S2
        assert classify(0.1, 0.3, 0.6).case_id is CaseId.C1S3

    def test_mirror_case4(self):
        c = classify(0.7, 0.6, 0.15)
        assert c.case_id is CaseId.C4_MIRROR and c.mirrored is CaseId.C3S2

    def test_out_of_range(self):
        with pytest.raises(DomainError):
            classify(0.4, 1.2, 0.1)

    def test_conditions_recorded(self):
        assert any("u2+u3" in c for c in classify(0.15, 0.6, 0.7).conditions_met)

    @given(unit, unit, unit)
    def test_mirror_symmetry(self, a, b, c):
        left, right = classify(a, b, c).case_id, classify(c, b, a).case_id
        expected = MIRROR.get(left, left)
        if left is CaseId.C4_MIRROR:
            assert right in (CaseId.C3S1, CaseId.C3S2, CaseId.C3S3)
        else:
            assert right is expected


class TestPredict:
    def test_c1s2(self):
        p = predict(classify(0.1, 0.6, 0.2), 0.1, 0.6, 0.2)
        assert p.kind is LimitKind.EXACT
        np.testing.assert_allclose(p.vectors[0], (0, 0.9, 0), atol=1e-15)

    def test_c2s1(self):
        p = predict(classify(0.81, 0.2, 0.9), 0.81, 0.2, 0.9)
        np.testing.assert_allclose(p.vectors[0], [1.91 / 3] * 3, atol=1e-15)

    def test_c3s2(self):
        p = predict(classify(0.15, 0.6, 0.7), 0.15, 0.6, 0.7)
        assert p.kind is LimitKind.EXACT
        np.testing.assert_allclose(p.vectors[0], (0, 0.725, 0.725), atol=1e-15)

    def test_c1s1_constrained(self):
        p = predict(classify(0.4, 0.3, 0.6), 0.4, 0.3, 0.6)
        assert p.kind is LimitKind.CONSTRAINED and p.families == ("middle_zero",)
        assert p.distance((0.5, 0.0, 0.8)) == pytest.approx(0, abs=1e-15)
        assert p.distance((0.5, 0.1, 0.7)) > 0.05

    def test_c3s3_admissible_set(self):
        p = predict(classify(0.41, 0.45, 0.71), 0.41, 0.45, 0.71)
        assert p.kind is LimitKind.SIMULATE
        assert "middle_zero" in p.families and len(p.vectors) == 2

    def test_inconsistent(self):
        with pytest.raises(InconsistentCaseError):
            predict(classify(0.4, 0.3, 0.6), 0.81, 0.2, 0.9)

    @given(unit, unit, unit)
    def test_vectors_carry_the_mass(self, a, b, c):
        p = predict(classify(a, b, c), a, b, c)
        for w in p.vectors:
            assert abs(sum(w) - (a + b + c)) <= 1e-15 * 4

    def test_to_dict(self):
        d = predict(classify(0.1, 0.6, 0.2), 0.1, 0.6, 0.2).to_dict()
        assert d["kind"] == "ExactVector"


class TestVerify:
    @pytest.mark.parametrize("name", sorted(FIGURES))
    def test_figures_match(self, name):
        triple, _ = FIGURES[name]
        r = verify(*triple)
        assert r.matched, r.to_dict()
        assert r.flag is None

    def test_fig6_limit(self):
        np.testing.assert_allclose(verify(0.05, 0.4, 0.51).simulated, (0, 0, 0.96), atol=1e-3)

    def test_fig8_limit(self):
        np.testing.assert_allclose(verify(0.45, 0.67, 0.75).simulated, [1.87 / 3] * 3, atol=1e-3)

    def test_case5_step0(self):
        r = verify(0.4, 0.6, 0.6)
        assert r.matched and r.steps == 0

    def test_json(self):
        d = json.loads(verify(0.15, 0.8, 0.3).to_json())
        assert d["case_id"] == "C3S1" and d["matched"] is True

    @settings(max_examples=25, deadline=None)
    @given(unit, unit, unit)
    def test_reversal_reverses_limit(self, a, b, c):
        s = LatticeState.from_interior([[a, b, c], [c, b, a]])
        final, ok, _ = equilibrate(s, AggDiff(), max_steps=20000)
        fwd, back = final.interior
        np.testing.assert_allclose(fwd, back[::-1], atol=1e-12)

    def test_simulate_mismatch_is_flagged(self):
        from aggdiff.patterns import _assemble

        r = _assemble((0.41, 0.45, 0.71), (0.3, 0.3, 0.66), 10, 1e-3)
        assert not r.matched and r.flag == "Indeterminate"


class TestSweep:
    def test_grid(self):
        assert len(sweep_grid(2)) == 27
        assert sweep_grid(2)[1] == (0.0, 0.0, 0.5)
        with pytest.raises(ValueError):
            sweep_grid(1)

    def test_resolution2(self):
        rows = sweep(2)
        assert len(rows) == 27 and all(r.matched for r in rows)

    def test_workers_do_not_change_rows(self):
        a = sweep(4)
        b = sweep(4, workers=3)
        assert [(r.triple, r.limit, r.case_id) for r in a] == [(r.triple, r.limit, r.case_id) for r in b]

    @pytest.mark.slow
    def test_resolution10(self):
        rows = sweep(10)
        assert len(rows) == 1331
        assert max(r.mass_drift for r in rows) <= 1e-10
        for r in rows:
            if r.case_id == "C2S1":
                np.testing.assert_allclose(r.limit, [sum(r.triple) / 3] * 3, atol=1e-3)
            if r.converged:
                assert r.matched, r


def test_limit_class():
    assert limit_class((0.5, 0.5, 0.5), 1.5) == "uniform"
    assert limit_class((0, 0.6, 0.6), 1.2) == "pair_right"
    assert limit_class((0.3, 0, 0.5), 0.8) == "middle_zero"
    assert limit_class((0, 0, 0), 0) == "zero"
