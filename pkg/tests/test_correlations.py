import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qdhom.correlations import (
    InterferometerSpec, SourceSpec, asymptotic_level, g2_parallel, g2_perp, g2_source,
    v_hom_ideal,
)
from qdhom.errors import DomainError, UndefinedPointError

SRC = SourceSpec(tau_r=800.0, tau_c=325.0)
BAL = InterferometerSpec.balanced(10_000.0, 1.0)


def _path_enumeration(tau, src, ifm, parallel):
    """Brute-force sum over (first-coupler arm, final-coupler port) pairs.

    Each of the two detected photons chooses an arm and an output port; the
    detection delay shifts by +/- the arm delay depending on the arm pair.
    Normalized by the balanced-coupler singles product 1/4.
    """
    arms = {"S": (ifm.t1, 0.0, ifm.t2), "L": (ifm.r1, ifm.delta_tau2, ifm.r2)}
    total = 0.0
    for a, (pa, da, d1a) in arms.items():          # photon seen at D1
        for b, (pb, db, d1b) in arms.items():      # photon seen at D2
            weight = pa * d1a * pb * (1 - d1b)
            delay = tau + da - db
            g = float(g2_source(delay, src))
            if parallel and a != b:
                g *= 1 - ifm.overlap_v * math.exp(-2 * abs(tau) / src.tau_c)
            total += weight * g
    return 4 * total


class TestSource:
    def test_zero_delay(self):
        assert g2_source(0.0, SRC) == 0.0

    def test_one_lifetime(self):
        assert g2_source(800.0, SRC) == pytest.approx(1 - math.exp(-1), abs=1e-4)

    @given(st.floats(-1e5, 1e5))
    def test_symmetric(self, tau):
        assert g2_source(tau, SRC) == g2_source(-tau, SRC)

    def test_residual(self):
        assert g2_source(0.0, SourceSpec(800, 325, 0.2)) == pytest.approx(0.2)

    def test_validation(self):
        with pytest.raises(DomainError):
            SourceSpec(tau_r=0)
        with pytest.raises(DomainError):
            SourceSpec(g2_zero=1.0)


class TestInterferometerSpec:
    def test_lossless_required(self):
        with pytest.raises(DomainError):
            InterferometerSpec(0.5, 0.4, 0.5, 0.5)
        with pytest.raises(DomainError):
            InterferometerSpec(0.5, 0.5, 0.5, 0.5, overlap_v=1.5)

    def test_separation_warning(self):
        ifm = InterferometerSpec.balanced(delta_tau2=2000.0)
        with pytest.warns(UserWarning):
            assert not ifm.check_separation(325.0)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            assert BAL.check_separation(325.0)


class TestPerp:
    def test_zero_delay_is_half(self):
        assert g2_perp(0.0, SRC, BAL) == pytest.approx(0.5, abs=1e-4)

    def test_side_feature(self):
        assert g2_perp(10_000.0, SRC, BAL) == pytest.approx(0.75, abs=0.005)

    def test_far_plateau(self):
        assert g2_perp(1e6, SRC, BAL) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("r1,r2", [(0.5, 0.5), (0.3, 0.5), (0.5, 0.3), (0.2, 0.7)])
    @pytest.mark.parametrize("tau", [-10_500.0, -9_800.0, -120.0, 0.0, 333.0, 10_000.0])
    def test_matches_path_enumeration(self, r1, r2, tau):
        ifm = InterferometerSpec(r1, 1 - r1, r2, 1 - r2, 10_000.0, 1.0)
        assert g2_perp(tau, SRC, ifm) == pytest.approx(
            _path_enumeration(tau, SRC, ifm, parallel=False), rel=1e-12)

    def test_prefactor_closure(self):
        for r1, r2 in [(0.5, 0.5), (0.3, 0.6), (0.1, 0.5)]:
            ifm = InterferometerSpec(r1, 1 - r1, r2, 1 - r2)
            assert g2_perp(1e7, SRC, ifm) == pytest.approx(asymptotic_level(ifm), rel=1e-12)
        assert asymptotic_level(BAL) == 1.0


class TestParallel:
    def test_zero_delay_vanishes(self):
        assert g2_parallel(0.0, SRC, BAL) == pytest.approx(0.0, abs=1e-6)

    def test_side_dips(self):
        assert g2_parallel(10_000.0, SRC, BAL) == pytest.approx(0.75, abs=0.005)
        assert g2_parallel(-10_000.0, SRC, BAL) == pytest.approx(0.75, abs=0.005)

    def test_no_overlap_equals_perp(self):
        ifm = InterferometerSpec.balanced(overlap_v=0.0)
        tau = np.linspace(-25_000, 25_000, 2001)
        np.testing.assert_array_equal(g2_parallel(tau, SRC, ifm), g2_perp(tau, SRC, ifm))

    @pytest.mark.parametrize("tau", [-9_900.0, -200.0, 0.0, 50.0, 10_100.0])
    def test_matches_path_enumeration(self, tau):
        ifm = InterferometerSpec(0.3, 0.7, 0.5, 0.5, 10_000.0, 0.8)
        assert g2_parallel(tau, SRC, ifm) == pytest.approx(
            _path_enumeration(tau, SRC, ifm, parallel=True), rel=1e-12)

    @given(st.floats(-30_000, 30_000), st.floats(0, 1), st.floats(0.05, 0.95))
    def test_bounded_by_perp(self, tau, v, r1):
        ifm = InterferometerSpec(r1, 1 - r1, 0.5, 0.5, 10_000.0, v)
        assert g2_parallel(tau, SRC, ifm) <= g2_perp(tau, SRC, ifm) + 1e-15

    @given(st.floats(0, 30_000), st.floats(0.05, 0.95))
    def test_symmetric_for_balanced_final_coupler(self, tau, r1):
        ifm = InterferometerSpec(r1, 1 - r1, 0.5, 0.5, 10_000.0, 1.0)
        assert g2_parallel(tau, SRC, ifm) == pytest.approx(g2_parallel(-tau, SRC, ifm), rel=1e-12)
        assert g2_perp(tau, SRC, ifm) == pytest.approx(g2_perp(-tau, SRC, ifm), rel=1e-12)

    def test_unbalanced_first_coupler_keeps_equal_side_dips(self):
        ifm = InterferometerSpec(0.3, 0.7, 0.5, 0.5, 10_000.0, 1.0)
        assert g2_parallel(10_000.0, SRC, ifm) == pytest.approx(
            g2_parallel(-10_000.0, SRC, ifm), rel=1e-12)

    def test_unbalanced_final_coupler_breaks_side_dip_symmetry(self):
        ifm = InterferometerSpec(0.5, 0.5, 0.3, 0.7, 10_000.0, 1.0)
        assert g2_parallel(10_000.0, SRC, ifm) != pytest.approx(
            g2_parallel(-10_000.0, SRC, ifm), rel=1e-3)


class TestVisibility:
    def test_ideal_is_one_at_zero(self):
        assert v_hom_ideal(0.0, SRC, BAL) == pytest.approx(1.0, abs=1e-4)

    def test_no_overlap(self):
        ifm = InterferometerSpec.balanced(overlap_v=0.0)
        assert np.all(v_hom_ideal(np.linspace(-5000, 5000, 101), SRC, ifm) == 0)

    def test_decays(self):
        assert v_hom_ideal(20 * SRC.tau_c, SRC, BAL) == pytest.approx(0.0, abs=1e-12)

    def test_undefined_when_first_coupler_is_a_mirror(self):
        ifm = InterferometerSpec(0.0, 1.0, 0.5, 0.5)
        with pytest.raises(UndefinedPointError):
            v_hom_ideal(0.0, SRC, ifm)

    @given(st.floats(-30_000, 30_000), st.floats(0, 1))
    def test_in_unit_interval(self, tau, v):
        ifm = InterferometerSpec.balanced(overlap_v=v)
        val = v_hom_ideal(tau, SRC, ifm)
        assert -1e-12 <= val <= 1 + 1e-12
