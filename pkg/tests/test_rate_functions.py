import math

import numpy as np
import pytest

from bivex.errors import DegenerateCorrelation, InvalidThreshold, UnsortedThreshold
from bivex.gaussian_core import CorrelationStructure
from bivex.rate_functions import (
    CONE_CASES,
    RateCase,
    Regime,
    Scale,
    Threshold,
    brute_force_qp,
    essinf_qp,
    kkt_residual,
    rate_I,
    rate_J,
    regime_classify,
    sharp_constants,
)

TWO_PI = 2.0 * math.pi


def std(rho):
    return CorrelationStructure.standard(rho)


def test_essinf_independent_sums_marginals():
    res = essinf_qp(Threshold(1.0, 2.0), std(0.0))
    assert res.value == pytest.approx(2.5)
    assert res.minimizer == pytest.approx((1.0, 2.0))
    assert res.case_label == RateCase.INTERIOR_ONE_INDEX


def test_essinf_interior_corner():
    res = essinf_qp(Threshold(2.0, 2.0), std(0.5))
    assert res.value == pytest.approx(8.0 / 3.0)
    assert res.minimizer == pytest.approx((2.0, 2.0))


def test_essinf_cone_case():
    res = essinf_qp(Threshold(2.0, 1.0), std(0.8))
    assert res.value == pytest.approx(2.0)
    assert res.minimizer == pytest.approx((2.0, 1.6))
    assert res.case_label == RateCase.CONE_U2


def test_essinf_mirrored_cone():
    res = essinf_qp(Threshold(1.0, 2.0), std(0.8))
    assert res.case_label == RateCase.CONE_U1
    assert res.minimizer == pytest.approx((1.6, 2.0))


def test_essinf_cone_boundary_is_inclusive():
    res = essinf_qp(Threshold(2.0, 1.0), std(0.5))
    assert res.case_label == RateCase.CONE_U2
    assert res.value == pytest.approx(2.0)


def test_essinf_depends_on_u_over_sigma_only():
    scaled = essinf_qp(Threshold(4.0, 1.0), CorrelationStructure(2.0, 0.5, 0.3))
    unit = essinf_qp(Threshold(2.0, 2.0), std(0.3))
    assert scaled.value == pytest.approx(unit.value)
    assert scaled.minimizer == pytest.approx((4.0, 1.0))


def test_essinf_rejects_nonpositive_threshold_and_degenerate_rho():
    with pytest.raises(InvalidThreshold):
        essinf_qp(Threshold(-1.0, 0.0), std(0.2))
    with pytest.raises(DegenerateCorrelation):
        essinf_qp(Threshold(1.0, 1.0), std(1.0))


def test_threshold_must_be_finite():
    with pytest.raises(InvalidThreshold):
        Threshold(math.inf, 1.0)


@pytest.mark.parametrize(
    "rho,u",
    [(0.0, (1.0, 2.0)), (0.5, (2.0, 2.0)), (0.8, (2.0, 1.0)), (-0.7, (0.5, 3.0)), (0.9, (1.0, 3.0)), (0.3, (-1.0, 2.0))],
)
def test_closed_form_matches_numerical_qp(rho, u):
    thr = Threshold(*u)
    closed = essinf_qp(thr, std(rho))
    brute = brute_force_qp(thr, std(rho))
    assert closed.value == pytest.approx(brute.value, abs=1e-8)
    assert kkt_residual(closed, thr, std(rho)) < 1e-10


def test_kkt_residual_flags_a_wrong_minimizer():
    thr = Threshold(2.0, 1.0)
    res = essinf_qp(thr, std(0.8))
    wrong = type(res)(res.value, res.case_label, (2.0, 1.0))
    assert kkt_residual(wrong, thr, std(0.8)) > 0.1


def test_rate_J_interior_one_index():
    res = rate_J(Threshold(2.0, 2.0), std(0.5))
    assert res.value == pytest.approx(-5.0 / 3.0)
    assert res.case_label == RateCase.INTERIOR_ONE_INDEX
    assert res.two_index == pytest.approx(-2.0)


def test_rate_J_cone():
    res = rate_J(Threshold(3.0, 1.6), std(0.9))
    assert res.value == pytest.approx(-3.5)
    assert res.case_label == RateCase.CONE_U2


def test_rate_J_two_index():
    res = rate_J(Threshold(2.0, 2.0), std(0.0))
    assert res.value == pytest.approx(-2.0)
    assert res.case_label == RateCase.INTERIOR_TWO_INDEX
    assert res.one_index == pytest.approx(-3.0)


def test_rate_J_uses_standardized_threshold():
    res = rate_J(Threshold(4.0, 4.0), CorrelationStructure(2.0, 2.0, 0.0))
    assert res.value == pytest.approx(-2.0)


def test_rate_J_requires_right_scale_validity():
    with pytest.raises(InvalidThreshold):
        rate_J(Threshold(1.0, 1.0), std(0.0))
    with pytest.raises(InvalidThreshold):
        rate_J(Threshold(2.0, math.sqrt(2.0)), std(0.0))


def test_rate_I_symmetric_positive_rho():
    res = rate_I(Threshold(1.0, 1.0), 0.5)
    assert res.value == pytest.approx(2.0 / 3.0)
    assert res.value == pytest.approx(1.0 / 1.5)
    assert res.case_label == RateCase.INTERIOR_ONE_INDEX


def test_rate_I_symmetric_negative_rho():
    res = rate_I(Threshold(1.0, 1.0), -0.5)
    assert res.value == pytest.approx(1.0)
    assert res.case_label == RateCase.INTERIOR_TWO_INDEX


def test_rate_I_cone_and_tie():
    assert rate_I(Threshold(2.0, 1.0), 0.8).value == pytest.approx(2.0)
    tie = rate_I(Threshold(1.0, 1.0), 0.0)
    assert tie.case_label == RateCase.BOUNDARY_TIE
    assert tie.value == pytest.approx(1.0)


def test_rate_I_needs_positive_threshold():
    with pytest.raises(InvalidThreshold):
        rate_I(Threshold(1.0, 0.0), 0.2)


def test_sharp_constants_row5():
    sc = sharp_constants(Threshold(2.0, 2.0), 0.5)
    assert (sc.b, sc.c, sc.row) == (2, 1, 5)
    assert sc.k_published == pytest.approx(0.75 / TWO_PI)
    assert sc.k_published == pytest.approx(0.119366, abs=1e-6)
    assert sc.k == pytest.approx(0.75**1.5 / TWO_PI)
    assert sc.k == pytest.approx(0.103374, abs=1e-6)


def test_sharp_constants_row5_carries_density_normalization():
    sc = sharp_constants(Threshold(2.0, 2.0), 0.2)
    assert sc.row == 5
    assert sc.k / sc.k_published == pytest.approx(math.sqrt(0.96))


def test_sharp_constants_row1():
    sc = sharp_constants(Threshold(2.0, 1.0), -0.5)
    assert (sc.b, sc.c, sc.row) == (2, 2, 1)
    assert sc.k == pytest.approx(1.0 / (4.0 * math.pi))
    assert sc.rate == pytest.approx(2.5)


def test_sharp_constants_row2_symmetric_pair_count():
    sc = sharp_constants(Threshold(2.0, 2.0), -0.5)
    assert sc.row == 2
    assert sc.k == pytest.approx(1.0 / (TWO_PI * 4.0))
    assert sc.k_published == pytest.approx(1.0 / (2.0 * TWO_PI * 4.0))
    halved = sharp_constants(Threshold(2.0, 2.0), -0.5, halve_symmetric_pairs=True)
    assert halved.k == pytest.approx(halved.k_published)


def test_sharp_constants_row3_cone():
    sc = sharp_constants(Threshold(2.0, 1.0), 0.8)
    assert (sc.b, sc.c, sc.row) == (1, 1, 3)
    assert sc.k_published == pytest.approx(1.0 / (4.0 * math.pi))
    assert sc.k == pytest.approx(1.0 / (math.sqrt(TWO_PI) * 2.0))


def test_sharp_constants_row4_cone_boundary():
    sc = sharp_constants(Threshold(2.0, 1.0), 0.5)
    assert (sc.b, sc.c, sc.row) == (1, 1, 4)
    assert sc.k == pytest.approx(1.0 / (2.0 * math.sqrt(TWO_PI) * 2.0))


def test_sharp_constants_requires_sorted_threshold():
    with pytest.raises(UnsortedThreshold, match="u2 <= u1"):
        sharp_constants(Threshold(1.0, 2.0), 0.5)


def test_regime_classify_right_scale():
    assert regime_classify(Threshold(2.0, 2.0), std(0.0), Scale.RIGHT) == Regime.TWO_INDEX
    assert regime_classify(Threshold(2.0, 2.0), std(0.5), Scale.RIGHT) == Regime.ONE_INDEX


def test_regime_classify_large_scale():
    assert regime_classify(Threshold(2.0, 1.0), std(0.8), Scale.LARGE) == Regime.ONE_INDEX
    assert regime_classify(Threshold(1.0, 1.0), std(-0.5), "large") == Regime.TWO_INDEX
    # the rho = 0 tie counts as two-index
    assert regime_classify(Threshold(1.0, 1.0), std(0.0), Scale.LARGE) == Regime.TWO_INDEX


GRID_RHOS = (-0.8, -0.3, 0.0, 0.3, 0.6, 0.9)
I_GRID = np.linspace(0.2, 4.0, 20)
J_GRID = np.linspace(1.45, 4.0, 18)
STEP = 0.05


@pytest.mark.parametrize("rho,u1", [(0.3, 1.0), (0.5, 2.0), (0.8, 3.0), (0.95, 1.5)])
def test_rate_I_is_continuous_across_the_cone_boundary(rho, u1):
    edge = rho * u1
    inside = rate_I(Threshold(u1, edge - 1e-7), rho)
    outside = rate_I(Threshold(u1, edge + 1e-7), rho)
    assert inside.case_label in CONE_CASES
    assert outside.case_label not in CONE_CASES
    assert inside.value == pytest.approx(outside.value, abs=1e-6)


@pytest.mark.parametrize("rho,u1", [(0.6, 3.0), (0.8, 2.5), (0.9, 2.0)])
def test_rate_J_is_continuous_across_the_cone_boundary(rho, u1):
    edge = rho * u1
    inside = rate_J(Threshold(u1, edge - 1e-7), std(rho))
    outside = rate_J(Threshold(u1, edge + 1e-7), std(rho))
    assert inside.case_label in CONE_CASES
    assert outside.case_label not in CONE_CASES
    assert inside.value == pytest.approx(outside.value, abs=1e-6)


@pytest.mark.parametrize("rho", GRID_RHOS)
def test_rate_I_is_nondecreasing(rho):
    for u1 in I_GRID:
        for u2 in I_GRID:
            base = rate_I(Threshold(u1, u2), rho).value
            assert rate_I(Threshold(u1 + STEP, u2), rho).value >= base - 1e-12
            assert rate_I(Threshold(u1, u2 + STEP), rho).value >= base - 1e-12


@pytest.mark.parametrize("rho", GRID_RHOS)
def test_rate_J_is_nonincreasing(rho):
    corr = std(rho)
    for u1 in J_GRID:
        for u2 in J_GRID:
            base = rate_J(Threshold(u1, u2), corr).value
            assert rate_J(Threshold(u1 + STEP, u2), corr).value <= base + 1e-12
            assert rate_J(Threshold(u1, u2 + STEP), corr).value <= base + 1e-12


def test_two_index_rate_is_dominated_inside_the_cones():
    cone_points = 0
    for rho in GRID_RHOS:
        corr = std(rho)
        for u1 in J_GRID:
            for u2 in J_GRID:
                res = rate_J(Threshold(u1, u2), corr)
                if res.case_label in CONE_CASES:
                    cone_points += 1
                    assert res.two_index <= res.one_index
                    assert res.value == res.one_index
    assert cone_points > 20
