import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from volcp.errors import DegenerateChange, TruncationTooSmall, UnknownTruth
from volcp.estimate import TwoStageFit
from volcp.limitlaw import (caseA_field, cdf_F, density_f, gamma_hat, ks_distance, reference_table,
                            sample_caseA, sample_caseB, studentize)
from volcp.model import cir, eval_Q, eval_Xi, model1
from volcp.simulate import simulate_path, stream, table_scenario


def naive_f(x):
    a = abs(x)
    return 1.5 * math.exp(a) * stats.norm.cdf(-1.5 * math.sqrt(a)) - 0.5 * stats.norm.cdf(-0.5 * math.sqrt(a))


def naive_F_positive(x):
    return (1 + math.sqrt(x / (2 * math.pi)) * math.exp(-x / 8)
            - 0.5 * (x + 5) * stats.norm.cdf(-0.5 * math.sqrt(x))
            + 1.5 * math.exp(x) * stats.norm.cdf(-1.5 * math.sqrt(x)))


def test_density_and_cdf_at_zero():
    assert density_f(0.0) == 0.5
    assert cdf_F(0.0) == 0.5


@pytest.mark.parametrize("x", [0.01, 0.3, 1.0, 2.5, 7.0, 20.0])
def test_closed_forms_match_naive_formulas(x):
    assert density_f(x) == pytest.approx(naive_f(x), rel=1e-10)
    assert cdf_F(x) == pytest.approx(naive_F_positive(x), rel=1e-12)


def test_density_integrates_to_one():
    total = 2 * integrate.quad(density_f, 0, np.inf, epsabs=1e-13, epsrel=1e-13, limit=200)[0]
    assert total == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("x", [-3.0, -1.0, 0.5, 2.0, 6.0])
def test_cdf_is_integral_of_density(x):
    ref = integrate.quad(density_f, -np.inf, x, epsabs=1e-13, epsrel=1e-13, limit=200)[0]
    assert cdf_F(x) == pytest.approx(ref, abs=1e-6)


def test_cdf_derivative_is_density():
    x = np.linspace(-8, 8, 161)
    x = x[np.abs(x) > 0.05]
    h = 1e-5
    np.testing.assert_allclose((cdf_F(x + h) - cdf_F(x - h)) / (2 * h), density_f(x), rtol=1e-5, atol=1e-9)


def test_cdf_monotone_and_bounded():
    F = cdf_F(np.linspace(-40, 40, 10001))
    assert np.all(np.diff(F) >= 0) and F[0] >= 0 and F[-1] <= 1


def test_density_positive_symmetric_unimodal():
    x = np.linspace(0, 30, 3001)
    f = density_f(x)
    assert np.all(f > 0) and np.all(np.diff(f) < 0)
    np.testing.assert_array_equal(density_f(-x), f)


@settings(max_examples=300, deadline=None)
@given(st.floats(-1e4, 1e4, allow_nan=False))
def test_cdf_symmetry_exact(x):
    assert cdf_F(x) + cdf_F(-x) == 1.0


def test_no_overflow_far_out():
    assert density_f(1000.0) >= 0 and math.isfinite(density_f(1e6))
    assert cdf_F(1000.0) == 1.0 and cdf_F(-1000.0) == 0.0


def test_reference_table():
    tab = reference_table(-6, 6, 0.01)
    assert tab.shape == (1201, 3)
    assert tab[600, 0] == pytest.approx(0.0, abs=1e-12) and tab[600, 1] == 0.5


def test_ks_of_single_value():
    for z in (-1.3, 0.0, 2.2):
        F = cdf_F(z)
        assert ks_distance([z]) == pytest.approx(max(F, 1 - F), rel=1e-12)


def test_caseB_sample_follows_F():
    s = sample_caseB(1.0, count=2000, seed=3)
    assert ks_distance(s.values) < 0.05
    assert s.meta["boundary_hits"] == 0


def test_caseB_scaling_in_gamma():
    a = sample_caseB(1.0, count=2000, seed=5).values
    b = sample_caseB(4.0, count=2000, seed=6).values * 4.0
    assert stats.ks_2samp(a, b).pvalue > 0.01


def test_caseB_grid_refinement_does_not_hurt():
    coarse = ks_distance(sample_caseB(1.0, grid_step=0.02, count=2000, seed=7).values)
    fine = ks_distance(sample_caseB(1.0, grid_step=0.005, count=2000, seed=7).values)
    assert fine <= coarse + 0.02


def test_caseB_truncation_detected():
    with pytest.raises(TruncationTooSmall):
        sample_caseB(1.0, L=1.0, count=500, seed=1)


def test_caseB_reproducible():
    np.testing.assert_array_equal(sample_caseB(2.0, count=300, seed=9).values,
                                  sample_caseB(2.0, count=300, seed=9).values)


def test_caseA_one_step_mean_is_divergence():
    m = model1()
    x, a, b = [5.0], [0.2], [0.3778]
    field = caseA_field(m, x, a, b, 1, 200000, stream(4, 0))
    right, left = field[:, 2], field[:, 0]
    se_r = right.std(ddof=1) / math.sqrt(right.size)
    se_l = left.std(ddof=1) / math.sqrt(left.size)
    assert abs(right.mean() - eval_Q(m, x, a, b)) < 3 * se_r
    assert abs(left.mean() - eval_Q(m, x, b, a)) < 3 * se_l
    assert np.all(field[:, 1] == 0)


def test_caseA_has_atom_at_zero():
    s = sample_caseA(model1(), [5.0], [0.2], [0.3778], L0=200, count=4000, seed=2)
    assert np.mean(s.values == 0) > 0.05
    assert s.meta["boundary_hits"] == 0


def test_caseA_degenerate_change():
    with pytest.raises(DegenerateChange):
        sample_caseA(model1(), [5.0], [0.3], [0.3], count=10)


def test_caseA_approaches_F_under_information_normaliser():
    m = model1()
    x, th, sep = 50.0, 0.2, 0.01
    scale = sep ** 2 * float(eval_Xi(m, [x], [th])[0, 0]) / 2
    s = sample_caseA(m, [x], [th], [th + sep], L0=int(60 / scale), count=2000, seed=1, chunk=100)
    z = s.values * scale
    assert ks_distance(z) < 0.06
    assert ks_distance(z / 2) > ks_distance(z)


def _fit(t_check, th0, th1, n=1000):
    return TwoStageFit([th0], [th1], t_check, int(t_check * n), [th0], [th1], t_check,
                       int(t_check * n), 0.1, 0.1, n, 1.0)


def test_studentize_zero_at_truth():
    s = simulate_path(table_scenario(1, 1000, seed=1))
    assert studentize(_fit(0.6, 0.2, 0.38), s, model1(), 0.6, 0.1778) == 0.0


def test_studentize_conventions_differ_by_two_for_model1():
    s = simulate_path(table_scenario(1, 1000, seed=1))
    fit = _fit(0.612, 0.21, 0.37)
    a = studentize(fit, s, model1(), 0.6, 0.1778, "theorem")
    b = studentize(fit, s, model1(), 0.6, 0.1778, "paper")
    assert a / b == pytest.approx(2.0, rel=1e-8)
    x = s.x[600, 0]
    assert b == pytest.approx(1000 * 0.1778 ** 2 * 0.012 * math.log(1 + x * x) ** 2, rel=1e-10)


def test_gamma_hat_cir_information_form():
    assert gamma_hat(cir(), [3.0], [0.25], [1.0], 1.0) == pytest.approx(8.0, rel=1e-10)
    with pytest.raises(ValueError):
        gamma_hat(cir(), [3.0], [0.25], [1.0], 1.0, "paper")
    with pytest.raises(ValueError):
        gamma_hat(model1(), [3.0], [0.25], [1.0], 1.0, "other")


def test_studentize_needs_truth():
    s = simulate_path(table_scenario(1, 100, seed=1))
    with pytest.raises(UnknownTruth):
        studentize(_fit(0.6, 0.2, 0.38, 100), s, model1(), None, 0.3)
