import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import f_value, semigroup
from poisson_mlsi.errors import DomainError, TruncationError
from poisson_mlsi.semigroup import (
    DensityFunction,
    F_equation_residual,
    G_equation_residual,
    ProblemSpec,
    apply_semigroup,
    difference,
    eta_ratio,
    heat_residual,
    log_semigroup,
    log_semigroup_F,
    ratio_G,
    second_difference_exponent,
)

from conftest import SUITE

LOG2 = math.log(2.0)
GL = DensityFunction.gaussian_like(0.7, 1.0)


def _raw(f, T=1.0):
    return ProblemSpec(T, f, normalize=False)


def test_family_values():
    assert DensityFunction.geometric(0.5, 1.0)(3) == pytest.approx(math.exp(2.5))
    assert GL(2) == pytest.approx(0.7**4)
    assert DensityFunction.poisson_kernel(2.0)(3) == pytest.approx(8 / 6)
    t = DensityFunction.table([1.0, 2.0, 1.0, 0.5])
    assert t(3) == 0.5
    assert t(5) == pytest.approx(0.125)  # ratio 0.5 continues
    assert t.k_max == 3


def test_ulc_extension_keeps_equality():
    f = DensityFunction.table([1.0, 1.5, 0.9], extension="ulc")
    k = np.arange(3, 30)
    lhs = k * f(k) ** 2
    rhs = (k + 1) * f(k + 1) * f(k - 1)
    assert np.allclose(lhs, rhs, rtol=1e-12)


def test_log_ratio_matches_log_values(family):
    k = np.arange(60)
    assert np.max(np.abs(family.log_ratio(k) - np.diff(family.log_value(np.arange(61))))) < 1e-12


def test_density_validation():
    with pytest.raises(DomainError):
        DensityFunction.gaussian_like(1.0, 1.0)
    with pytest.raises(DomainError):
        DensityFunction.poisson_kernel(0.0)
    with pytest.raises(DomainError):
        DensityFunction.table([1.0, 0.0])
    with pytest.raises(DomainError):
        DensityFunction.table([])
    with pytest.raises(DomainError):
        DensityFunction.table([1.0, 2.0], extension="spline")
    with pytest.raises(DomainError):
        GL.log_value(-1)


def test_problem_spec_validation():
    with pytest.raises(DomainError):
        ProblemSpec(0.0, GL)
    with pytest.raises(TruncationError):
        ProblemSpec(100.0, DensityFunction.geometric(5.0))
    with pytest.raises(DomainError):
        ProblemSpec(1.0, GL, k_reach=1)


def test_normalized_mass_is_one(family):
    spec = ProblemSpec(1.0, family)
    k = np.arange(spec.k_reach + 1)
    from poisson_mlsi.poisson_core import poisson_log_pmf

    assert abs(np.sum(np.exp(spec.log_f(k) + poisson_log_pmf(1.0, k))) - 1.0) < 1e-13


def test_semigroup_of_constant_is_one():
    spec = _raw(DensityFunction.constant())
    for t in (0.0, 0.3, 1.0, 4.0):
        for k in (0, 3, 10):
            assert apply_semigroup(spec, t, k) == pytest.approx(1.0, abs=1e-14)


def test_semigroup_geometric_closed_form():
    spec = _raw(DensityFunction.geometric(LOG2, 0.0))
    assert apply_semigroup(spec, 1.0, 0) == pytest.approx(math.e, rel=1e-14)
    for t, k in [(0.5, 2), (2.0, 5)]:
        assert apply_semigroup(spec, t, k) == pytest.approx(2.0**k * math.exp(t), rel=1e-13)


def test_semigroup_gaussian_like_oracle():
    # direct summation to n = 60 at 40 digits
    fv = lambda k: f_value("gaussian_like", (0.7, 1.0), k)
    ref = float(semigroup(fv, mp.mpf("0.5"), 0, n=60))
    assert ref == pytest.approx(0.8375350728323545, rel=1e-15)
    spec = _raw(GL)
    assert apply_semigroup(spec, 0.5, 0) == pytest.approx(ref, rel=1e-14)
    assert math.exp(log_semigroup(spec, 0.5, 0)) == pytest.approx(ref, rel=1e-14)


def test_semigroup_identity_at_zero(family):
    spec = _raw(family)
    for k in range(12):
        assert apply_semigroup(spec, 0.0, k) == family(k)


def test_adaptive_and_vectorized_routes_agree(family):
    spec = _raw(family, T=2.0)
    for t in (0.1, 0.7, 2.0):
        k = np.arange(15)
        vec = log_semigroup(spec, t, k)
        ada = np.array([math.log(apply_semigroup(spec, t, int(j))) for j in k])
        assert np.max(np.abs(vec - ada)) < 1e-12


@pytest.mark.parametrize("name", sorted(SUITE))
def test_semigroup_law(name):
    spec = _raw(SUITE[name])
    for s in (0.25, 0.5):
        for t in (0.25, 0.5):
            for k in range(21):
                # P_s(P_t f)(k) by summing P_t f(k+n) against pi_s
                ks = k + np.arange(spec.n_terms + 20)
                inner = np.exp(log_semigroup(spec, t, ks))
                from poisson_mlsi.poisson_core import poisson_log_pmf

                outer = np.sum(inner * np.exp(poisson_log_pmf(s, ks - k)))
                direct = math.exp(log_semigroup(spec, s + t, k))
                assert abs(outer - direct) <= 1e-10 * direct


def test_difference_examples():
    assert difference(lambda k: 4.0, 3) == 0.0
    assert difference(lambda k: k, 5) == 1
    assert difference(lambda k: k * k, 3) == 7


def test_F_examples():
    one = ProblemSpec(1.0, DensityFunction.constant())
    assert np.allclose(log_semigroup_F(one, np.linspace(0, 1, 5), 3), 0.0, atol=1e-15)
    geo = _raw(DensityFunction.geometric(LOG2))
    assert log_semigroup_F(geo, 0.0, 0) == pytest.approx(1.0, abs=1e-14)
    fv = lambda k: f_value("gaussian_like", (0.7, 1.0), k)
    ref = float(mp.log(semigroup(fv, mp.mpf("0.7"), 2)))
    assert log_semigroup_F(_raw(GL), 0.3, 2) == pytest.approx(ref, abs=1e-14)
    with pytest.raises(DomainError):
        log_semigroup_F(geo, 1.5, 0)


def test_G_examples():
    assert ratio_G(ProblemSpec(1.0, DensityFunction.constant()), 0.4, 2) == pytest.approx(1.0, abs=1e-15)
    a = 0.37
    spec = ProblemSpec(1.3, DensityFunction.geometric(a, -0.2))
    rng = np.random.default_rng(3)
    t = rng.uniform(0, 1.3, 20)
    k = rng.integers(0, 15, 20)
    assert np.max(np.abs(ratio_G(spec, t, k) - math.exp(a))) <= 1e-12
    assert ratio_G(ProblemSpec(1.0, GL), 1.0, 0) == pytest.approx(0.7, abs=1e-15)


def test_second_difference_examples():
    geo = ProblemSpec(1.0, DensityFunction.geometric(0.8))
    assert np.allclose(second_difference_exponent(geo, np.linspace(0, 1, 6), 2), 1.0, atol=1e-13)
    one = ProblemSpec(1.0, DensityFunction.constant())
    assert second_difference_exponent(one, 0.5, 0) == pytest.approx(1.0, abs=1e-15)
    assert second_difference_exponent(ProblemSpec(1.0, GL), 1.0, 0) == pytest.approx(0.49, abs=1e-15)


def test_eta_examples():
    assert eta_ratio(ProblemSpec(1.0, DensityFunction.constant()), 0.3) == pytest.approx(1.0, abs=1e-15)
    spec = ProblemSpec(1.0, GL)
    assert eta_ratio(spec, 1.0) == pytest.approx(1 / 0.7, rel=1e-15)
    # non-increasing in s, so the value at s = T is the smallest
    assert eta_ratio(spec, 0.0) >= eta_ratio(spec, 1.0)
    fv = lambda k: f_value("gaussian_like", (0.7, 1.0), k)
    ref = float(semigroup(fv, 1, 0) / semigroup(fv, 1, 1))
    assert eta_ratio(spec, 0.0) == pytest.approx(ref, rel=1e-14)


def test_heat_residual_constant_is_zero():
    one = ProblemSpec(1.0, DensityFunction.constant(), normalize=False)
    assert heat_residual(one, 0.3, 2, 1e-3) <= 1e-12


@pytest.mark.parametrize(
    "f,t,k",
    [(DensityFunction.geometric(LOG2), 0.5, 0), (DensityFunction.table([1.0, 2.0, 1.0, 0.5]), 0.2, 1)],
)
def test_heat_residual_first_order(f, t, k):
    spec = _raw(f)
    r = [heat_residual(spec, t, k, h) for h in (1e-2, 1e-3, 1e-4)]
    c = [ri / h for ri, h in zip(r, (1e-2, 1e-3, 1e-4))]
    # residual/h settles to a constant
    assert abs(c[2] - c[1]) <= 0.05 * c[1]
    assert r[2] <= 1.1 * c[1] * 1e-4


@pytest.mark.parametrize("name", ["gaussian_like", "poisson_kernel", "geometric_log2"])
def test_pde_residuals_second_order(name):
    spec = ProblemSpec(1.0, SUITE[name])
    for fn in (F_equation_residual, G_equation_residual):
        for k in (0, 1, 3):
            r1, r2 = fn(spec, 0.5, k, 1e-3), fn(spec, 0.5, k, 1e-4)
            if r1 > 1e-10:
                assert math.log10(r1 / r2) >= 1.7
            else:
                assert r2 < 1e-10


def test_residual_step_validation():
    spec = ProblemSpec(1.0, GL)
    with pytest.raises(DomainError):
        F_equation_residual(spec, 0.0, 0, 1e-3)
    with pytest.raises(DomainError):
        heat_residual(spec, 0.2, 0, 0.0)


def test_positivity(family):
    spec = ProblemSpec(1.0, family)
    t = np.linspace(0, 1, 11)[:, None]
    k = np.arange(spec.k_reach)[None, :]
    assert np.all(ratio_G(spec, t, k) > 0)
    assert np.all(second_difference_exponent(spec, t, k) > 0)


@given(st.floats(-1.0, 1.0), st.floats(-1.0, 1.0), st.floats(0.1, 3.0), st.floats(0.0, 1.0), st.integers(0, 20))
def test_geometric_G_constant(a, b, T, frac, k):
    spec = ProblemSpec(T, DensityFunction.geometric(a, b))
    assert ratio_G(spec, frac * T, k) == pytest.approx(math.exp(a), rel=1e-12)


@given(st.lists(st.floats(0.05, 20.0), min_size=2, max_size=25), st.floats(0.05, 1.0))
def test_table_routes_agree(values, t):
    spec = _raw(DensityFunction.table(values), T=1.0)
    for k in (0, 1, len(values)):
        assert log_semigroup(spec, t, k) == pytest.approx(math.log(apply_semigroup(spec, t, k)), abs=1e-12)
