import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from poisson_mlsi.errors import DomainError, TruncationError
from poisson_mlsi.poisson_core import (
    SeriesTolerance,
    bregman_phi,
    log_weighted_series_sum,
    phi,
    phi_prime,
    poisson_log_pmf,
    poisson_log_tail_bound,
    relent_poisson,
    series_length,
    theta,
    weighted_series_sum,
)

LOG2 = math.log(2.0)


def test_log_pmf_examples():
    assert poisson_log_pmf(1.0, 0) == -1.0
    assert poisson_log_pmf(0.0, 0) == 0.0
    assert poisson_log_pmf(0.0, 3) == -math.inf
    assert poisson_log_pmf(2.0, 3) == pytest.approx(3 * LOG2 - 2 - math.log(6), abs=1e-15)


def test_log_pmf_rejects_bad_input():
    with pytest.raises(DomainError):
        poisson_log_pmf(-0.1, 0)
    with pytest.raises(DomainError):
        poisson_log_pmf(1.0, -1)
    with pytest.raises(DomainError):
        poisson_log_pmf(float("nan"), 1)


def test_log_pmf_large_arguments_stay_finite():
    # naive factorials overflow here
    v = poisson_log_pmf(50.0, np.arange(0, 400))
    assert np.all(np.isfinite(v))
    assert abs(math.fsum(np.exp(v)) - 1.0) < 1e-13


@pytest.mark.parametrize("t", [0.1, 1.0, 3.0, 7.5, 10.0])
def test_normalization_at_k80(t):
    assert abs(math.fsum(np.exp(poisson_log_pmf(t, np.arange(81)))) - 1.0) <= 1e-12


@pytest.mark.parametrize("t,n", [(1.0, 5), (3.0, 10), (10.0, 30)])
def test_tail_bound_dominates_tail(t, n):
    tail = math.fsum(np.exp(poisson_log_pmf(t, np.arange(n, n + 400))))
    assert tail <= math.exp(poisson_log_tail_bound(t, n))
    with pytest.raises(DomainError):
        poisson_log_tail_bound(t, int(t))


def test_series_length_meets_target():
    for rate in (0.5, 1.0, 4.0, 30.0):
        n = series_length(rate, math.log(1e-14))
        assert n >= 2 * rate
        assert rate + poisson_log_tail_bound(rate, n) <= math.log(1e-14)
    assert series_length(0.0, -30.0) == 1


def test_phi_examples():
    assert phi(1.0) == 0.0
    assert phi(0.0) == 1.0
    assert phi(2.0) == pytest.approx(2 * LOG2 - 1, abs=1e-15)
    assert phi_prime(1.0) == 0.0
    with pytest.raises(DomainError):
        phi(-1.0)
    with pytest.raises(DomainError):
        phi_prime(0.0)


def test_phi_nonnegative_with_single_zero():
    x = np.linspace(0.0, 10.0, 1001)
    v = phi(x)
    assert np.all(v >= 0)
    assert set(np.nonzero(v == 0)[0]) == {100}


def test_relent_examples():
    assert relent_poisson(1.0, 1.0) == 0.0
    assert relent_poisson(1.0, 2.0) == pytest.approx(1 - LOG2, abs=1e-15)
    assert relent_poisson(2.0, 1.0) == pytest.approx(2 * LOG2 - 1, abs=1e-15)
    with pytest.raises(DomainError):
        relent_poisson(0.0, 1.0)


def test_relent_matches_direct_series():
    k = np.arange(201)
    lp2 = poisson_log_pmf(2.0, k)
    direct = math.fsum(np.exp(lp2) * (lp2 - poisson_log_pmf(1.0, k)))
    assert abs(direct - relent_poisson(2.0, 1.0)) <= 1e-12


def test_relent_decreasing_on_unit_interval():
    a = np.linspace(1e-3, 1.0, 500)
    assert np.all(np.diff(relent_poisson(a, 1.0)) < 0)


def test_bregman_examples():
    assert bregman_phi(2.0, 1.0) == pytest.approx(phi(2.0), abs=1e-15)
    assert bregman_phi(3.0, 3.0) == 0.0
    assert abs(bregman_phi(1.5, 0.5) - (0.5 - 1.5 + 1.5 * math.log(3.0))) <= 1e-13
    assert abs(bregman_phi(1.5, 0.5) - relent_poisson(1.5, 0.5)) <= 1e-13


def test_bregman_entropy_identity_on_grid():
    g = np.logspace(-3, 3, 61)
    y, x = np.meshgrid(g, g)
    b = bregman_phi(y, x)
    r = relent_poisson(y, x)
    assert np.all(np.abs(b - r) <= 1e-13 * (1 + np.abs(b) + np.abs(r)))


def test_theta_examples():
    assert theta(1.0, 0.0) == 0.0
    assert theta(1.0, 1.0) == pytest.approx((1 - LOG2) / 2, abs=1e-15)
    assert theta(2.0, 0.5) == pytest.approx((1 - LOG2) / 8, abs=1e-15)
    assert abs(theta(2.0, 0.5) - theta(1.0, 1.0) / 4) <= 1e-15
    with pytest.raises(DomainError):
        theta(0.0, 1.0)
    with pytest.raises(DomainError):
        theta(1.0, -1.0)


def test_theta_relative_entropy_form():
    c = np.array([0.1, 0.5, 1.0, 3.0, 10.0])[:, None]
    z = np.linspace(0.0, 5.0, 51)[None, :]
    rel = relent_poisson(1.0 / (1.0 + c * z), 1.0)
    assert np.max(np.abs(theta(c, z) - z * z * rel)) <= 1e-13


@pytest.mark.parametrize("r", [0.5, 2.0, 10.0])
def test_theta_scaling(r):
    c = np.array([0.1, 1.0, 10.0])[:, None]
    z = np.linspace(0.0, 20.0, 101)[None, :]
    assert np.max(np.abs(theta(r * c, z / r) - theta(c, z) / r**2)) <= 1e-12


@pytest.mark.parametrize("c", [0.1, 1.0, 10.0])
def test_theta_monotone_and_convex(c):
    z = np.linspace(0.0, 20.0, 2001)
    v = theta(c, z)
    assert np.all(np.diff(v) >= 0)
    assert np.all(np.diff(v, 2) >= -1e-10)


def test_weighted_series_examples():
    assert weighted_series_sum(lambda k: 1.0, 1.0) == pytest.approx(1.0, abs=1e-14)
    assert weighted_series_sum(lambda k: k, 2.0) == pytest.approx(2.0, abs=1e-13)
    assert weighted_series_sum(lambda k: k * k, 1.0) == pytest.approx(2.0, abs=1e-13)
    assert weighted_series_sum(lambda k: 5.0, 0.0) == 5.0


def test_weighted_series_matches_fixed_truncation():
    k = np.arange(101)
    ref = math.fsum(k**2 * np.exp(poisson_log_pmf(1.0, k)))
    assert abs(weighted_series_sum(lambda j: j * j, 1.0) - ref) <= 1e-13


def test_weighted_series_exponential_moment():
    # E[e^{aN}] = exp(t (e^a - 1)); converges for any a, even fast growth
    a, t = math.log(4.0), 1.0
    got = weighted_series_sum(lambda k: math.exp(a * k), t)
    assert got == pytest.approx(math.exp(t * 3.0), rel=1e-13)


def test_weighted_series_rejects_divergent_terms():
    with pytest.raises(TruncationError):
        weighted_series_sum(lambda k: math.exp(k * k / 10.0) if k < 700 else math.inf, 1.0)
    with pytest.raises(TruncationError):
        weighted_series_sum(lambda k: float("nan"), 1.0)


def test_log_series_matches_linear():
    t = 3.0
    lin = weighted_series_sum(lambda k: 2.0**k, t)
    lg = log_weighted_series_sum(lambda k: k * LOG2, t)
    assert lg == pytest.approx(math.log(lin), abs=1e-13)
    assert lg == pytest.approx(t, abs=1e-13)


def test_log_series_handles_tiny_terms():
    # all terms ~ e^-2000: the linear route would underflow to 0
    got = log_weighted_series_sum(lambda k: -2000.0 + 0.5 * k, 2.0)
    assert got == pytest.approx(-2000.0 + 2.0 * (math.exp(0.5) - 1.0), abs=1e-12)


def test_series_tolerance_validation():
    with pytest.raises(DomainError):
        SeriesTolerance(rel_tail=1e-3)
    with pytest.raises(DomainError):
        SeriesTolerance(rel_tail=0.0)
    with pytest.raises(DomainError):
        SeriesTolerance(abs_floor=0.0)


@given(st.floats(0.0, 60.0), st.integers(0, 300))
def test_log_pmf_never_positive(t, k):
    assert poisson_log_pmf(t, k) <= 1e-15


@given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
def test_bregman_is_relent(y, x):
    b, r = bregman_phi(y, x), relent_poisson(y, x)
    assert b >= -1e-12
    assert abs(b - r) <= 1e-13 * (1 + abs(b) + abs(r))


@given(st.floats(1e-3, 100.0), st.floats(0.0, 50.0), st.sampled_from([0.5, 2.0, 10.0]))
def test_theta_scaling_property(c, z, r):
    lhs, rhs = theta(r * c, z / r), theta(c, z) / r**2
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(rhs))
