"""Accuracy tests for the in-repo log-gamma / digamma / trigamma.

Expected values come from independent oracles: slowly-converging series
evaluated term by term here, the stdlib `math.lgamma`, and (when installed)
scipy's special functions.
"""

import math

import numpy as np
import pytest

from evalign.errors import DomainError
from evalign.special import digamma, lgamma, log_gamma_digamma, trigamma


def euler_mascheroni_oracle(n_terms=10_000):
    # Harmonic sum with the Euler-Maclaurin tail; truncation error O(1/n^6).
    h = math.fsum(1.0 / k for k in range(1, n_terms + 1))
    n = float(n_terms)
    return h - math.log(n) - 1.0 / (2 * n) + 1.0 / (12 * n * n) - 1.0 / (120 * n**4)


def zeta2_oracle(n_terms=10_000):
    # partial sum plus Euler-Maclaurin tail 1/n - 1/(2n^2) + 1/(6n^3).
    total = math.fsum(1.0 / (k * k) for k in range(1, n_terms + 1))
    n = float(n_terms)
    return total + 1.0 / n - 1.0 / (2 * n * n) + 1.0 / (6 * n**3)


def test_digamma_at_one_matches_series_oracle():
    gamma = euler_mascheroni_oracle()
    assert abs(digamma(1.0) + gamma) < 1e-10


def test_digamma_recurrence_psi2_minus_psi1():
    assert abs((digamma(2.0) - digamma(1.0)) - 1.0) < 1e-10


def test_lgamma_factorial_case():
    assert abs(lgamma(4.0) - math.log(6.0)) < 1e-12


def test_lgamma_matches_stdlib_oracle():
    for x in [1e-3, 0.1, 0.5, 1.0, 2.5, 7.0, 42.0, 321.0, 1e3]:
        assert abs(lgamma(x) - math.lgamma(x)) < 1e-10


def test_recurrences_hold_over_range():
    xs = np.linspace(0.1, 50.0, 1500)
    assert np.max(np.abs(digamma(xs + 1.0) - (digamma(xs) + 1.0 / xs))) < 1e-10
    assert np.max(np.abs(lgamma(xs + 1.0) - (lgamma(xs) + np.log(xs)))) < 1e-10
    assert np.max(np.abs(trigamma(xs + 1.0) - (trigamma(xs) - 1.0 / xs**2))) < 1e-10


def test_trigamma_at_one_matches_zeta2_oracle():
    assert abs(trigamma(1.0) - zeta2_oracle()) < 1e-10


def test_pair_helper_returns_both():
    lg, dg = log_gamma_digamma(3.0)
    assert abs(lg - math.log(2.0)) < 1e-12
    assert abs(dg - (digamma(1.0) + 1.0 + 0.5)) < 1e-10


def test_array_and_scalar_agree():
    # the array path uses a fixed shift, the scalar path a loop; both land
    # within rounding of each other
    xs = np.array([0.25, 1.75, 9.5, 11.0, 123.0])
    for fn in (digamma, lgamma, trigamma):
        arr = fn(xs)
        for i, x in enumerate(xs):
            scalar = fn(float(x))
            assert abs(arr[i] - scalar) <= 5e-13 * max(1.0, abs(scalar))


@pytest.mark.parametrize("fn", [lgamma, digamma, trigamma])
@pytest.mark.parametrize("bad", [0.0, -1.0, -0.5])
def test_domain_errors(fn, bad):
    with pytest.raises(DomainError):
        fn(bad)
    with pytest.raises(DomainError):
        fn(np.array([1.0, bad]))


def test_absolute_accuracy_against_scipy():
    sp = pytest.importorskip("scipy.special")
    xs = np.concatenate(
        [np.geomspace(1e-3, 1.0, 400), np.linspace(1.0, 1e3, 600)]
    )
    assert np.max(np.abs(lgamma(xs) - sp.gammaln(xs))) < 1e-10
    assert np.max(np.abs(digamma(xs) - sp.digamma(xs))) < 1e-10
    small = xs[xs >= 0.05]
    assert np.max(np.abs(trigamma(small) - sp.polygamma(1, small))) < 1e-9
