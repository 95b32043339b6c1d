"""Transport metric and worst-case expectation: metric axioms, agreement
with the primal transport LP, and closed-form cases."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drssd.ambiguity import (
    DiscreteDistribution,
    kantorovich_discrete,
    match_samples_to_support,
    worst_case_expectation_discrete,
)
from drssd.model import WassersteinBall
from drssd.oracle import transport_worst_case_lp


def random_dist(rng, k, dim=2):
    w = rng.uniform(0.1, 1.0, size=k)
    return DiscreteDistribution(rng.normal(size=(k, dim)), w / w.sum())


class TestKantorovich:
    def test_two_point_closed_form(self):
        # all mass moves across: distance equals the ground distance
        p = DiscreteDistribution(np.array([[0.0, 0.0]]), np.array([1.0]))
        q = DiscreteDistribution(np.array([[3.0, 4.0]]), np.array([1.0]))
        assert kantorovich_discrete(p, q) == pytest.approx(5.0, abs=1e-8)

    def test_split_mass_closed_form(self):
        # half the mass moves distance 2, half stays put
        p = DiscreteDistribution(np.array([[0.0], [2.0]]), np.array([0.5, 0.5]))
        q = DiscreteDistribution(np.array([[2.0]]), np.array([1.0]))
        assert kantorovich_discrete(p, q) == pytest.approx(1.0, abs=1e-8)

    def test_identity(self):
        rng = np.random.default_rng(5)
        p = random_dist(rng, 4)
        assert kantorovich_discrete(p, p) <= 1e-8

    def test_symmetry_and_triangle(self):
        rng = np.random.default_rng(6)
        a, b, c = (random_dist(rng, k) for k in (3, 4, 5))
        dab = kantorovich_discrete(a, b)
        dba = kantorovich_discrete(b, a)
        dac = kantorovich_discrete(a, c)
        dcb = kantorovich_discrete(c, b)
        assert dab == pytest.approx(dba, abs=1e-7)
        assert dab <= dac + dcb + 1e-7

    def test_dimension_mismatch(self):
        p = DiscreteDistribution(np.zeros((1, 2)), np.array([1.0]))
        q = DiscreteDistribution(np.zeros((1, 3)), np.array([1.0]))
        with pytest.raises(ValueError):
            kantorovich_discrete(p, q)

    def test_weights_must_normalize(self):
        with pytest.raises(ValueError):
            DiscreteDistribution(np.zeros((2, 1)), np.array([0.5, 0.6]))


class TestWorstCaseExpectation:
    def test_matches_primal_transport_lp(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            dim = int(rng.integers(1, 4))
            m = int(rng.integers(3, 20))
            n = int(rng.integers(1, 5))
            support = rng.normal(size=(m, dim)) * rng.uniform(0.5, 3.0)
            idx = rng.choice(m, size=n, replace=True)
            ball = WassersteinBall(support[idx], float(rng.uniform(0.0, 1.0)))
            psi = rng.normal(size=m)
            v_dual, lam = worst_case_expectation_discrete(psi, support, ball, idx)
            v_lp, plan = transport_worst_case_lp(psi, support, ball, idx)
            assert v_dual == pytest.approx(v_lp, abs=1e-6, rel=1e-6)
            assert lam >= 0.0
            assert plan.cost <= ball.radius + 1e-7

    def test_zero_radius_is_empirical_mean(self):
        rng = np.random.default_rng(1)
        support = rng.normal(size=(9, 2))
        idx = np.array([0, 2, 2, 7])
        ball = WassersteinBall(support[idx], 0.0)
        psi = rng.normal(size=9)
        v, _ = worst_case_expectation_discrete(psi, support, ball, idx)
        assert v == pytest.approx(psi[idx].mean(), abs=1e-12)

    def test_huge_radius_hits_max(self):
        rng = np.random.default_rng(2)
        support = rng.normal(size=(7, 2))
        idx = np.array([1, 4])
        ball = WassersteinBall(support[idx], 1e6)
        psi = rng.normal(size=7)
        v, lam = worst_case_expectation_discrete(psi, support, ball, idx)
        assert v == pytest.approx(psi.max(), abs=1e-9)
        assert lam == 0.0

    @settings(deadline=None, max_examples=40)
    @given(
        seed=st.integers(0, 10_000),
        eps1=st.floats(0.0, 0.5),
        delta=st.floats(0.0, 0.5),
    )
    def test_monotone_in_radius(self, seed, eps1, delta):
        rng = np.random.default_rng(seed)
        support = rng.normal(size=(8, 2))
        idx = rng.choice(8, size=3)
        psi = rng.normal(size=8)
        v1, _ = worst_case_expectation_discrete(
            psi, support, WassersteinBall(support[idx], eps1), idx
        )
        v2, _ = worst_case_expectation_discrete(
            psi, support, WassersteinBall(support[idx], eps1 + delta), idx
        )
        assert v2 >= v1 - 1e-9

    @settings(deadline=None, max_examples=40)
    @given(seed=st.integers(0, 10_000), eps=st.floats(0.0, 1.0))
    def test_dominates_center_value(self, seed, eps):
        rng = np.random.default_rng(seed)
        support = rng.normal(size=(6, 3))
        idx = rng.choice(6, size=4)
        psi = rng.normal(size=6)
        v, _ = worst_case_expectation_discrete(
            psi, support, WassersteinBall(support[idx], eps), idx
        )
        assert v >= psi[idx].mean() - 1e-9

    def test_sample_missing_from_support(self):
        support = np.array([[0.0, 0.0], [1.0, 0.0]])
        ball = WassersteinBall(np.array([[0.5, 0.5]]), 0.1)
        with pytest.raises(ValueError, match="support"):
            worst_case_expectation_discrete(np.zeros(2), support, ball)

    def test_match_uses_explicit_indices(self):
        support = np.array([[0.0], [1.0], [1.0]])
        samples = np.array([[1.0]])
        idx = match_samples_to_support(samples, support, indices=[2])
        np.testing.assert_array_equal(idx, [2])
        with pytest.raises(ValueError):
            match_samples_to_support(samples, support, indices=[0])
