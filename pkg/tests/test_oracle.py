import numpy as np
import pytest

from _oracles import dense_grid_probability, direct_dual_lp_probability
from drccp.model import (
    AffineBoth,
    BinaryDomain,
    BoxDomain,
    DrccpProblem,
    FullSpace,
    GroundNorm,
    SampleSet,
    WassersteinBall,
)
from drccp.oracle import (
    check_zd_membership,
    distance_to_unsafe,
    row_distances,
    scan_probability,
    worst_case_violation_probability,
)
from test_model import make_knapsack_problem


def scalar_problem(samples, delta, eps=0.1, norm=GroundNorm.L1):
    """f(x, xi) = xi * x1: safe iff xi >= 0 at x = 1."""
    f = AffineBoth(np.array([[1.0]]), np.zeros(1), np.zeros(1), 0.0)
    ball = WassersteinBall(delta, norm, SampleSet.from_array(np.atleast_2d(samples).T))
    return DrccpProblem(
        np.ones(1), BoxDomain(np.zeros(1), np.ones(1)), (f,), eps, ball, FullSpace(1)
    )


def random_affine_problem(rng, m=2, T=2, N=6, delta=0.05):
    norm = rng.choice(list(GroundNorm))
    cons = tuple(
        AffineBoth(
            rng.normal(size=(m, 3)), rng.normal(size=m), rng.normal(size=3), rng.normal()
        )
        for _ in range(T)
    )
    samples = rng.normal(size=(N, m))
    ball = WassersteinBall(delta, norm, SampleSet.from_array(samples))
    return DrccpProblem(
        rng.normal(size=3), BoxDomain(-np.ones(3), np.ones(3)), cons, 0.1, ball, FullSpace(m)
    )


class TestDistance:
    def test_halfline_distance(self):
        # f = xi, zeta = 3: distance from 3 to (-inf, 0) is 3
        f = AffineBoth(np.array([[1.0]]), np.zeros(1), np.zeros(1), 0.0)
        d = distance_to_unsafe(np.ones(1), np.array([3.0]), [f], GroundNorm.L1)
        assert d == pytest.approx(3.0)

    def test_violating_point_is_zero(self):
        f = AffineBoth(np.array([[1.0]]), np.zeros(1), np.zeros(1), 0.0)
        assert distance_to_unsafe(np.ones(1), np.array([-0.5]), [f], GroundNorm.L2) == 0.0

    def test_never_violable_is_inf(self):
        f = AffineBoth(np.zeros((2, 2)), np.zeros(2), np.zeros(2), 1.0)
        d = distance_to_unsafe(np.ones(2), np.zeros(2), [f, f], GroundNorm.L2)
        assert d == np.inf

    def test_row_distances_match_pointwise(self):
        rng = np.random.default_rng(3)
        p = random_affine_problem(rng)
        x = rng.normal(size=3)
        batch = row_distances(x, p.ball.center.samples, p.constraints, p.ball.norm)
        for i, zeta in enumerate(p.ball.center.samples):
            assert batch[i] == pytest.approx(
                distance_to_unsafe(x, zeta, p.constraints, p.ball.norm)
            )


class TestScan:
    def test_two_sample_hand_example(self):
        # d = (1, 3), delta = 0.5: h flat at 0.5 on [1/3, 1]
        prob, lam = scan_probability(np.array([1.0, 3.0]), 0.5)
        assert prob == pytest.approx(0.5)
        assert lam == pytest.approx(1.0 / 3.0)

    def test_zero_radius_empirical_frequency(self):
        d = np.array([0.0, 0.0, 1.0, 2.0, np.inf] + [3.0] * 5)
        prob, _ = scan_probability(d, 0.0)
        assert prob == pytest.approx(0.2)

    def test_all_zero_distances(self):
        prob, lam = scan_probability(np.zeros(4), 0.7)
        assert prob == 1.0 and lam == 0.0

    def test_all_inf(self):
        prob, _ = scan_probability(np.full(3, np.inf), 0.1)
        assert prob == 0.0

    def test_matches_dense_grid_on_random_instances(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            n = rng.integers(1, 21)
            d = rng.uniform(0.05, 5.0, n)
            d[rng.random(n) < 0.2] = 0.0
            d[rng.random(n) < 0.1] = np.inf
            delta = rng.uniform(0.0, 1.0)
            prob, _ = scan_probability(d, delta)
            ref = dense_grid_probability(d, delta)
            assert prob == pytest.approx(ref, abs=1e-6)

    def test_monotone_in_delta_and_distances(self):
        rng = np.random.default_rng(5)
        d = rng.uniform(0.1, 3.0, 12)
        probs = [scan_probability(d, delta)[0] for delta in np.linspace(0, 1, 9)]
        assert all(a <= b + 1e-12 for a, b in zip(probs, probs[1:]))
        p_small = scan_probability(d, 0.3)[0]
        p_large = scan_probability(d * 2.0, 0.3)[0]
        assert p_large <= p_small + 1e-12


class TestWorstCase:
    def test_zero_radius_violation_frequency(self):
        samples = np.array([1.0, 2.0, -1.0, 3.0, 4.0, 5.0, 6.0, 7.0, -2.0, 8.0])
        p = scalar_problem(samples, delta=0.0)
        est = worst_case_violation_probability(np.ones(1), p)
        assert est.probability == pytest.approx(0.2)

    def test_two_sample_value(self):
        p = scalar_problem(np.array([1.0, 3.0]), delta=0.5)
        est = worst_case_violation_probability(np.ones(1), p)
        assert est.probability == pytest.approx(0.5)
        assert est.lambda_star == pytest.approx(1.0 / 3.0)
        np.testing.assert_allclose(est.distances, [1.0, 3.0])

    def test_knapsack_empty_selection_feasible(self):
        p = make_knapsack_problem(n=3, T=2, N=5)
        ok, est = check_zd_membership(np.zeros(3), p)
        assert ok and est.probability == 0.0

    def test_membership_threshold(self):
        p = scalar_problem(np.array([1.0, 3.0]), delta=0.5, eps=0.6)
        ok, est = check_zd_membership(np.ones(1), p)
        assert ok
        p2 = scalar_problem(np.array([1.0, 3.0]), delta=0.5, eps=0.4)
        ok2, _ = check_zd_membership(np.ones(1), p2)
        assert not ok2

    def test_matches_dual_lp_on_random_instances(self):
        rng = np.random.default_rng(17)
        for _ in range(50):
            p = random_affine_problem(
                rng,
                m=int(rng.integers(1, 4)),
                T=int(rng.integers(1, 4)),
                N=int(rng.integers(2, 9)),
                delta=float(rng.uniform(0, 0.5)),
            )
            x = rng.normal(size=3)
            est = worst_case_violation_probability(x, p)
            ref = direct_dual_lp_probability(x, p)
            assert est.probability == pytest.approx(min(ref, 1.0), abs=1e-7)

    def test_eta_certificate_shape_and_sign(self):
        rng = np.random.default_rng(23)
        p = random_affine_problem(rng, m=2, T=3, N=4)
        est = worst_case_violation_probability(rng.normal(size=3), p)
        assert est.eta_certificate.shape == (4, 3)
        assert np.all(est.eta_certificate >= 0.0)

    def test_requires_affine_fullspace(self):
        from drccp.model import Box, QuadraticXi

        p = make_knapsack_problem(n=2, T=1)
        bad = DrccpProblem(
            p.objective, p.domain,
            (QuadraticXi(np.eye(2), np.zeros(2), 1.0),),
            p.risk,
            WassersteinBall(0.01, GroundNorm.L2, SampleSet.from_array(np.zeros((1, 2)))),
            FullSpace(2), p.sense,
        )
        with pytest.raises(ValueError):
            worst_case_violation_probability(np.zeros(2), bad)
