import math

import numpy as np
import pytest

from cellopt.acquisition import (
    KappaSchedule,
    ProposalConfig,
    acquisition_value,
    kappa,
    propose_next,
)
from cellopt.domain import DistanceConstraint, InfeasibleRegionError, SearchSpace, constraint_values
from cellopt.gp import GpHyperparams, fit, posterior, posterior_batch

from conftest import make_layout


def one_d_problem(values, targets, hp=None):
    """Training data along x with y pinned, so the model is effectively 1-D."""
    space = SearchSpace(((0.0, 1.0), (0.5, 0.5)))
    em = (("e0", 0, 1),)
    obs = [(make_layout((v, 0.5), em), t) for v, t in zip(values, targets)]
    hp = hp or GpHyperparams((0.15, 0.15), float(np.var(targets)) or 1.0, 1e-6)
    return fit(obs, space, hp), space, em


class TestKappaSchedule:
    def test_midpoint_is_half_kappa0(self):
        sched = KappaSchedule(kappa0=2.0, a=0.1, b=150.0)
        assert kappa(sched, 150.0) == 1.0

    def test_direct_formula_at_zero(self):
        sched = KappaSchedule(kappa0=2.0, a=0.1, b=150.0)
        expected = 2.0 / (1.0 + math.exp(-0.1 * (150.0 - 0.0)))
        assert kappa(sched, 0) == pytest.approx(expected, abs=1e-15)
        assert kappa(sched, 0) == pytest.approx(1.99999939, abs=1e-7)

    def test_direct_formula_past_midpoint(self):
        sched = KappaSchedule(kappa0=2.0, a=0.1, b=150.0)
        expected = 2.0 / (1.0 + math.exp(5.0))
        assert kappa(sched, 200) == pytest.approx(expected, rel=1e-12)

    def test_strictly_decreasing_and_bounded(self):
        sched = KappaSchedule(kappa0=2.0, a=0.1, b=150.0)
        values = [kappa(sched, k) for k in range(0, 201)]
        assert all(a > b for a, b in zip(values, values[1:]))
        assert all(0.0 < v < 2.0 for v in values)

    def test_rejects_nonpositive_parameters(self):
        with pytest.raises(Exception):
            KappaSchedule(kappa0=0.0, a=0.1, b=1.0)


class TestAcquisitionValue:
    def test_kappa_zero_equals_posterior_mean(self):
        model, space, em = one_d_problem([0.1, 0.5, 0.9], [3.0, 1.0, 2.0])
        x = make_layout((0.3, 0.5), em)
        mean, _ = posterior(model, x)
        assert acquisition_value(model, x, 0.0) == mean

    def test_at_noise_free_training_point(self):
        hp = GpHyperparams((0.15, 0.15), 1.0, 0.0)
        model, space, em = one_d_problem([0.2, 0.8], [4.0, 6.0], hp)
        x = make_layout((0.2, 0.5), em)
        assert acquisition_value(model, x, 3.0) == pytest.approx(4.0, abs=1e-6)

    def test_recombines_posterior_outputs(self):
        model, space, em = one_d_problem([0.1, 0.4, 0.7], [1.0, 5.0, 3.0])
        rng = np.random.default_rng(3)
        for _ in range(20):
            x = make_layout((rng.uniform(0, 1), 0.5), em)
            k = float(rng.uniform(0, 4))
            mean, std = posterior(model, x)
            assert acquisition_value(model, x, k) == pytest.approx(mean - k * std, abs=1e-12)
            assert acquisition_value(model, x, k, use_upper_bound=True) == pytest.approx(
                mean + k * std, abs=1e-12
            )


class TestProposeNext:
    def test_quadratic_dataset_kappa_zero_recovers_argmin(self):
        xs = np.linspace(0.05, 0.95, 12)
        ys = (xs - 0.6) ** 2 * 10.0 + 1.0
        hp = GpHyperparams((0.2, 0.2), float(np.var(ys)), 1e-8)
        model, space, em = one_d_problem(xs, ys, hp)
        proposal = propose_next(model, space, [], 0.0, ProposalConfig(n_starts=32, seed=5))
        # dense grid scan of the same acquisition as the oracle
        grid = np.column_stack([np.linspace(0, 1, 2001), np.full(2001, 0.5)])
        mean, std = posterior_batch(model, grid)
        grid_best = grid[int(np.argmin(mean))][0]
        assert abs(proposal.coords[0] - grid_best) <= 0.02

    def test_single_feasible_point_is_found(self):
        model, space, em = one_d_problem([0.2, 0.8], [1.0, 2.0])
        # force x into a sliver around 0.5 via a band against the pinned entity
        space2 = SearchSpace(((0.0, 1.0), (0.5, 0.5), (0.5, 0.5), (0.0, 0.0)))
        em2 = (("e0", 0, 1), ("anchor", 2, 3))
        obs = [(make_layout((v, 0.5, 0.5, 0.0), em2), t) for v, t in [(0.2, 1.0), (0.8, 2.0)]]
        hp = GpHyperparams((0.15,) * 4, 1.0, 1e-6)
        model2 = fit(obs, space2, hp)
        tight = [DistanceConstraint("e0", "anchor", 0.5, 0.5 + 1e-3)]
        proposal = propose_next(model2, space2, tight, 1.0, ProposalConfig(n_starts=8, seed=2))
        g = constraint_values(proposal, tight)
        assert np.all(g <= 0)
        assert abs(proposal.coords[0] - 0.5) <= 0.06  # on the tiny feasible arc

    def test_beats_monte_carlo_feasible_samples(self):
        rng = np.random.default_rng(11)
        for seed in range(3):
            xs = rng.uniform(0, 1, size=10)
            ys = rng.normal(3, 1, size=10)
            hp = GpHyperparams((0.2, 0.2), float(np.var(ys)), 1e-6)
            model, space, em = one_d_problem(xs, ys, hp)
            k = 1.5
            proposal = propose_next(model, space, [], k, ProposalConfig(n_starts=24, seed=seed))
            got = acquisition_value(model, proposal, k)
            samples = np.column_stack([rng.uniform(0, 1, 10000), np.full(10000, 0.5)])
            mean, std = posterior_batch(model, samples)
            assert got <= float(np.min(mean - k * std)) + 1e-9

    def test_every_proposal_satisfies_constraints(self, square_domain):
        space, em = square_domain
        constraints = [DistanceConstraint("a", "b", 0.3, 0.7)]
        rng = np.random.default_rng(17)
        pts = [make_layout(row, em) for row in rng.uniform(0, 1, size=(8, 4))]
        obs = [(x, float(rng.normal(2, 1))) for x in pts]
        model = fit(obs, space, GpHyperparams((0.25,) * 4, 1.0, 1e-6))
        for seed in range(5):
            proposal = propose_next(model, space, constraints, 1.0, ProposalConfig(seed=seed))
            assert np.max(constraint_values(proposal, constraints)) <= 1e-12
            assert space.contains(proposal.coords)

    def test_scaling_targets_by_two_keeps_argmin(self):
        # doubling is exact in floating point, so the proposal must be
        # bit-identical when targets and variances scale together
        xs = np.linspace(0.1, 0.9, 9)
        ys = np.sin(xs * 5) + 2.0
        hp1 = GpHyperparams((0.2, 0.2), 1.5, 1e-6)
        hp2 = GpHyperparams((0.2, 0.2), 4 * 1.5, 4e-6)
        model1, space, em = one_d_problem(xs, ys, hp1)
        model2, _, _ = one_d_problem(xs, 2.0 * ys, hp2)
        cfg = ProposalConfig(n_starts=16, seed=9)
        p1 = propose_next(model1, space, [], 0.7, cfg)
        p2 = propose_next(model2, space, [], 0.7, cfg)
        assert p1.coords == p2.coords

    def test_large_kappa_seeks_max_uncertainty(self):
        xs = [0.1, 0.2, 0.85]
        ys = [2.0, 2.5, 1.0]
        hp = GpHyperparams((0.1, 0.1), 1.0, 1e-8)
        model, space, em = one_d_problem(xs, ys, hp)
        k = 100.0 * (max(ys) - min(ys))
        proposal = propose_next(model, space, [], k, ProposalConfig(n_starts=32, seed=1))
        grid = np.column_stack([np.linspace(0, 1, 2001), np.full(2001, 0.5)])
        _, std_grid = posterior_batch(model, grid)
        _, std_prop = posterior_batch(model, proposal.as_array()[None, :])
        assert std_prop[0] >= 0.9 * float(np.max(std_grid))

    def test_infeasible_budget_raises(self, square_domain):
        space, em = square_domain
        rng = np.random.default_rng(0)
        pts = [make_layout(row, em) for row in rng.uniform(0, 1, size=(4, 4))]
        model = fit([(x, 1.0 + i) for i, x in enumerate(pts)], space,
                    GpHyperparams((0.25,) * 4, 1.0, 1e-6))
        impossible = [DistanceConstraint("a", "b", 9.0, 10.0)]
        with pytest.raises(InfeasibleRegionError):
            propose_next(model, space, impossible, 1.0, ProposalConfig(n_starts=4, seed=0))
