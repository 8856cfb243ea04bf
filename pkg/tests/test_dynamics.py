"""Exact evolution, derivative identities, and decay-rate fitting."""

import math

import numpy as np
import pytest

import beckner_lab as bl
from beckner_lab import DomainError


class TestEvolve:
    def test_flat_start_stays_flat(self, rt3):
        rho0 = bl.normalize_density(rt3, np.ones(rt3.n_states))
        traj = bl.evolve(rt3, bl.log_entropy(), rho0, [0.0, 0.5, 2.0])
        assert np.max(np.abs(traj.densities - 1.0)) <= 1e-12
        assert np.max(traj.entropy_values) <= 1e-14

    def test_two_state_closed_form(self, two_state):
        a, b = 1.5, 0.5
        rho0 = bl.normalize_density(two_state, np.array([2.0, 0.5]))
        times = np.array([0.0, 0.3, 1.0])
        traj = bl.evolve(two_state, bl.quadratic_entropy(), rho0, times)
        # deviation from equilibrium relaxes at rate a + b
        dev0 = rho0.values - 1.0
        for k, t in enumerate(times):
            expected = 1.0 + dev0 * math.exp(-(a + b) * t)
            assert np.allclose(traj.densities[k], expected, rtol=1e-12)

    def test_matches_rk4_oracle(self, chains):
        rng = np.random.default_rng(0)
        for chain in chains.values():
            rho0 = bl.random_density(chain, rng, 1.0)
            traj = bl.evolve(chain, bl.log_entropy(), rho0, [0.0, 0.4])
            rk = bl.evolve_rk4(chain, rho0, 0.4, dt=1e-4)
            assert np.max(np.abs(traj.densities[1] - rk)) <= 1e-8

    def test_mass_conservation(self, zr33):
        rho0 = bl.random_density(zr33, np.random.default_rng(1), 3.0)
        traj = bl.evolve(zr33, bl.power_entropy(1.5), rho0,
                         np.linspace(0.0, 4.0, 30))
        means = traj.densities @ (zr33.pi)
        assert np.max(np.abs(means - 1.0)) <= 1e-10

    def test_positivity_lower_bound(self, bl52):
        rho0 = bl.random_density(bl52, np.random.default_rng(2), 3.0)
        maxrate = float(np.max(bl52.rates.sum(axis=1)))
        times = np.linspace(0.0, 2.0, 10)
        traj = bl.evolve(bl52, bl.log_entropy(), rho0, times)
        floor = float(np.min(rho0.values)) * np.exp(-times * maxrate)
        assert np.all(traj.densities.min(axis=1) >= floor - 1e-12)

    def test_semigroup_property(self, rt4):
        rho0 = bl.random_density(rt4, np.random.default_rng(3), 1.0)
        e = bl.log_entropy()
        one = bl.evolve(rt4, e, rho0, [0.0, 0.7])
        two = bl.evolve(rt4, e, bl.Density(one.densities[1]), [0.0, 0.5])
        direct = bl.evolve(rt4, e, rho0, [0.0, 1.2])
        assert np.max(np.abs(two.densities[1] - direct.densities[1])) <= 1e-9

    def test_monotone_entropy_nonneg_production(self, bd8):
        rho0 = bl.random_density(bd8, np.random.default_rng(4), 1.0)
        traj = bl.evolve(bd8, bl.power_entropy(1.3), rho0,
                         np.linspace(0.0, 3.0, 40))
        assert np.all(np.diff(traj.entropy_values) <= 1e-10)
        assert np.all(traj.dirichlet_values >= -1e-14)

    def test_bad_times_rejected(self, rt3):
        rho0 = bl.normalize_density(rt3, np.ones(rt3.n_states))
        with pytest.raises(DomainError):
            bl.evolve(rt3, bl.log_entropy(), rho0, [0.0, 0.0])
        with pytest.raises(DomainError):
            bl.evolve(rt3, bl.log_entropy(), rho0, [-1.0, 1.0])


class TestDerivativeIdentities:
    def test_richardson_halving(self, rt4):
        rho0 = bl.random_density(rt4, np.random.default_rng(5), 1.0)
        e = bl.power_entropy(1.5)

        def worst_residual(dt):
            times = np.arange(0.0, 0.5 + dt / 2, dt)
            traj = bl.evolve(rt4, e, rho0, times)
            rep = bl.derivative_identity_check(rt4, e, traj)
            return max(c.max_residual for c in rep.checks)

        r1 = worst_residual(1e-3)
        r2 = worst_residual(5e-4)
        assert r1 / r2 == pytest.approx(4.0, rel=0.2)

    def test_stationary_start(self, rt3):
        rho0 = bl.normalize_density(rt3, np.ones(rt3.n_states))
        traj = bl.evolve(rt3, bl.log_entropy(), rho0, np.linspace(0, 1, 11))
        rep = bl.derivative_identity_check(rt3, bl.log_entropy(), traj)
        assert rep.passed
        assert all(c.max_residual <= 1e-12 for c in rep.checks)

    def test_quadratic_variance_production(self, bd8):
        # d/dt Var = -2 E(rho, rho)
        rho0 = bl.random_density(bd8, np.random.default_rng(6), 1.0)
        e = bl.quadratic_entropy()
        traj = bl.evolve(bd8, e, rho0, np.linspace(0.0, 0.2, 201))
        k = 100
        r = traj.densities[k]
        dvar = (traj.entropy_values[k + 1] - traj.entropy_values[k - 1]) \
            / (traj.times[k + 1] - traj.times[k - 1])
        prod = bl.dirichlet_form(bd8, r, r)
        assert dvar == pytest.approx(-2.0 * prod, rel=1e-4)
        # and E(phi'(rho), rho) = 2 E(rho, rho) since phi' = 2 rho - 2
        assert traj.dirichlet_values[k] == pytest.approx(2.0 * prod, rel=1e-10)

    def test_too_few_points(self, rt3):
        rho0 = bl.normalize_density(rt3, np.ones(rt3.n_states))
        traj = bl.evolve(rt3, bl.log_entropy(), rho0, [0.0, 1.0])
        with pytest.raises(DomainError):
            bl.derivative_identity_check(rt3, bl.log_entropy(), traj)


class TestFitDecay:
    def test_two_state_quadratic_rate(self, two_state):
        # variance of the two-state chain decays at exactly 2(a + b)
        rho0 = bl.normalize_density(two_state, np.array([1.6, 0.7]))
        traj = bl.evolve(two_state, bl.quadratic_entropy(), rho0,
                         np.linspace(0.0, 1.0, 101))
        fit = bl.fit_decay_rate(traj)
        assert fit.rate == pytest.approx(2.0 * 2.0, rel=1e-9)
        assert fit.slope == pytest.approx(4.0, rel=1e-9)

    def test_transposition_walk_bound(self, rt4):
        rng = np.random.default_rng(7)
        e = bl.power_entropy(1.5)
        for _ in range(3):
            rho0 = bl.random_density(rt4, rng, 1.0)
            traj = bl.evolve(rt4, e, rho0, np.linspace(0.0, 6.0, 61))
            fit = bl.fit_decay_rate(traj)
            assert fit.rate >= 2.0 / 3.0 - 1e-9

    def test_gap_eigenvector_rate(self, bd8):
        from beckner_lab.constants import poincare_eigenvector, spectral_gap
        f = poincare_eigenvector(bd8)
        rho0 = bl.normalize_density(bd8, 1.0 + 1e-4 * f)
        traj = bl.evolve(bd8, bl.quadratic_entropy(), rho0,
                         np.linspace(0.0, 0.5, 51))
        fit = bl.fit_decay_rate(traj)
        assert fit.rate == pytest.approx(2.0 * spectral_gap(bd8), rel=1e-6)

    def test_window_handling(self, two_state):
        rho0 = bl.normalize_density(two_state, np.array([1.6, 0.7]))
        traj = bl.evolve(two_state, bl.quadratic_entropy(), rho0,
                         np.linspace(0.0, 30.0, 301))
        # late window: entropy has converged below the floor there
        fit = bl.fit_decay_rate(traj)
        assert fit.diagnostics["window_used"][1] < 30.0
        with pytest.raises(DomainError):
            bl.fit_decay_rate(traj, window=(29.0, 30.0))


class TestDirichletDecay:
    def test_certified_rate_passes(self, rt4):
        rho0 = bl.random_density(rt4, np.random.default_rng(8), 1.0)
        e = bl.power_entropy(1.5)
        traj = bl.evolve(rt4, e, rho0, np.linspace(0.0, 5.0, 41))
        rep = bl.dirichlet_decay_check(rt4, e, traj, 2.0 / 3.0)
        assert rep.passed

    def test_inflated_rate_fails(self, rt4):
        rho0 = bl.random_density(rt4, np.random.default_rng(9), 1.0)
        e = bl.power_entropy(1.5)
        traj = bl.evolve(rt4, e, rho0, np.linspace(0.0, 5.0, 41))
        rep = bl.dirichlet_decay_check(rt4, e, traj, 10.0 * 2.0 / 3.0)
        assert not rep.passed
        assert rep.failures()[0].witness is not None

    def test_stationary_trivial(self, rt3):
        rho0 = bl.normalize_density(rt3, np.ones(rt3.n_states))
        traj = bl.evolve(rt3, bl.log_entropy(), rho0, np.linspace(0, 1, 11))
        assert bl.dirichlet_decay_check(rt3, bl.log_entropy(), traj, 1.0).passed


class TestRunDecay:
    def test_certifies_models(self, chains, specs):
        rng = np.random.default_rng(10)
        for name in ("random_transposition_4", "zero_range"):
            chain = chains[name]
            const = bl.paper_lambda(specs[name], 1.5)
            rho0 = bl.random_density(chain, rng, 1.0)
            rep = bl.run_decay(chain, bl.power_entropy(1.5), rho0, const.value)
            assert rep.certified, name

    def test_inflated_bound_not_certified(self, rt4):
        rho0 = bl.random_density(rt4, np.random.default_rng(11), 1.0)
        rep = bl.run_decay(rt4, bl.power_entropy(1.5), rho0, 10.0 * 2.0 / 3.0)
        assert not rep.certified
