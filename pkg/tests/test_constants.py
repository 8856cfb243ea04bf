"""Spectral gap and variational constant estimation."""

import numpy as np
import pytest

import beckner_lab as bl
from beckner_lab import DegeneracyError
from beckner_lab.constants import poincare_eigenvector, quotient_value


def complete_graph_chain(m, r):
    """Uniform rate r between every pair of m states (gap = m r)."""
    pairs = [(i, j) for i in range(m) for j in range(i + 1, m)]
    targets = np.empty((len(pairs), m), dtype=np.intp)
    rates = np.zeros((m, len(pairs)))
    for k, (i, j) in enumerate(pairs):
        tgt = np.arange(m)
        tgt[i], tgt[j] = j, i
        targets[k] = tgt
        rates[i, k] = rates[j, k] = r
    return bl.FiniteChain(list(range(m)), [f"({i},{j})" for i, j in pairs],
                          targets, np.arange(len(pairs)), rates,
                          np.full(m, 1.0 / m))


def scan_two_state_quotient(chain, kind, n=200001):
    """1-D brute-force scan over rho = (1 + x, 1 - x)/mean."""
    xs = np.linspace(-0.999, 0.999, n)
    xs = xs[np.abs(xs) > 1e-6]
    best = np.inf
    for x in xs:
        raw = np.array([1.0 + x, 1.0 - x])
        rho = bl.normalize_density(chain, raw)
        best = min(best, quotient_value(chain, kind, None, rho))
    return best


class TestSpectralGap:
    def test_two_state(self, two_state):
        assert bl.spectral_gap(two_state) == pytest.approx(2.0, rel=1e-12)

    def test_complete_graph(self):
        for m, r in ((4, 0.7), (6, 1.3)):
            assert bl.spectral_gap(complete_graph_chain(m, r)) == pytest.approx(
                m * r, rel=1e-12)

    def test_double_oracle(self, rt3, rt4):
        for chain in (rt3, rt4):
            gap = bl.spectral_gap(chain)
            # oracle 1: eigenvalues of the plain dense generator
            ev = np.linalg.eigvals(chain.dense_generator())
            nonzero = np.sort(-np.real(ev))
            oracle1 = nonzero[nonzero > 1e-10][-1] if False else \
                np.sort(nonzero[nonzero > 1e-10])[0]
            assert gap == pytest.approx(oracle1, abs=1e-8)
            # oracle 2: Rayleigh quotient at the gap eigenvector through
            # the Dirichlet-form code path
            f = poincare_eigenvector(chain)
            ray = bl.dirichlet_form(chain, f, f) / float(
                np.sum(chain.pi * f * f))
            assert gap == pytest.approx(ray, abs=1e-8)

    def test_reducible_detected(self):
        frozen = bl.FiniteChain([0, 1], ["swap"], np.array([[1, 0]]),
                                np.array([0]), np.array([[0.0], [0.0]]),
                                np.array([0.5, 0.5]))
        with pytest.raises(DegeneracyError):
            bl.spectral_gap(frozen)


class TestBecknerConstant:
    def test_alpha_two_equals_twice_gap(self, chains):
        for name, chain in chains.items():
            est = bl.beckner_constant(chain, 2.0)
            gap = bl.spectral_gap(chain)
            assert est.value == pytest.approx(2.0 * gap, rel=1e-6), name

    def test_bracketed_by_random_search(self, rt3):
        est = bl.beckner_constant(rt3, 1.5)
        assert 8.0 / 6.0 - 1e-9 <= est.value <= 2.0 * bl.spectral_gap(rt3) + 1e-6
        rng = np.random.default_rng(0)
        search = min(
            quotient_value(rt3, "beckner", 1.5,
                           bl.random_density(rt3, rng, (0.1, 1.0, 3.0)[k % 3]))
            for k in range(200000))
        assert est.value <= search + 1e-9

    def test_linearization_limit(self, bd8):
        # quotient at 1 + eps f tends to 2 E(f,f)/Var(f) = 2 lambda_P
        f = poincare_eigenvector(bd8)
        rho = bl.normalize_density(bd8, 1.0 + 1e-5 * f)
        val = quotient_value(bd8, "beckner", 1.5, rho)
        assert val == pytest.approx(2.0 * bl.spectral_gap(bd8), rel=1e-4)

    def test_optimizer_validity(self, rt4):
        est = bl.beckner_constant(rt4, 1.5)
        assert est.convergence["value_recheck_gap"] <= 1e-12 * max(1.0, est.value)
        assert est.convergence["renormalization_gap"] <= 1e-12 * max(1.0, est.value)
        assert est.convergence["converged_starts"] >= 1

    def test_range_check(self, rt3):
        with pytest.raises(bl.DomainError):
            bl.beckner_constant(rt3, 2.5)


class TestLogCaseConstants:
    def test_two_state_scan_oracles(self, two_state):
        est_m = bl.mlsi_constant(two_state, continuity_check=False)
        est_l = bl.lsi_constant(two_state)
        scan_m = scan_two_state_quotient(two_state, "mlsi")
        scan_l = scan_two_state_quotient(two_state, "lsi")
        assert est_m.value <= scan_m + 1e-9
        assert est_m.value == pytest.approx(scan_m, rel=1e-5)
        assert est_l.value <= scan_l + 1e-9
        assert est_l.value == pytest.approx(scan_l, rel=1e-4)

    def test_orderings(self, chains):
        for name, chain in chains.items():
            gap = bl.spectral_gap(chain)
            est_m = bl.mlsi_constant(chain, continuity_check=False)
            est_l = bl.lsi_constant(
                chain, extra_candidates=(est_m.minimizer.values,))
            assert est_m.value <= 2.0 * gap + 1e-6, name
            assert 4.0 * est_l.value <= est_m.value + 1e-6, name

    def test_alpha_to_one_continuity(self, rt4):
        est = bl.mlsi_constant(rt4)
        assert est.convergence["alpha_to_one_gap"] <= 1e-2

    def test_near_flat_quotient_linearizes(self, zr33):
        f = poincare_eigenvector(zr33)
        rho = bl.normalize_density(zr33, 1.0 + 1e-5 * f)
        val = quotient_value(zr33, "mlsi", None, rho)
        assert val == pytest.approx(2.0 * bl.spectral_gap(zr33), rel=1e-4)


class TestConstantsReport:
    def test_random_transposition_rows(self, rt4, specs):
        table = bl.constants_report(rt4, [1.1, 1.5, 2.0],
                                    spec=specs["random_transposition_4"])
        assert table.ordering_pass
        gap = bl.spectral_gap(rt4)
        for row in table.rows:
            assert row.paper_bound <= row.beckner_hat + 1e-6
            assert row.beckner_hat <= 2.0 * gap + 1e-6
        last = table.rows[-1]
        assert last.alpha == 2.0
        assert last.beckner_hat == pytest.approx(2.0 * gap, rel=1e-6)

    def test_homogeneous_exclusion_references(self, bl52, specs):
        table = bl.constants_report(bl52, [1.5],
                                    spec=specs["bernoulli_laplace"])
        assert "bobkov_tetali" in table.references
        assert "sharper_homogeneous" in table.references
        assert table.ordering_pass
