"""The auxiliary function R, the remainder Gamma, and their identities.

For each chain family an auxiliary weight R(eta, gamma, delta) over
state/move/move triples satisfies three structural properties:

(i)   symmetry in the two moves;
(ii)  the adjointness identity
      pi[sum R(eta,g,d) psi(eta,g,d)] = pi[sum R(eta,g,d) psi(g eta, g^{-1}, d)]
      for all bounded psi;
(iii) moves commute, g d eta = d g eta, wherever R > 0.

The remainder Gamma(eta,g,d) = c(eta,g) c(eta,d) - R(eta,g,d) carries the
curvature content: for any positive density rho and admissible entropy,

    pi[L phi'(rho) L rho + phi''(rho)(L rho)^2]
        >= pi[sum Gamma (grad_g phi'(rho) grad_d rho
                         + phi''(rho) grad_g rho grad_d rho)],

and the decay constant certified at rho is twice that right side divided
by pi[sum_g c grad_g phi'(rho) grad_g rho].

R is stored sparsely (COO over nonzero triples); all checks are
vectorized gathers over the support, summed in a fixed state-major,
move-lexicographic order so residuals are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .chain import Density, FiniteChain
from .entropy import ConvexEntropy, MeanFunction
from .errors import CapabilityError, DegenerateInputError, DomainError
from .models import ModelSpec, build_model
from .reporting import CheckReport, VerificationReport


@dataclass
class BochnerStructure:
    """Sparse R over (state, move, move) triples plus the derived Gamma.

    ``eta``/``gamma``/``delta``/``value`` list the nonzero R entries;
    the Gamma support (all triples with c(eta,g) c(eta,d) > 0) is
    materialized lazily on first use.
    """
    eta: np.ndarray
    gamma: np.ndarray
    delta: np.ndarray
    value: np.ndarray
    _gamma_coo: tuple | None = field(default=None, repr=False)

    @property
    def nnz(self) -> int:
        return len(self.value)

    def r_dense(self, chain: FiniteChain) -> np.ndarray:
        R = np.zeros((chain.n_states, chain.n_moves, chain.n_moves))
        R[self.eta, self.gamma, self.delta] = self.value
        return R

    def gamma_coo(self, chain: FiniteChain):
        """COO triples of Gamma = c c - R over the support of c c > 0.

        Cached per structure; a structure belongs to the chain it was
        built for, which the cache enforces.
        """
        if self._gamma_coo is not None and self._gamma_coo[0] is not chain:
            self._gamma_coo = None
        if self._gamma_coo is None:
            cc = chain.rates[:, :, None] * chain.rates[:, None, :]
            gam = cc - self.r_dense(chain)
            ii, gg, dd = np.nonzero(cc > 0.0)
            self._gamma_coo = (chain, ii, gg, dd, gam[ii, gg, dd])
        return self._gamma_coo[1:]


def r_function(spec: ModelSpec, chain: FiniteChain | None = None) -> BochnerStructure:
    """Construct the model's auxiliary function R.

    Nonzero triples, by family (rates written in the chain's units):

    * birth-death:  R(n,+,+) = a(n) a(n+1), R(n,-,-) = b(n) b(n-1),
      R(n,+,-) = R(n,-,+) = a(n) b(n);
    * zero-range:   R(eta, xy, uv) = c_x(eta_x) c_u(eta_u) / L^2 for
      x != u and c_x(eta_x) c_x(eta_x - 1) / L^2 for x = u;
    * Bernoulli-Laplace:  c(eta,xy) c(eta,uv) when the four sites are
      pairwise distinct, else 0;
    * random transposition:  4/(n^2 (n-1)^2) when the two transpositions
      are disjoint, else 0.

    The finite-volume chain reuses the birth-death construction.
    """
    if chain is None:
        chain = build_model(spec)
    kind = spec.kind
    if kind in ("birth_death", "fokker_planck_fv"):
        return _r_birth_death(chain)
    if kind == "zero_range":
        return _r_zero_range(chain)
    if kind == "bernoulli_laplace":
        return _r_bernoulli_laplace(chain)
    if kind == "random_transposition":
        return _r_random_transposition(chain)
    raise CapabilityError(f"no auxiliary function for variant {kind!r}")


def r_function_for_chain(chain: FiniteChain) -> BochnerStructure:
    """Dispatch on the chain's own model metadata."""
    model = chain.meta.get("model")
    if model is None:
        raise CapabilityError("chain carries no model metadata")
    return r_function(ModelSpec(model, _params_from_meta(chain)), chain)


def _params_from_meta(chain: FiniteChain) -> dict:
    m = chain.meta
    model = m["model"]
    if model == "birth_death":
        return {"a": m["a"], "b": m["b"]}
    if model == "fokker_planck_fv":
        return {"n_cells": m["n_cells"], "lambda_conv": m["lambda_conv"],
                "potential": None}
    if model == "zero_range":
        return {"L": m["L"], "N": m["N"], "c_x": m["rate_table"]}
    if model == "bernoulli_laplace":
        return {"L": m["L"], "N": m["N"], "lambda_x": m["lambda_x"]}
    if model == "random_transposition":
        return {"n": m["n"]}
    raise CapabilityError(f"no auxiliary function for model {model!r}")


def _coo_from_dense(R: np.ndarray) -> BochnerStructure:
    ii, gg, dd = np.nonzero(R)
    order = np.lexsort((dd, gg, ii))      # state-major, move-lexicographic
    return BochnerStructure(ii[order], gg[order], dd[order],
                            R[ii, gg, dd][order])


def _r_birth_death(chain: FiniteChain) -> BochnerStructure:
    a = np.asarray(chain.meta["a"], dtype=float)
    b = np.asarray(chain.meta["b"], dtype=float)
    S = chain.n_states
    R = np.zeros((S, 2, 2))
    up, down = 0, 1
    a_next = np.append(a[1:], 0.0)
    b_prev = np.concatenate([[0.0], b[:-1]])
    R[:, up, up] = a * a_next
    R[:, down, down] = b * b_prev
    R[:, up, down] = R[:, down, up] = a * b
    return _coo_from_dense(R)


def _r_zero_range(chain: FiniteChain) -> BochnerStructure:
    occ = np.asarray(chain.meta["occupancy"], dtype=np.intp)
    table = np.asarray(chain.meta["rate_table"], dtype=float)
    pairs = [tuple(p) for p in chain.meta["pairs"]]
    L = int(chain.meta["L"])
    S, G = chain.n_states, chain.n_moves
    c_here = np.empty((S, G))
    c_less = np.empty((S, G))
    for m, (x, _) in enumerate(pairs):
        nx = occ[:, x]
        c_here[:, m] = table[x, nx]
        c_less[:, m] = np.where(nx >= 1, table[x, np.maximum(nx - 1, 0)], 0.0)
    src = np.array([x for (x, _) in pairs])
    R = np.empty((S, G, G))
    same = src[:, None] == src[None, :]
    # x != u: product of the two standing rates; x = u: second factor at
    # one particle fewer on the shared source site
    R[:] = c_here[:, :, None] * c_here[:, None, :]
    R *= ~same[None, :, :]
    R += (c_here[:, :, None] * c_less[:, None, :]) * same[None, :, :]
    R /= L ** 2
    return _coo_from_dense(R)


def _r_bernoulli_laplace(chain: FiniteChain) -> BochnerStructure:
    pairs = [tuple(p) for p in chain.meta["pairs"]]
    S, G = chain.n_states, chain.n_moves
    distinct = np.zeros((G, G), dtype=bool)
    for m1, (x, y) in enumerate(pairs):
        for m2, (u, v) in enumerate(pairs):
            distinct[m1, m2] = len({x, y, u, v}) == 4
    cc = chain.rates[:, :, None] * chain.rates[:, None, :]
    R = cc * distinct[None, :, :]
    return _coo_from_dense(R)


def _r_random_transposition(chain: FiniteChain) -> BochnerStructure:
    pairs = [tuple(p) for p in chain.meta["pairs"]]
    n = int(chain.meta["n"])
    S, G = chain.n_states, chain.n_moves
    disjoint = np.zeros((G, G), dtype=bool)
    for m1, (i, j) in enumerate(pairs):
        for m2, (k, ell) in enumerate(pairs):
            disjoint[m1, m2] = len({i, j, k, ell}) == 4
    R = np.broadcast_to(disjoint[None, :, :],
                        (S, G, G)) * (4.0 / (n ** 2 * (n - 1) ** 2))
    return _coo_from_dense(np.ascontiguousarray(R))


# ---------------------------------------------------------------------------
# structural checks
# ---------------------------------------------------------------------------

def verify_assumption(chain: FiniteChain, bs: BochnerStructure,
                      trials: int = 100, seed: int = 0,
                      tol: float = 1e-10) -> VerificationReport:
    """Check symmetry, adjointness, and commutation of R."""
    if trials < 1:
        raise DomainError("trials must be >= 1")
    report = VerificationReport()
    S, G = chain.n_states, chain.n_moves

    # (i) exact symmetry over stored triples
    Rd = bs.r_dense(chain)
    asym = np.abs(Rd - np.transpose(Rd, (0, 2, 1)))
    worst = float(asym.max())
    i, g, d = np.unravel_index(np.argmax(asym), asym.shape)
    report.add(CheckReport(
        "symmetry", worst == 0.0, worst, 0.0,
        witness=None if worst == 0.0 else
        {"state": chain.keys[int(i)], "moves": (chain.move_names[int(g)],
                                                chain.move_names[int(d)])}))

    # (ii) adjointness on random bounded psi
    rng = np.random.default_rng(seed)
    ii, gg, dd, vv = bs.eta, bs.gamma, bs.delta, bs.value
    tg = chain.targets[gg, ii]          # gamma eta
    ginv = chain.inverse[gg]
    scale = max(float(np.sum(chain.pi[ii] * np.abs(vv))), 1e-300)
    worst_gap = 0.0
    worst_psi = None
    for _ in range(trials):
        psi = rng.uniform(-1.0, 1.0, size=(S, G, G))
        lhs = float(np.sum(chain.pi[ii] * vv * psi[ii, gg, dd]))
        rhs = float(np.sum(chain.pi[ii] * vv * psi[tg, ginv, dd]))
        if abs(lhs - rhs) > worst_gap:
            worst_gap = abs(lhs - rhs)
            worst_psi = psi
    passed_ii = worst_gap <= tol * scale
    witness = None
    if not passed_ii and worst_psi is not None:
        # locate the triple with the largest one-sided imbalance
        contrib = np.abs(chain.pi[ii] * vv * (worst_psi[ii, gg, dd]
                                              - worst_psi[tg, ginv, dd]))
        k = int(np.argmax(contrib))
        witness = {"state": chain.keys[int(ii[k])],
                   "moves": (chain.move_names[int(gg[k])],
                             chain.move_names[int(dd[k])])}
    report.add(CheckReport("adjointness", passed_ii, worst_gap / scale, tol,
                           witness=witness))

    # (iii) commutation on the support, exact on state indices
    gd = chain.targets[gg, chain.targets[dd, ii]]
    dg = chain.targets[dd, chain.targets[gg, ii]]
    bad = np.flatnonzero(gd != dg)
    report.add(CheckReport(
        "commutation", len(bad) == 0, float(len(bad)), 0.0,
        witness=None if len(bad) == 0 else
        {"state": chain.keys[int(ii[bad[0]])],
         "moves": (chain.move_names[int(gg[bad[0]])],
                   chain.move_names[int(dd[bad[0]])])}))
    return report


@dataclass(frozen=True)
class IdentityGap:
    """Absolute two-sided gap of an identity, with its size scale."""
    gap: float
    scale: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.gap <= self.tolerance * self.scale


def bochner_identity_check(chain: FiniteChain, bs: BochnerStructure,
                           chi, psi, beta: np.ndarray,
                           tol: float = 1e-10) -> IdentityGap:
    """Two sides of the summation-by-parts identity

        pi[sum R beta(eta, d eta) grad_d chi grad_g psi]
        = 1/4 pi[sum R grad_g(beta(eta, d eta) grad_d chi)
                       grad_d grad_g psi].

    ``beta`` is a symmetric (S, S) state-pair array.
    """
    chi = np.asarray(chi, dtype=float)
    psi = np.asarray(psi, dtype=float)
    beta = np.asarray(beta, dtype=float)
    S = chain.n_states
    if beta.shape != (S, S):
        raise DomainError("beta must be a full state-pair array")
    asym = np.abs(beta - beta.T)
    allowed = 1e-9 * (np.abs(beta) + np.abs(beta.T)) \
        + 1e-15 * max(1.0, float(np.abs(beta).max()))
    if np.any(asym > allowed):
        raise DomainError("beta must be symmetric")

    ii, gg, dd, vv = bs.eta, bs.gamma, bs.delta, bs.value
    g_eta = chain.targets[gg, ii]
    d_eta = chain.targets[dd, ii]
    dg_eta = chain.targets[dd, g_eta]          # delta gamma eta

    w = chain.pi[ii] * vv
    grad_d_chi = chi[d_eta] - chi[ii]
    grad_g_psi = psi[g_eta] - psi[ii]
    lhs_terms = w * beta[ii, d_eta] * grad_d_chi * grad_g_psi
    lhs = float(np.sum(lhs_terms))

    F_here = beta[ii, d_eta] * grad_d_chi
    F_moved = beta[g_eta, dg_eta] * (chi[dg_eta] - chi[g_eta])
    grad_g_F = F_moved - F_here
    # grad_d of (eta -> grad_g psi(eta))
    grad_dg_psi = (psi[chain.targets[gg, d_eta]] - psi[d_eta]) - grad_g_psi
    rhs_terms = 0.25 * w * grad_g_F * grad_dg_psi
    rhs = float(np.sum(rhs_terms))

    scale = float(np.sum(np.abs(lhs_terms)) + np.sum(np.abs(rhs_terms)))
    return IdentityGap(abs(lhs - rhs), max(scale, 1e-300), tol)


def identity_3id_check(chain: FiniteChain, bs: BochnerStructure,
                       rho: Density, e: ConvexEntropy,
                       samples: int = 200, seed: int = 0) -> float:
    """Pointwise second-gradient identity at sampled support triples.

    With psi = phi'(rho) and hat(eta, xi) = theta(rho(eta), rho(xi)):

        grad_g hat(eta, d eta) (grad_d psi)^2
          + grad_g(hat(eta, d eta) grad_d psi) grad_d grad_g psi
        = hat(g eta, g d eta)(grad_g grad_d psi)^2
          - hat(eta, d eta) grad_d psi(g eta) grad_d psi(eta)
          + hat(g eta, d g eta) grad_d psi(g eta) grad_d psi(eta).

    Returns the maximum residual scaled by each triple's term sizes.
    """
    if bs.nnz == 0:
        return 0.0
    rng = np.random.default_rng(seed)
    take = min(samples, bs.nnz)
    sel = rng.choice(bs.nnz, size=take, replace=False)
    ii, gg, dd = bs.eta[sel], bs.gamma[sel], bs.delta[sel]

    mean = MeanFunction(e)
    r = rho.values
    psi = e.d1(r)
    g_eta = chain.targets[gg, ii]
    d_eta = chain.targets[dd, ii]
    gd_eta = chain.targets[gg, d_eta]     # gamma delta eta
    dg_eta = chain.targets[dd, g_eta]     # delta gamma eta

    hat = mean.theta(r[ii], r[d_eta])
    hat_g = mean.theta(r[g_eta], r[gd_eta])
    hat_dg = mean.theta(r[g_eta], r[dg_eta])

    grad_d_psi = psi[d_eta] - psi[ii]
    grad_d_psi_g = psi[dg_eta] - psi[g_eta]
    grad_dg = (psi[gd_eta] - psi[d_eta]) - (psi[g_eta] - psi[ii])

    # grad_g of (eta -> hat(eta, d eta)) lands at hat(g eta, d g eta);
    # on the R-support the moves commute so hat_dg and hat_g coincide
    lhs = ((hat_dg - hat) * grad_d_psi ** 2
           + (hat_dg * grad_d_psi_g - hat * grad_d_psi) * grad_dg)
    rhs = (hat_g * (grad_d_psi_g - grad_d_psi) ** 2
           - hat * grad_d_psi_g * grad_d_psi
           + hat_dg * grad_d_psi_g * grad_d_psi)
    scale = (np.abs(lhs) + np.abs(hat_g * grad_dg ** 2)
             + np.abs(hat * grad_d_psi_g * grad_d_psi)
             + np.abs(hat_dg * grad_d_psi_g * grad_d_psi) + 1e-300)
    return float(np.max(np.abs(lhs - rhs) / scale))


# ---------------------------------------------------------------------------
# the key inequality and its per-density ratio
# ---------------------------------------------------------------------------

def proposition_sides(chain: FiniteChain, bs: BochnerStructure,
                      e: ConvexEntropy, rho: Density) -> tuple[float, float]:
    """(lhs, rhs) of the curvature inequality

        pi[L phi'(rho) L rho + phi''(rho)(L rho)^2]
        >= pi[sum Gamma (grad_g phi'(rho) grad_d rho
                         + phi''(rho) grad_g rho grad_d rho)].
    """
    r = rho.values
    f = e.d1(r)
    Lr = chain.apply_generator(r)
    Lf = chain.apply_generator(f)
    lhs = float(np.sum(chain.pi * (Lf * Lr + e.d2(r) * Lr * Lr)))

    ii, gg, dd, gam = bs.gamma_coo(chain)
    g_eta = chain.targets[gg, ii]
    d_eta = chain.targets[dd, ii]
    term = ((f[g_eta] - f[ii]) * (r[d_eta] - r[ii])
            + e.d2(r[ii]) * (r[g_eta] - r[ii]) * (r[d_eta] - r[ii]))
    rhs = float(np.sum(chain.pi[ii] * gam * term))
    return lhs, rhs


def entropy_production(chain: FiniteChain, e: ConvexEntropy,
                       rho: Density) -> float:
    """pi[sum_g c grad_g phi'(rho) grad_g rho] = 2 E(phi'(rho), rho)."""
    r = rho.values
    f = e.d1(r)
    total = 0.0
    for g in range(chain.n_moves):
        tg = chain.targets[g]
        total += float(np.sum(chain.pi * chain.rates[:, g]
                              * (f[tg] - f) * (r[tg] - r)))
    return total


def ineq_ratio(chain: FiniteChain, bs: BochnerStructure,
               e: ConvexEntropy, rho: Density) -> float:
    """Largest lambda certified at rho: 2 x (Gamma sum) / (production sum).

    Minimizing this ratio over trial densities brackets the certifiable
    decay constant from above.
    """
    den = entropy_production(chain, e, rho)
    r = rho.values
    scale = float(np.max(chain.rates) * np.max(np.abs(e.d1(r)))
                  * np.max(np.abs(r)) + 1e-300)
    if abs(den) <= 1e-14 * scale:
        raise DegenerateInputError(
            "entropy production vanishes; rho is (numerically) constant")
    _, rhs = proposition_sides(chain, bs, e, rho)
    return 2.0 * rhs / den
