"""Finite reversible Markov chains in move/rate form.

A chain is a finite state set S, a finite set G of moves (total maps
S -> S with an inverse-move table), jump rates c : S x G -> [0, inf) and
a strictly positive invariant probability vector pi.  The generator acts
as

    L f(eta) = sum_g c(eta, g) (f(g eta) - f(eta)),

and under reversibility the Dirichlet form has the symmetric gradient
representation

    E(f, g) = 1/2 pi[ sum_g c (grad_g f)(grad_g g) ] = -pi[f L g].

States carry opaque canonical keys (ints, tuples, ...) hashed into an
index map once at construction; all numerical work runs on index arrays.
Dense |S| x |S| matrices are materialized lazily and only below a desk
scale cap.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .entropy import ConvexEntropy
from .errors import (DomainError, ReversibilityError, SizeError)
from .reporting import CheckReport, VerificationReport

DENSE_CAP = 20000
DENSITY_FLOOR = 1e-12


class FiniteChain:
    """Immutable finite chain; arrays are write-protected after init."""

    def __init__(self, keys, move_names, targets, inverse, rates, pi,
                 meta=None):
        self.keys = tuple(keys)
        self.move_names = tuple(str(m) for m in move_names)
        self.targets = np.ascontiguousarray(targets, dtype=np.intp)
        self.inverse = np.ascontiguousarray(inverse, dtype=np.intp)
        self.rates = np.ascontiguousarray(rates, dtype=float)
        pi = np.ascontiguousarray(pi, dtype=float)
        if np.any(pi <= 0.0):
            raise DomainError("invariant measure must be strictly positive")
        total = pi.sum()
        # renormalize only when needed so serialization round-trips bit-exact
        self.pi = pi if abs(total - 1.0) <= 1e-15 else pi / total
        self.meta = dict(meta or {})
        self.key_index = {k: i for i, k in enumerate(self.keys)}
        self._dense = None
        self._spectral = None
        self._validate()
        for arr in (self.targets, self.inverse, self.rates, self.pi):
            arr.setflags(write=False)

    # -- shape ---------------------------------------------------------------

    @property
    def n_states(self) -> int:
        return len(self.keys)

    @property
    def n_moves(self) -> int:
        return len(self.move_names)

    def _validate(self):
        S, G = self.n_states, self.n_moves
        if self.targets.shape != (G, S):
            raise DomainError("targets must have shape (n_moves, n_states)")
        if self.rates.shape != (S, G):
            raise DomainError("rates must have shape (n_states, n_moves)")
        if self.pi.shape != (S,) or abs(self.pi.sum() - 1.0) > 1e-12:
            raise DomainError("pi must be a probability vector")
        if np.any(self.rates < 0.0):
            raise DomainError("rates must be nonnegative")
        if np.any(self.targets < 0) or np.any(self.targets >= S):
            raise DomainError("a move leads outside the state space")
        if self.inverse.shape != (G,):
            raise DomainError("inverse table must list one move per move")
        # inverse consistency wherever the rate is positive
        for g in range(G):
            ginv = self.inverse[g]
            active = self.rates[:, g] > 0.0
            back = self.targets[ginv][self.targets[g][active]]
            if not np.array_equal(back, np.flatnonzero(active)):
                bad = np.flatnonzero(active)[back != np.flatnonzero(active)][0]
                raise DomainError(
                    f"inverse of move {self.move_names[g]!r} fails at state "
                    f"{self.keys[bad]!r}")

    # -- operators -------------------------------------------------------------

    def grad(self, f, g: int):
        f = np.asarray(f, dtype=float)
        return f[self.targets[g]] - f

    def apply_generator(self, f):
        f = np.asarray(f, dtype=float)
        out = np.zeros_like(f)
        for g in range(self.n_moves):
            out += self.rates[:, g] * (f[self.targets[g]] - f)
        return out

    def dense_generator(self) -> np.ndarray:
        if self.n_states > DENSE_CAP:
            raise SizeError(
                f"dense generator capped at {DENSE_CAP} states "
                f"(requested {self.n_states})")
        if self._dense is None:
            S = self.n_states
            Q = np.zeros((S, S))
            rows = np.arange(S)
            for g in range(self.n_moves):
                np.add.at(Q, (rows, self.targets[g]), self.rates[:, g])
                Q[rows, rows] -= self.rates[:, g]
            Q.setflags(write=False)
            self._dense = Q
        return self._dense

    def symmetrized_spectrum(self):
        """Eigen-decomposition of D^{1/2} L D^{-1/2}, D = diag(pi).

        Returns (eigenvalues ascending of -L, orthonormal eigenvectors in
        the symmetrized basis, sqrt(pi)).  Valid under reversibility.
        """
        if self._spectral is None:
            Q = self.dense_generator()
            d = np.sqrt(self.pi)
            M = Q * d[:, None] / d[None, :]
            M = 0.5 * (M + M.T)
            w, U = np.linalg.eigh(-M)
            self._spectral = (w, U, d)
        return self._spectral


@dataclass(frozen=True)
class Density:
    """Strictly positive function on states with pi-mean one."""
    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=float)
        if np.any(v <= 0.0):
            raise DomainError("density must be strictly positive")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def generator_apply(chain: FiniteChain, f) -> np.ndarray:
    """(L f)(eta) = sum_g c(eta, g)(f(g eta) - f(eta)); L 1 = 0."""
    f = np.asarray(f, dtype=float)
    if f.shape != (chain.n_states,):
        raise DomainError("f must assign one value per state")
    return chain.apply_generator(f)


def dirichlet_form(chain: FiniteChain, f, g) -> float:
    """E(f, g) in symmetric gradient form, cross-checked against -pi[f Lg].

    The two representations agree only under reversibility; a mismatch
    beyond 1e-10 (relative) raises :class:`ReversibilityError` carrying
    both values.
    """
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    sym = 0.0
    scale = 0.0
    for mv in range(chain.n_moves):
        gf = chain.grad(f, mv)
        gg = chain.grad(g, mv)
        w = chain.pi * chain.rates[:, mv]
        sym += 0.5 * float(np.sum(w * gf * gg))
        scale += 0.5 * float(np.sum(w * np.abs(gf) * np.abs(gg)))
    adj = -float(np.sum(chain.pi * f * chain.apply_generator(g)))
    ref = max(scale, abs(adj), 1e-300)
    if abs(sym - adj) > 1e-10 * ref:
        raise ReversibilityError(
            f"gradient form {sym:.17g} and -pi[f Lg] = {adj:.17g} disagree; "
            f"the chain is not reversible")
    return sym


def entropy(chain: FiniteChain, e: ConvexEntropy, rho: Density) -> float:
    """pi[phi(rho)] >= 0, vanishing iff rho is identically one."""
    return float(np.sum(chain.pi * e.eval(rho.values)))


def check_reversibility(chain: FiniteChain, trials: int = 100, seed: int = 0,
                        tol: float = 1e-10) -> VerificationReport:
    """Verify pi[sum_g c F(eta,g)] = pi[sum_g c F(g eta, g^{-1})].

    Random bounded F catch aggregate imbalance; an exhaustive scan over
    indicator F locates the worst (state, move) pair, which doubles as
    the failure witness.
    """
    if trials < 1:
        raise DomainError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    flow = chain.pi[:, None] * chain.rates          # pi(eta) c(eta, g)
    back = np.empty_like(flow)
    moved = np.empty_like(flow, dtype=bool)
    for g in range(chain.n_moves):
        tg = chain.targets[g]
        back[:, g] = chain.pi[tg] * chain.rates[tg, chain.inverse[g]]
        moved[:, g] = tg != np.arange(chain.n_states)
    # zero-rate moves that fix the state carry no constraint
    active = (chain.rates > 0.0) | (moved & (back > 0.0))
    gap = np.where(active, np.abs(flow - back), 0.0)
    scale = max(float(flow.max()), 1e-300)
    i, g = np.unravel_index(np.argmax(gap), gap.shape)
    pointwise = CheckReport(
        "pointwise_flow_balance", bool(gap.max() <= tol * scale),
        float(gap.max() / scale), tol,
        witness=None if gap.max() <= tol * scale else
        {"state": chain.keys[int(i)], "move": chain.move_names[int(g)],
         "forward": float(flow[i, g]), "backward": float(back[i, g])})

    worst = 0.0
    for _ in range(trials):
        F = rng.uniform(-1.0, 1.0, size=(chain.n_states, chain.n_moves))
        lhs = float(np.sum(flow * F))
        rhs = 0.0
        for g2 in range(chain.n_moves):
            tg = chain.targets[g2]
            rhs += float(np.sum(chain.pi * chain.rates[:, g2]
                                * F[tg, chain.inverse[g2]]))
        worst = max(worst, abs(lhs - rhs))
    sum_scale = max(float(np.sum(flow)), 1e-300)
    randomized = CheckReport(
        "randomized_identity", bool(worst <= tol * sum_scale),
        float(worst / sum_scale), tol)

    report = VerificationReport()
    report.add(pointwise)
    report.add(randomized)
    return report


def normalize_density(chain: FiniteChain, raw,
                      floor: float = DENSITY_FLOOR) -> Density:
    """Clamp below ``floor`` and rescale to pi-mean one."""
    raw = np.asarray(raw, dtype=float)
    if raw.shape != (chain.n_states,):
        raise DomainError("raw vector must assign one value per state")
    if np.any(raw < 0.0) or np.any(~np.isfinite(raw)):
        raise DomainError("raw vector must be finite and nonnegative")
    if np.all(raw == 0.0):
        raise DomainError("raw vector must not be identically zero")
    clamped = np.maximum(raw, floor)
    mean = float(np.sum(chain.pi * clamped))
    return Density(clamped / mean)


def random_density(chain: FiniteChain, rng: np.random.Generator,
                   amplitude: float) -> Density:
    """Log-space Gaussian perturbation of the flat density, normalized."""
    raw = np.exp(amplitude * rng.standard_normal(chain.n_states))
    return normalize_density(chain, raw)


def seeded_densities(chain: FiniteChain, count: int, seed: int,
                     amplitudes=(0.1, 1.0, 3.0)) -> list[Density]:
    """Deterministic batch of trial densities cycling through amplitudes."""
    rng = np.random.default_rng(seed)
    return [random_density(chain, rng, amplitudes[k % len(amplitudes)])
            for k in range(count)]


# ---------------------------------------------------------------------------
# JSON export / import
# ---------------------------------------------------------------------------

def chain_to_json(chain: FiniteChain, indent: int | None = None) -> str:
    """Serialize; floats use shortest round-trip ``repr`` (<= 17 digits)."""
    triples = []
    for g in range(chain.n_moves):
        active = np.flatnonzero(chain.rates[:, g])
        for i in active:
            triples.append([int(i), g, float(chain.rates[i, g])])
    doc = {
        "states": [_key_out(k) for k in chain.keys],
        "pi": [float(p) for p in chain.pi],
        "moves": [
            {"name": chain.move_names[g],
             "inverse": chain.move_names[int(chain.inverse[g])],
             "map": [int(t) for t in chain.targets[g]]}
            for g in range(chain.n_moves)
        ],
        "rates": triples,
        "meta": _meta_out(chain.meta),
    }
    return json.dumps(doc, indent=indent)


def chain_from_json(text: str) -> FiniteChain:
    doc = json.loads(text)
    keys = [_key_in(k) for k in doc["states"]]
    names = [m["name"] for m in doc["moves"]]
    name_to_idx = {n: i for i, n in enumerate(names)}
    targets = np.array([m["map"] for m in doc["moves"]], dtype=np.intp)
    inverse = np.array([name_to_idx[m["inverse"]] for m in doc["moves"]],
                       dtype=np.intp)
    rates = np.zeros((len(keys), len(names)))
    for i, g, v in doc["rates"]:
        rates[i, g] = v
    return FiniteChain(keys, names, targets, inverse, rates,
                       np.array(doc["pi"]), meta=doc.get("meta", {}))


def _key_out(k):
    if isinstance(k, tuple):
        return list(k)
    return k


def _key_in(k):
    if isinstance(k, list):
        return tuple(k)
    return k


def _meta_out(meta: dict) -> dict:
    out = {}
    for k, v in meta.items():
        if isinstance(v, np.ndarray):
            out[k] = v.tolist()
        elif isinstance(v, (np.floating, np.integer)):
            out[k] = v.item()
        elif isinstance(v, (str, int, float, bool, type(None), list, dict)):
            out[k] = v
    return out
