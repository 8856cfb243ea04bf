"""End-to-end finite-volume drift-diffusion experiment.

Pipeline: discretize exp(-V) on [0, 1] into cell averages, build the
induced birth-death chain (reflecting closure at both ends), compute the
mesh rate lambda_h = 2 h^{-2} Phi(h^2 lambda / 8), evolve a density, and
check

* the entropy bound  Ent(rho_t) <= Ent(rho_0) exp(-2 a lambda_h t),
* the discrete power-entropy inequality at every sampled density
      2 lambda_h sum_n p_n (rho_n^a - 1)
        <= sum_n sqrt(p_n p_{n+1}) h^{-2}
               (rho_{n+1}^{a-1} - rho_n^{a-1})(rho_{n+1} - rho_n),
* the per-cell certificate chain behind the rate: the log-concavity
  inequality sqrt(p_{n-1} p_{n+1}) <= (1 - Phi) p_n, the rate-difference
  bounds with constant lambda_h / 2, and the curvature condition with
  constant alpha lambda_h obtained from them by the power-mean floor and
  the AM-GM step.

The cell certificates prove the rate alpha lambda_h for the ladder; the
stronger 2 alpha lambda_h bound is verified directly on trajectories
(the reflecting truncation at the potential minimum enlarges the gap
well past it, which the mesh-refinement study confirms).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .chain import Density, FiniteChain, entropy, random_density
from .constants import max_threads
from .dynamics import DecayReport, dirichlet_decay_check, evolve, fit_decay_rate
from .entropy import big_theta, power_entropy
from .errors import CapabilityError, DomainError, HypothesisError
from .models import (ModelSpec, build_fokker_planck_fv, lambda_h,
                     phi_mielke, potential_from_config)
from .reporting import CheckReport, VerificationReport


def _require_fv(chain: FiniteChain):
    if chain.meta.get("model") != "fokker_planck_fv":
        raise CapabilityError("chain was not built by the finite-volume builder")


def check_convexity(V, lambda_conv: float, Vpp=None, n_samples: int = 2001,
                    tol_rel: float = 1e-6) -> None:
    """Require V'' >= lambda on [0, 1], by second differences if needed."""
    xs = np.linspace(0.0, 1.0, n_samples)
    if Vpp is not None:
        vpp = np.asarray(Vpp(xs), dtype=float)
    else:
        h = 1e-3
        xi = xs[1:-1]
        vpp = (np.asarray(V(xi + h)) - 2.0 * np.asarray(V(xi))
               + np.asarray(V(xi - h))) / h ** 2
    if np.min(vpp) < lambda_conv - tol_rel * lambda_conv:
        raise HypothesisError(
            f"V'' >= {lambda_conv} fails: min sampled V'' = {np.min(vpp):.6g}")


def discrete_power_inequality(chain: FiniteChain, alpha: float,
                              rho: np.ndarray) -> tuple[float, float]:
    """(lhs, rhs) of the cell-weighted power-entropy inequality."""
    _require_fv(chain)
    p = np.asarray(chain.meta["cell_averages"], dtype=float)
    h = float(chain.meta["h"])
    lam = float(chain.meta["lambda_conv"])
    lh = lambda_h(h, lam)
    lhs = 2.0 * lh * float(np.sum(p * (rho ** alpha - 1.0)))
    kappa = np.sqrt(p[:-1] * p[1:])
    dpw = rho[1:] ** (alpha - 1.0) - rho[:-1] ** (alpha - 1.0)
    dr = rho[1:] - rho[:-1]
    rhs = float(np.sum(kappa / h ** 2 * dpw * dr))
    return lhs, rhs


def fv_condition_check(chain: FiniteChain, alpha: float,
                       tol: float = 1e-9) -> VerificationReport:
    """Per-cell certificate chain for the mesh decay rate.

    Violations are located by (0-based) cell index.  The curvature
    condition is checked against alpha lambda_h, the constant the cell
    bounds certify (lambda_h / 2 per rate difference, doubled by AM-GM,
    times the power-mean floor alpha).
    """
    _require_fv(chain)
    if not 1.0 < alpha <= 2.0:
        raise DomainError("alpha must lie in (1, 2]")
    p = np.asarray(chain.meta["cell_averages"], dtype=float)
    a = np.asarray(chain.meta["a"], dtype=float)
    b = np.asarray(chain.meta["b"], dtype=float)
    h = float(chain.meta["h"])
    lam = float(chain.meta["lambda_conv"])
    phi = phi_mielke(h ** 2 * lam / 8.0)
    lh = 2.0 * phi / h ** 2
    report = VerificationReport()

    # log-concavity of the cell weights, sharp for Gaussian weights:
    # sqrt(p_{n-1} p_{n+1}) <= (1 - Phi) p_n on interior cells.  The
    # margin decays like h^6, so the slack is absolute at float scale.
    ratio = np.sqrt(p[:-2] * p[2:]) / p[1:-1]
    gap = ratio - (1.0 - phi)
    worst = int(np.argmax(gap))
    mielke_ok = bool(np.max(gap) <= 1e-12)
    report.add(CheckReport(
        "cell_log_concavity", mielke_ok, float(np.max(gap)), 1e-12,
        witness=None if mielke_ok else {"cell": worst + 1}))

    # rate-difference bounds with constant lambda_h / 2
    A = a[:-1] - a[1:]
    B = b[1:] - b[:-1]
    need_a = 0.5 * lh * np.sqrt(p[1:] / p[:-1])
    need_b = 0.5 * lh * np.sqrt(p[:-1] / p[1:])
    gap_a = need_a - A
    gap_b = need_b - B
    ok_a = bool(np.max(gap_a) <= tol * lh)
    ok_b = bool(np.max(gap_b) <= tol * lh)
    report.add(CheckReport(
        "birth_rate_difference", ok_a, float(np.max(gap_a) / lh), tol,
        witness=None if ok_a else {"cell": int(np.argmax(gap_a))}))
    report.add(CheckReport(
        "death_rate_difference", ok_b, float(np.max(gap_b) / lh), tol,
        witness=None if ok_b else {"cell": int(np.argmax(gap_b))}))

    # curvature condition with the certified constant alpha lambda_h;
    # negative rate differences make the two-weight infimum unbounded
    # below, so such cells are automatic violations
    ent = power_entropy(alpha)
    target = alpha * lh
    worst_val = math.inf
    worst_cell = None
    for n in range(len(A)):
        if a[n] <= 0.0:
            continue
        if A[n] < 0.0 or B[n] < 0.0:
            val = -math.inf
        else:
            val = A[n] + B[n] + big_theta(ent, float(A[n]), float(B[n]))
        if val < worst_val:
            worst_val, worst_cell = val, n
    cond_ok = bool(worst_val >= target - tol * target)
    report.add(CheckReport(
        "curvature_condition", cond_ok,
        float(max(0.0, (target - worst_val) / target)), tol,
        witness=None if cond_ok else {"cell": worst_cell,
                                      "value": worst_val,
                                      "target": target}))
    return report


@dataclass(frozen=True)
class FVExperiment:
    potential: dict | None
    n_cells: int
    h: float
    lambda_conv: float
    alpha: float
    chain: FiniteChain
    lambda_h: float
    decay: DecayReport
    checks: VerificationReport


def run_fv_experiment(spec: ModelSpec, alpha: float, rho0: Density | None = None,
                      t_end: float | None = None, samples: int = 41,
                      seed: int = 0) -> FVExperiment:
    """Build, evolve, and verify the mesh decay bound 2 alpha lambda_h.

    ``samples`` is the number of trajectory sample times; the discrete
    power-entropy inequality is checked at each sampled density
    (including the initial one).  Default horizon: entropy drop by 1e6
    or t = 20 / (2 alpha lambda_h), whichever is shorter.
    """
    if spec.kind != "fokker_planck_fv":
        raise CapabilityError("expected a fokker_planck_fv model spec")
    if not 1.0 < alpha <= 2.0:
        raise DomainError("alpha must lie in (1, 2]")
    p = spec.params
    V, Vpp = potential_from_config(p["potential"])
    lam = float(p["lambda_conv"])
    check_convexity(V, lam, Vpp)
    n_cells = int(p["n_cells"])
    chain = build_fokker_planck_fv(V, n_cells, lam)
    h = 1.0 / n_cells
    lh = lambda_h(h, lam)
    rate = 2.0 * alpha * lh

    if rho0 is None:
        rho0 = random_density(chain, np.random.default_rng(seed), 1.0)
    if t_end is None:
        t_end = min(math.log(1e6), 20.0) / rate
    e = power_entropy(alpha)
    times = np.linspace(0.0, t_end, samples)
    traj = evolve(chain, e, rho0, times)
    fit = fit_decay_rate(traj)

    checks = VerificationReport()
    ent0 = traj.entropy_values[0]
    gap = traj.entropy_values - ent0 * np.exp(-rate * times)
    scale = ent0 + 1e-300
    ebound_ok = bool(np.max(gap) <= 1e-9 * scale)
    checks.add(CheckReport(
        "entropy_exponential_bound", ebound_ok, float(np.max(gap) / scale),
        1e-9, witness=None if ebound_ok else
        {"t": float(times[int(np.argmax(gap))])}))
    rate_ok = bool(fit.rate >= rate - 1e-6)
    checks.add(CheckReport("fitted_rate_vs_mesh_bound", rate_ok,
                           float(max(0.0, rate - fit.rate)), 1e-6,
                           witness={"fitted": fit.rate, "bound": rate}))

    worst_gap = -math.inf
    worst_t = None
    for k in range(len(times)):
        lhs, rhs = discrete_power_inequality(chain, alpha, traj.densities[k])
        sc = abs(rhs) + abs(lhs) + 1e-300
        g = (lhs - rhs) / sc
        if g > worst_gap:
            worst_gap, worst_t = g, float(times[k])
    disc_ok = bool(worst_gap <= 1e-9)
    checks.add(CheckReport("discrete_power_inequality", disc_ok,
                           float(worst_gap), 1e-9,
                           witness=None if disc_ok else {"t": worst_t}))

    for c in fv_condition_check(chain, alpha).checks:
        checks.add(c)

    # production decay is certified only at the per-cell rate
    dir_check = dirichlet_decay_check(chain, e, traj, alpha * lh)
    decay = DecayReport(traj, fit, rate, checks.checks[0], dir_check,
                        rate_ok and ebound_ok)
    return FVExperiment(p.get("potential"), n_cells, h, lam, alpha, chain,
                        lh, decay, checks)


@dataclass(frozen=True)
class RefinementRow:
    h: float
    lambda_h: float
    fitted_rate: float
    bound: float                  # 2 alpha lambda_h
    passed: bool


@dataclass(frozen=True)
class RefinementTable:
    rows: list[RefinementRow]
    lambda_h_increasing: bool
    gap_ratios: list[float]       # (lam - lam_h) / (lam - lam_{h/2})
    ratio_ok: bool


def mesh_refinement_study(potential_cfg: dict, lambda_conv: float,
                          cells_list, alpha: float,
                          seed: int = 0) -> RefinementTable:
    """Refinement sweep: lambda_h must increase toward lambda at O(h^2).

    For consecutive meshes related by halving h, the gap lambda -
    lambda_h must shrink by a factor in [3.5, 4.5].  Rows evaluate
    independently (and in parallel).
    """
    cells = [int(c) for c in cells_list]
    if any(c2 <= c1 for c1, c2 in zip(cells, cells[1:])):
        raise DomainError("cells_list must be strictly increasing")

    def row(n_cells):
        spec = ModelSpec("fokker_planck_fv",
                         {"potential": potential_cfg, "n_cells": n_cells,
                          "lambda_conv": lambda_conv})
        exp = run_fv_experiment(spec, alpha, seed=seed)
        bound = 2.0 * alpha * exp.lambda_h
        return RefinementRow(exp.h, exp.lambda_h, exp.decay.fit.rate, bound,
                             exp.decay.fit.rate >= bound - 1e-6)

    with ThreadPoolExecutor(max_workers=max_threads()) as pool:
        rows = list(pool.map(row, cells))

    lams = [r.lambda_h for r in rows]
    increasing = all(l2 > l1 for l1, l2 in zip(lams, lams[1:]))
    ratios = []
    for r1, r2 in zip(rows, rows[1:]):
        if abs(r1.h / r2.h - 2.0) < 1e-12:
            ratios.append((lambda_conv - r1.lambda_h)
                          / (lambda_conv - r2.lambda_h))
    ratio_ok = all(3.5 <= r <= 4.5 for r in ratios)
    return RefinementTable(rows, increasing, ratios, ratio_ok)
