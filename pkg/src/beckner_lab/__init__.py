"""Numerical laboratory for entropy decay of finite reversible chains.

Builds the classical stochastic particle models in move/rate form,
verifies the discrete summation-by-parts identities behind the
curvature method at machine precision, measures entropy-decay rates
against explicit constants, and brackets the sharp inequality constants
variationally.
"""

from .bochner import (BochnerStructure, bochner_identity_check,
                      identity_3id_check, ineq_ratio, proposition_sides,
                      r_function, r_function_for_chain, verify_assumption)
from .chain import (Density, FiniteChain, chain_from_json, chain_to_json,
                    check_reversibility, dirichlet_form, entropy,
                    generator_apply, normalize_density, random_density,
                    seeded_densities)
from .constants import (ConstantEstimate, OptimizerOptions, beckner_constant,
                        constants_report, lsi_constant, mlsi_constant,
                        spectral_gap)
from .dynamics import (DecayFit, DecayReport, Trajectory,
                       derivative_identity_check, dirichlet_decay_check,
                       evolve, evolve_rk4, fit_decay_rate, run_decay)
from .entropy import (ConvexEntropy, MeanFunction, big_theta,
                      big_theta_lower_bound, big_theta_with_argmin,
                      log_entropy, phi_eval, power_entropy,
                      quadratic_entropy, theta, theta_partials,
                      theta_surface, verify_concavity,
                      verify_theta_identities)
from .errors import (BecknerLabError, CapabilityError, ConfigError,
                     DegeneracyError, DegenerateInputError, DomainError,
                     HypothesisError, NumericalError, ReversibilityError,
                     SizeError)
from .fokker_planck import (FVExperiment, RefinementTable, fv_condition_check,
                            mesh_refinement_study, run_fv_experiment)
from .models import (ModelSpec, PaperConstant, build_bernoulli_laplace,
                     build_birth_death, build_fokker_planck_fv, build_model,
                     build_random_transposition, build_zero_range, erf,
                     lambda_h, linear_rate_table, mm_infinity_rates,
                     paper_lambda, potential_from_config)

__version__ = "0.1.0"
