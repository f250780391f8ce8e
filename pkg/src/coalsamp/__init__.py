"""Coalescent sampling probabilities under finite-alleles mutation models.

Exact values come from a level-by-level solve of the coalescent recursion,
approximate ones from closed-form leading-order coefficients (up to four
observed alleles), and stochastic ones from an urn-process Monte Carlo.
"""
from .closedform import LeadingCoefficient, q_approx, q_leading, q_simple, rescaled
from .configspace import SampleConfig, count_configs, level_configs, parse_config, rank, unrank
from .errors import (CoalsampError, DomainError, ModelError, ResourceError, SingularityError,
                     SolverError, UnsupportedError, ValidationError)
from .exact import ExactValue, LevelTable, exact_q, exact_q_table, solve_level
from .harness import ErrorReport, relative_error, sweep_errors
from .model import (MutationModel, build_model, flip_model, is_irreducible_on, is_reversible_on,
                    load_model, primate_model, stationary_distribution, uniform_model)
from .oracle import q_leading_oracle, r_dp, r_subsample
from .urn import McEstimate, RootedTree, mc_estimate_R, simulate_urn, tree_distribution

__version__ = "0.1.0"
