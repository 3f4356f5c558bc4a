"""Sound interval Markov chain abstractions of perturbed stochastic systems."""

from .abstraction import ReferenceLedger, build_imc
from .checker import ProbInterval, check_property, winning_region
from .errors import (AlphabetMismatch, BudgetError, CombinatorialCap, DegenerateVariance,
                     DomainError, ImcVerifyError, Infeasible, MisalignedLabels, NoFeasibleEta,
                     NonConvergence, ParseError, TruncationWarning, ValidationError)
from .gaussian import (GaussianIntervalParams, GaussianPoint, box_prob_bounds,
                       complement_prob_bounds, gaussian_w1_bounds)
from .imc import (Imc, cost_matrix, example_imc, marginal_vertices, row_gap, row_vertices,
                  tv_distance, validate_imc, w1_discrete)
from .intervals import Interval, IntervalBox
from .io import load_config, load_imc, parse_config, save_imc
from .properties import parse_formula, parse_property
from .robustness import completeness_margin, max_eta, sandwich_report
from .simulation import (PerturbationPolicy, clopper_pearson, estimate_probability,
                         monte_carlo, simulate_paths, soundness_check)
from .system import Partition, SystemSpec, build_partition

__version__ = "0.1.0"
