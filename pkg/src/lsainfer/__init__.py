"""Inference for constant-stepsize linear stochastic approximation on Markov chains."""

from .bootstrap import BootstrapConfig, bootstrap_inference
from .engine import RunConfig, StepsizeSchedule, run_coupled, run_nonlinear
from .errors import (ConditioningWarning, ConsistencyError, DegenerateError, DivergenceError, GenerationError,
                     LengthError, LsaInferError, NumericError, PlanError, ValidationError)
from .harness import ExperimentSpec, coverage_experiment, empirical_bias, percentile_summary, qq_export, run_trial
from .inference import (BatchMeans, BatchPlan, batch_means, confidence_intervals, covariance_estimator, infer,
                        normal_quantile, overall_mean)
from .kernels import available_backends, get_backend, set_backend
from .markov import FiniteChain, check_ergodicity, random_ergodic_chain, sample_trajectory, stationary_distribution
from .problems import (LsaProblem, check_zero_bias_condition, multiplicative_noise_problem, random_lsa_problem,
                       realizable_td_problem, target_vector)
from .rr import equidistant_schedule, explicit_schedule, geometric_schedule, rr_coefficients, rr_combine

__version__ = "0.1.0"
