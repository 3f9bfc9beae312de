"""Bootstrap plug-in baseline over a stored, shuffled trajectory."""

from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ValidationError
from .inference import InferenceReport, column_fsum, normal_quantile
from .markov import TrajectorySampler
from .rng import STATES, generator

MAX_REDRAWS = 10
# "spread": mean -/+ z sd; "replicates": mean -/+ z sd / sqrt(R)
INTERVALS = ("spread", "replicates")


@dataclass(frozen=True)
class BootstrapConfig:
    trajectory_length: int = 1_000_000
    resample_size: int = 10_000
    replicates: int = 500
    q: float = 0.05
    interval: str = "spread"

    def __post_init__(self):
        if self.trajectory_length < 1 or self.resample_size < 1:
            raise ValidationError("trajectory_length and resample_size must be positive")
        if self.resample_size > self.trajectory_length:
            raise ValidationError("resample_size cannot exceed trajectory_length")
        if self.replicates < 2:
            raise ValidationError("need at least 2 bootstrap replicates")
        if not 0 < self.q < 1:
            raise ValidationError("q must lie in (0, 1)")
        if self.interval not in INTERVALS:
            raise ValidationError(f"interval must be one of {INTERVALS}")


def _plug_in(problem, counts, size):
    a_hat = np.einsum("x,xij->ij", counts, problem.a_maps) / size
    b_hat = counts @ problem.b_maps / size
    return np.linalg.solve(a_hat, -b_hat)


def bootstrap_inference(problem, config, seed, states=None):
    """Resample states with replacement, solve A_hat theta + b_hat = 0 per replicate.

    Only the state occupancy of a resample matters, so each replicate reduces
    to a bincount.  By default the interval is the normal bootstrap interval
    mean -/+ z_{1-q/2} * sd over the replicate estimates; ``interval="replicates"``
    divides the spread by sqrt(R) instead.
    """
    rng = generator(seed, 1)
    if states is None:
        sampler = TrajectorySampler(problem.chain, "stationary", generator(seed, STATES))
        states = sampler.next_chunk(config.trajectory_length)
    else:
        states = np.asarray(states, dtype=np.int64)
        if states.shape[0] < config.resample_size:
            raise ValidationError("stored trajectory shorter than resample_size")
    states = states.copy()
    rng.shuffle(states)
    n = problem.n_states
    size = config.resample_size
    estimates = np.empty((config.replicates, problem.dim))
    for r in range(config.replicates):
        for _ in range(MAX_REDRAWS + 1):
            picks = states[rng.integers(0, states.shape[0], size=size)]
            counts = np.bincount(picks, minlength=n).astype(float)
            try:
                estimates[r] = _plug_in(problem, counts, size)
                break
            except np.linalg.LinAlgError:
                continue
        else:
            raise NumericError(f"replicate {r}: A_hat singular after {MAX_REDRAWS} redraws")
    return summarize_replicates(estimates, config.q, config.interval)


def summarize_replicates(estimates, q=0.05, interval="spread"):
    """Mean, covariance (1/R normalisation) and normal interval from replicate estimates."""
    est = np.asarray(estimates, dtype=float)
    if interval not in INTERVALS:
        raise ValidationError(f"interval must be one of {INTERVALS}")
    r = est.shape[0]
    mean = column_fsum(est) / r
    dev = est - mean
    cov = column_fsum(dev[:, :, None] * dev[:, None, :]) / r
    divisor = r if interval == "replicates" else 1
    half = normal_quantile(1.0 - q / 2.0) * np.sqrt(np.clip(np.diag(cov), 0.0, None) / divisor)
    return InferenceReport(mean, cov, mean - half, mean + half, 1.0 - q,
                           {"replicates": r, "interval": interval}, "bootstrap")
