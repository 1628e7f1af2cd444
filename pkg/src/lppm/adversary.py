"""Optimal Bayesian attacks on recorded mechanism runs.

Both attacks consume only the released cells' per-step likelihood vectors
(the public description of the mechanism's behavior) plus a mobility model of
the target, never the real trace. Estimates minimize the expected distance to
the real cell under the attacker's posterior; ties break to the lowest id.
"""

from __future__ import annotations

import numpy as np

from .mechanisms import DegenerateObservation, TraceRecord, markov_posterior, markov_prior_update
from .mobility import MarkovModel


def bayes_estimate(belief: np.ndarray, d_p: np.ndarray) -> int:
    """Cell minimizing the belief-expected distance; lowest id on ties."""

    return int(np.argmin(belief @ d_p))


def attack_sporadic(record: TraceRecord, pi_test: np.ndarray, d_p: np.ndarray) -> np.ndarray:
    """Per-step single-observation attack: posterior from the test profile
    and the step's likelihood vector, then the minimum-cost estimate.

    Steps whose observation is impossible under the profile fall back to the
    prior itself.
    """

    posteriors = record.likelihoods * pi_test[None, :]
    dead = posteriors.sum(axis=1) <= 0.0
    if np.any(dead):
        posteriors[dead] = pi_test
    costs = posteriors @ d_p
    return np.argmin(costs, axis=1).astype(np.int64)


def attack_markov(record: TraceRecord, model_test: MarkovModel, d_p: np.ndarray) -> np.ndarray:
    """Forward-filtering attack: Bayes update of the running prior with each
    step's likelihood vector, estimate from the posterior, then push the
    posterior through the transition matrix for the next step."""

    prior = model_test.initial.copy()
    estimates = np.empty(len(record), dtype=np.int64)
    for r in range(len(record)):
        try:
            posterior = markov_posterior(prior, record.likelihoods[r])
        except DegenerateObservation:
            posterior = prior
        estimates[r] = bayes_estimate(posterior, d_p)
        prior = markov_prior_update(posterior, model_test)
    return estimates
