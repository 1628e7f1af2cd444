"""Obfuscation channels and mechanisms.

Base channels (location hiding, exponential), optimal posterior remapping for
the sporadic model, and the belief-tracking Markov mechanism that remaps
against the filtered prior at every step. A released location's likelihood
vector (the column of the effective per-step channel) travels with each step
so that adversaries and metrics can replay the mechanism's public behavior.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mobility import MarkovModel, sample_categorical, validate_profile

PROB_TOL = 1e-12


class DegenerateObservation(Exception):
    """Observation has zero probability under the current belief."""


def validate_channel(f: np.ndarray, name: str = "channel") -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.ndim != 2:
        raise ValueError(f"{name} must be a 2-D matrix")
    if np.any(f < 0):
        raise ValueError(f"{name} has negative entries")
    if np.any(np.abs(f.sum(axis=1) - 1.0) > PROB_TOL):
        raise ValueError(f"{name} rows must sum to 1")
    return f


def location_hiding(alpha: float, n: int, exclude_self: bool = False) -> np.ndarray:
    """Reveal the true cell with probability alpha, otherwise a uniformly
    random cell. With exclude_self the random draw avoids the true cell."""

    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    eye = np.eye(n)
    if exclude_self:
        if n == 1:
            return np.ones((1, 1))
        return alpha * eye + (1.0 - alpha) * (1.0 - eye) / (n - 1)
    return alpha * eye + (1.0 - alpha) / n * np.ones((n, n))


def exponential_mechanism(epsilon: float, d: np.ndarray) -> np.ndarray:
    """Report cell z with probability proportional to exp(-d[x, z] * epsilon).

    epsilon is in 1/km; epsilon 0 gives uniform rows.
    """

    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    w = np.exp(-np.asarray(d, dtype=float) * epsilon)
    return w / w.sum(axis=1, keepdims=True)


def compose_remap(base: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Channel obtained by releasing g(z) whenever ``base`` draws z."""

    n, m = base.shape
    out = np.zeros((m, n))
    np.add.at(out, np.asarray(g, dtype=np.int64), base.T)
    return out.T


def remap_sporadic(
    base: np.ndarray, pi: np.ndarray, d_q: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Optimal remap of ``base`` under design profile ``pi``.

    Each tentative output is replaced by the cell minimizing the
    posterior-expected loss; returns (remap table, composed channel).
    Outputs with zero marginal probability map to themselves.
    """

    base = np.asarray(base, dtype=float)
    pi = np.asarray(pi, dtype=float)
    d_q = np.asarray(d_q, dtype=float)
    if d_q.shape != (base.shape[0], base.shape[1]):
        raise ValueError("distance matrix must be n_real x n_outputs for the channel")
    weighted = base * pi[:, None]  # (n, m): joint of (real cell, tentative output)
    marginals = weighted.sum(axis=0)
    # Expected loss of releasing z after drawing tentative output; the
    # posterior's normalizer is a positive per-row constant, so the argmin
    # over the unnormalized rows is identical.
    cost = weighted.T @ d_q  # (m, m_outputs)
    g = np.argmin(cost, axis=1).astype(np.int64)
    dead = marginals <= 0.0
    if np.any(dead):
        g[dead] = np.flatnonzero(dead)
    return g, compose_remap(base, g)


@dataclass(frozen=True)
class TraceRecord:
    """Log of one mechanism run: real cells, released cells, and the per-step
    likelihood vectors of the released cells."""

    x: np.ndarray
    z: np.ndarray
    likelihoods: np.ndarray  # (steps, n_cells)
    degenerate_steps: int = 0

    def __post_init__(self) -> None:
        if not (len(self.x) == len(self.z) == self.likelihoods.shape[0]):
            raise ValueError("trace record fields must have equal length")

    def __len__(self) -> int:
        return len(self.x)


class Mechanism:
    """Stateful obfuscator: step(x, rng) -> (released cell, likelihood vector).

    Instances are single-threaded; reset() restores the initial state so one
    instance can be reused across independent traces.
    """

    n: int

    def reset(self) -> None:
        pass

    def step(self, x: int, rng: np.random.Generator) -> tuple[int, np.ndarray]:
        raise NotImplementedError

    @property
    def degenerate_steps(self) -> int:
        return 0


class SporadicMechanism(Mechanism):
    """Memoryless mechanism: a fixed base channel followed by a fixed remap."""

    def __init__(self, base: np.ndarray, remap: np.ndarray, channel: np.ndarray):
        self.base = base
        self.remap = remap
        self.channel = channel  # composed channel actually governing releases
        self.n = base.shape[0]
        self._base_cdf = np.cumsum(base, axis=1)

    def step(self, x: int, rng: np.random.Generator) -> tuple[int, np.ndarray]:
        draft = sample_categorical(rng, self._base_cdf[x])
        z = int(self.remap[draft])
        return z, self.channel[:, z]


def sporadic_mechanism(base: np.ndarray, pi: np.ndarray, d_q: np.ndarray) -> SporadicMechanism:
    """Optimal sporadic mechanism: remap ``base`` once under ``pi``."""

    base = validate_channel(base)
    pi = validate_profile(pi)
    if base.shape[0] != pi.shape[0]:
        raise ValueError("base channel rows must match the profile length")
    g, channel = remap_sporadic(base, pi, d_q)
    return SporadicMechanism(base, g, channel)


def markov_prior_update(belief: np.ndarray, model: MarkovModel) -> np.ndarray:
    """Push a belief over the current cell one step through the chain."""

    return belief @ model.transitions


def markov_posterior(prior: np.ndarray, likelihood: np.ndarray) -> np.ndarray:
    """Bayes update of ``prior`` with a likelihood vector over cells."""

    p = prior * likelihood
    s = p.sum()
    if s <= 0.0:
        raise DegenerateObservation("observation impossible under the current belief")
    return p / s


class MarkovMechanism(Mechanism):
    """Belief-tracking mechanism for correlated traces.

    Holds the prior over the current real cell given all past releases;
    every step remaps the base channel against that prior, releases, then
    runs the Bayes + chain-transition update. The belief only ever uses
    released information, so an observer of the outputs can reproduce it.
    """

    def __init__(self, base: np.ndarray, model: MarkovModel, d_q: np.ndarray):
        self.base = base
        self.model = model
        self.d_q = d_q
        self.n = base.shape[0]
        self._base_cdf = np.cumsum(base, axis=1)
        self.reset()

    def reset(self) -> None:
        self.belief = self.model.initial.copy()
        self._degenerate = 0

    @property
    def degenerate_steps(self) -> int:
        return self._degenerate

    def step(self, x: int, rng: np.random.Generator) -> tuple[int, np.ndarray]:
        g, channel = remap_sporadic(self.base, self.belief, self.d_q)
        draft = sample_categorical(rng, self._base_cdf[x])
        z = int(g[draft])
        likelihood = channel[:, z]
        try:
            posterior = markov_posterior(self.belief, likelihood)
        except DegenerateObservation:
            posterior = self.belief
            self._degenerate += 1
        self.belief = markov_prior_update(posterior, self.model)
        return z, likelihood


def markov_mechanism(base: np.ndarray, model: MarkovModel, d_q: np.ndarray) -> MarkovMechanism:
    """Optimal per-step remapped mechanism under a hardwired Markov model."""

    base = validate_channel(base)
    if base.shape[0] != model.n_cells:
        raise ValueError("base channel rows must match the model size")
    return MarkovMechanism(base, model, d_q)


def run_trace(mech: Mechanism, x, rng: np.random.Generator) -> TraceRecord:
    """Feed a real trace through a mechanism, logging releases and the
    per-step likelihood vectors."""

    x = np.asarray(x, dtype=np.int64)
    if x.size == 0:
        raise ValueError("trace must be nonempty")
    mech.reset()
    z = np.empty(x.size, dtype=np.int64)
    likelihoods = np.empty((x.size, mech.n))
    for r in range(x.size):
        z[r], likelihoods[r] = mech.step(int(x[r]), rng)
    return TraceRecord(x=x, z=z, likelihoods=likelihoods, degenerate_steps=mech.degenerate_steps)
