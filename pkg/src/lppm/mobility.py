"""Sporadic and first-order Markov mobility models.

Training builds a visit-frequency profile or a (initial profile, transition
matrix) pair from quantized traces; sampling generates synthetic traces from
either model.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

PROB_TOL = 1e-12


def validate_profile(p: np.ndarray, name: str = "profile") -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1:
        raise ValueError(f"{name} must be 1-D")
    if np.any(p < 0):
        raise ValueError(f"{name} has negative entries")
    if abs(p.sum() - 1.0) > PROB_TOL:
        raise ValueError(f"{name} sums to {p.sum()!r}, not 1")
    return p


@dataclass(frozen=True)
class MarkovModel:
    """Initial profile plus row-stochastic transition matrix.

    ``transitions[j, i]`` is the probability of moving to cell i given the
    current cell is j. ``uniform_rows`` lists rows that had no observed
    outgoing transitions and were set to uniform during training.
    """

    initial: np.ndarray
    transitions: np.ndarray
    uniform_rows: tuple[int, ...] = field(default=())

    def __post_init__(self) -> None:
        validate_profile(self.initial, "initial profile")
        t = np.asarray(self.transitions, dtype=float)
        if t.ndim != 2 or t.shape[0] != t.shape[1] or t.shape[0] != self.initial.shape[0]:
            raise ValueError("transitions must be n x n matching the initial profile")
        if np.any(t < 0):
            raise ValueError("transitions have negative entries")
        if np.any(np.abs(t.sum(axis=1) - 1.0) > PROB_TOL):
            raise ValueError("transition rows must sum to 1")

    @property
    def n_cells(self) -> int:
        return self.initial.shape[0]


def train_profile(
    traces: Iterable[Sequence[int]], n_cells: int, pseudocount: float = 0.0
) -> np.ndarray:
    """Normalized visit histogram over cells, optionally smoothed.

    With pseudocount 0 at least one check-in is required.
    """

    if pseudocount < 0:
        raise ValueError("pseudocount must be >= 0")
    counts = np.zeros(n_cells, dtype=float)
    total = 0
    for trace in traces:
        arr = np.asarray(trace, dtype=np.int64)
        if arr.size == 0:
            continue
        if arr.min() < 0 or arr.max() >= n_cells:
            raise ValueError("trace contains cell ids outside [0, n_cells)")
        counts += np.bincount(arr, minlength=n_cells)
        total += arr.size
    if total == 0 and pseudocount == 0:
        raise ValueError("cannot train a profile from empty traces without a pseudocount")
    p = counts + pseudocount
    p /= p.sum()
    return p


def train_markov(
    traces: Iterable[Sequence[int]], n_cells: int, pseudocount: float = 0.0
) -> MarkovModel:
    """First-order chain fit: initial profile from all check-ins, transition
    rows from within-trace consecutive pairs (never across trace boundaries).

    Rows with no observed transitions and pseudocount 0 become uniform and are
    reported in ``uniform_rows``.
    """

    if pseudocount < 0:
        raise ValueError("pseudocount must be >= 0")
    traces = [np.asarray(t, dtype=np.int64) for t in traces]
    if not any(t.size for t in traces):
        raise ValueError("cannot train a Markov model from empty traces")
    initial = train_profile(traces, n_cells)

    counts = np.zeros((n_cells, n_cells), dtype=float)
    for t in traces:
        if t.size >= 2:
            np.add.at(counts, (t[:-1], t[1:]), 1.0)
    counts += pseudocount
    row_sums = counts.sum(axis=1)
    empty = row_sums == 0
    transitions = np.empty_like(counts)
    transitions[empty] = 1.0 / n_cells
    nonempty = ~empty
    transitions[nonempty] = counts[nonempty] / row_sums[nonempty, None]
    return MarkovModel(
        initial=initial,
        transitions=transitions,
        uniform_rows=tuple(int(i) for i in np.flatnonzero(empty)),
    )


def sample_categorical(rng: np.random.Generator, cdf: np.ndarray) -> int:
    """Draw one index from a precomputed cumulative distribution."""

    i = int(np.searchsorted(cdf, rng.random(), side="right"))
    return min(i, cdf.shape[0] - 1)


def sample_iid(profile: np.ndarray, length: int, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. trace of ``length`` cells drawn from ``profile``."""

    if length < 1:
        raise ValueError("length must be >= 1")
    cdf = np.cumsum(profile)
    idx = np.searchsorted(cdf, rng.random(length), side="right")
    return np.minimum(idx, profile.shape[0] - 1).astype(np.int64)


def sample_markov(model: MarkovModel, length: int, rng: np.random.Generator) -> np.ndarray:
    """Trace of ``length`` cells: first from the initial profile, the rest
    from successive transition rows."""

    if length < 1:
        raise ValueError("length must be >= 1")
    init_cdf = np.cumsum(model.initial)
    row_cdfs = np.cumsum(model.transitions, axis=1)
    out = np.empty(length, dtype=np.int64)
    out[0] = sample_categorical(rng, init_cdf)
    for r in range(1, length):
        out[r] = sample_categorical(rng, row_cdfs[out[r - 1]])
    return out
