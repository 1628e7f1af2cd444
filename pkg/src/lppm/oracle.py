"""Exact brute-force computations on tiny instances.

These enumerate every location/output sequence, so they carry hard size
guards and exist purely as an independent test bed for the fast paths:
multi-step optimal-adversary error for arbitrary (even history-dependent)
mechanisms, marginalization of such a mechanism to a memoryless channel, and
exhaustive search over deterministic remaps.

A history-dependent mechanism is represented as a callable
``lppm(step, z_hist, x_hist) -> distribution over outputs`` where ``step`` is
0-based, ``z_hist`` is the tuple of previous outputs, and ``x_hist`` is the
tuple of real cells up to and including the current one.
"""

from __future__ import annotations

from itertools import product
from typing import Callable

import numpy as np

from .metrics import theoretical_qavg
from .mechanisms import compose_remap
from .mobility import MarkovModel

FullLppm = Callable[[int, tuple[int, ...], tuple[int, ...]], np.ndarray]

MAX_CELLS = 4
MAX_HORIZON = 3
MAX_REMAP_OUTPUTS = 6


def memoryless_lppm(channel: np.ndarray) -> FullLppm:
    """Wrap a memoryless channel in the history-dependent interface."""

    def lppm(step: int, z_hist: tuple[int, ...], x_hist: tuple[int, ...]) -> np.ndarray:
        return channel[x_hist[-1]]

    return lppm


def random_full_lppm(n: int, m: int, horizon: int, rng: np.random.Generator) -> FullLppm:
    """Random history-dependent mechanism: an independent random output
    distribution for every (step, output history, real-cell history)."""

    tables: dict[tuple[int, tuple[int, ...], tuple[int, ...]], np.ndarray] = {}
    for step in range(horizon):
        for z_hist in product(range(m), repeat=step):
            for x_hist in product(range(n), repeat=step + 1):
                row = rng.random(m) + 1e-3
                tables[(step, z_hist, x_hist)] = row / row.sum()

    def lppm(step: int, z_hist: tuple[int, ...], x_hist: tuple[int, ...]) -> np.ndarray:
        return tables[(step, z_hist, x_hist)]

    return lppm


def _sequence_prob(model, xs: tuple[int, ...]) -> float:
    if isinstance(model, MarkovModel):
        p = model.initial[xs[0]]
        for a, b in zip(xs, xs[1:]):
            p *= model.transitions[a, b]
        return float(p)
    p = 1.0
    for x in xs:
        p *= model[x]
    return float(p)


def _n_outputs(lppm: FullLppm) -> int:
    return int(np.asarray(lppm(0, (), (0,))).shape[0])


def _guard(n: int, m: int, horizon: int) -> None:
    if n > MAX_CELLS or m > MAX_CELLS or horizon > MAX_HORIZON:
        raise ValueError(
            f"instance too large for exhaustive enumeration "
            f"(n={n}, m={m}, horizon={horizon}; limits {MAX_CELLS}/{MAX_CELLS}/{MAX_HORIZON})"
        )


def exact_min_pae(model, lppm: FullLppm, d_p: np.ndarray, horizon: int, target: int) -> float:
    """Error of the exactly-optimal adversary estimating the real cell of
    step ``target`` (0-based) after observing all ``horizon`` outputs.

    Enumerates every (real sequence, output sequence) pair; for each output
    sequence the adversary picks the estimate with minimal posterior-weighted
    distance.
    """

    n = model.n_cells if isinstance(model, MarkovModel) else np.asarray(model).shape[0]
    m = _n_outputs(lppm)
    _guard(n, m, horizon)
    if not 0 <= target < horizon:
        raise ValueError("target step must lie within the horizon")

    total = 0.0
    for zs in product(range(m), repeat=horizon):
        weight = np.zeros(n)  # joint mass per value of the target step's cell
        for xs in product(range(n), repeat=horizon):
            p = _sequence_prob(model, xs)
            for t in range(horizon):
                p *= lppm(t, zs[:t], xs[: t + 1])[zs[t]]
                if p == 0.0:
                    break
            weight[xs[target]] += p
        total += float((weight @ d_p).min())
    return total


def marginalize_to_memoryless(pi: np.ndarray, lppm: FullLppm, step: int) -> np.ndarray:
    """Memoryless channel matching the given mechanism's marginal behavior
    at ``step`` (0-based) under an i.i.d. model: the history is averaged out
    conditionally on the current real cell."""

    pi = np.asarray(pi, dtype=float)
    n = pi.shape[0]
    m = _n_outputs(lppm)
    _guard(n, m, step + 1)

    out = np.zeros((n, m))
    mass = np.zeros(n)
    for xs in product(range(n), repeat=step + 1):
        p_x = _sequence_prob(pi, xs)
        for zs in product(range(m), repeat=step):
            p = p_x
            for t in range(step):
                p *= lppm(t, zs[:t], xs[: t + 1])[zs[t]]
            if p == 0.0:
                continue
            out[xs[step]] += p * lppm(step, zs, xs)
            mass[xs[step]] += p
    live = mass > 0
    out[live] /= mass[live, None]
    out[~live] = 1.0 / m  # unreachable current cells: any stochastic row works
    return out


def exhaustive_best_remap(
    base: np.ndarray, pi: np.ndarray, d: np.ndarray
) -> tuple[np.ndarray, float]:
    """Search every deterministic output relabeling and return the one whose
    composed channel has minimal expected quality loss, with that loss."""

    base = np.asarray(base, dtype=float)
    m = base.shape[1]
    if m > MAX_REMAP_OUTPUTS:
        raise ValueError(f"instance too large: {m} outputs exceeds limit {MAX_REMAP_OUTPUTS}")
    best_map = None
    best_cost = np.inf
    for g in product(range(m), repeat=m):
        cost = theoretical_qavg(compose_remap(base, np.asarray(g)), pi, d)
        if cost < best_cost:
            best_cost = cost
            best_map = g
    return np.asarray(best_map, dtype=np.int64), float(best_cost)
