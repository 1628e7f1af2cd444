"""Privacy and utility metrics, empirical and closed-form.

Quality loss is the average distance between real and released cells;
adversary error is the average distance between real cells and an attack's
estimates. The theoretical variants integrate over a profile and a channel;
the theoretical adversary error assumes the optimal single-observation
attack. All distances are kilometres.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .mechanisms import TraceRecord

Window = tuple[int, int] | None  # half-open [start, stop) step range, None = all


def _window_slice(length: int, window: Window) -> slice:
    if window is None:
        return slice(0, length)
    start, stop = window
    if not (0 <= start < stop <= length):
        raise ValueError(f"window {window} is empty or out of range for length {length}")
    return slice(start, stop)


def empirical_qavg(records: Sequence[TraceRecord], d_q: np.ndarray, window: Window = None) -> float:
    """Mean released-vs-real distance over the window steps of all records."""

    if not records:
        raise ValueError("need at least one record")
    dists = []
    for rec in records:
        sl = _window_slice(len(rec), window)
        dists.append(d_q[rec.x[sl], rec.z[sl]])
    return float(np.mean(np.concatenate(dists)))


def empirical_pae(
    records: Sequence[TraceRecord],
    estimates: Sequence[np.ndarray],
    d_p: np.ndarray,
    window: Window = None,
) -> float:
    """Mean estimate-vs-real distance over the window steps of all records."""

    if not records:
        raise ValueError("need at least one record")
    if len(records) != len(estimates):
        raise ValueError("records and estimates must align")
    dists = []
    for rec, est in zip(records, estimates):
        if len(est) != len(rec):
            raise ValueError("estimate length must match its record")
        sl = _window_slice(len(rec), window)
        dists.append(d_p[rec.x[sl], np.asarray(est)[sl]])
    return float(np.mean(np.concatenate(dists)))


def theoretical_qavg(channel: np.ndarray, pi: np.ndarray, d_q: np.ndarray) -> float:
    """Expected released-vs-real distance of a memoryless channel under a
    design profile."""

    return float(np.einsum("x,xz,xz->", pi, channel, d_q))


def theoretical_pae_opt(channel: np.ndarray, pi: np.ndarray, d_p: np.ndarray) -> float:
    """Expected error of the optimal single-observation Bayesian attack
    against a memoryless channel: for every output, the adversary picks the
    estimate minimizing the joint-weighted distance."""

    joint = (pi[:, None] * channel).T  # (outputs, real cells)
    per_output = joint @ d_p  # cost of each estimate given each output
    return float(per_output.min(axis=1).sum())
