"""EM inner-loop backend selection.

Prefers the compiled extension (lppm._emcore) when it was built; otherwise a
vectorized numpy implementation with identical semantics. Set the environment
variable LPPM_EM_BACKEND to "python" or "compiled" to force a choice.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from . import _emcore

    HAVE_COMPILED = True
except ImportError:
    _emcore = None
    HAVE_COMPILED = False


def _em_iterate_py(lik, pi_init, tol, max_iters, record_ll):
    pi = np.array(pi_init, dtype=float, copy=True)
    r = lik.shape[0]
    ll_hist = []
    iters = 0
    for t in range(max_iters):
        weighted = lik * pi  # (r, n)
        denom = weighted.sum(axis=1)
        if np.any(denom <= 0.0):
            raise ValueError("zero observation probability under the current profile")
        if record_ll:
            ll_hist.append(float(np.log(denom).sum()))
        new = (weighted / denom[:, None]).sum(axis=0) / r
        delta = float(np.max(np.abs(new - pi)))
        pi = new
        iters = t + 1
        if delta < tol:
            break
    return pi, iters, ll_hist


def _resolve_backend(backend: str | None) -> str:
    if backend is None:
        backend = os.environ.get("LPPM_EM_BACKEND", "")
    if backend not in ("", "python", "compiled"):
        raise ValueError(f"unknown EM backend {backend!r}")
    if backend == "compiled" and not HAVE_COMPILED:
        raise RuntimeError("compiled EM core requested but the extension is not built")
    if backend == "":
        backend = "compiled" if HAVE_COMPILED else "python"
    return backend


BACKEND = _resolve_backend(None)


def em_iterate(
    lik: np.ndarray,
    pi_init: np.ndarray,
    tol: float,
    max_iters: int,
    record_ll: bool = False,
    backend: str | None = None,
):
    """Run the EM fixed-point iteration to convergence.

    ``lik`` is an (r, n) array of per-step likelihood rows; iteration stops
    when the max-abs profile change drops below ``tol`` or after
    ``max_iters`` rounds. Returns (profile, iterations, loglik_history).
    """

    lik = np.ascontiguousarray(lik, dtype=float)
    if _resolve_backend(backend) == "compiled":
        return _emcore.em_iterate(lik, pi_init, tol, max_iters, record_ll)
    return _em_iterate_py(lik, pi_init, tol, max_iters, record_ll)
