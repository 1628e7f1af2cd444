"""Profile-estimation-based mechanism for users without a trusted mobility
profile.

Before each release the mechanism re-estimates the visit profile by maximum
likelihood from the likelihood vectors of its own past releases (EM fixed
point), shrinks the estimate toward an initial profile with a weight that
decays as queries accumulate, and rebuilds the optimal sporadic remap around
the blended profile. Past real locations are never read: the estimator sees
released information only.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ._em import em_iterate
from .mechanisms import Mechanism, compose_remap, remap_sporadic, validate_channel
from .mobility import sample_categorical, validate_profile

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EmConfig:
    """Stopping rule for the EM iteration.

    tolerance is the max-abs profile change that counts as converged;
    warm_start reuses the previous query's estimate as the starting point
    instead of the uniform profile.
    """

    tolerance: float = 1e-8
    max_iters: int = 500
    warm_start: bool = False

    def __post_init__(self) -> None:
        if self.tolerance <= 0:
            raise ValueError("tolerance must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass(frozen=True)
class EmResult:
    profile: np.ndarray
    iterations: int
    loglik_history: list[float]
    skipped_steps: int


def em_mle_detailed(
    likelihoods: np.ndarray,
    pi_init: np.ndarray,
    cfg: EmConfig,
    record_ll: bool = False,
    backend: str | None = None,
) -> EmResult:
    """em_mle plus convergence diagnostics (iteration count, per-iteration
    log-likelihood when requested, and how many unusable steps were skipped)."""

    lik = np.asarray(likelihoods, dtype=float)
    if lik.ndim != 2 or lik.shape[0] < 1:
        raise ValueError("likelihoods must be a nonempty (steps, cells) array")
    if np.any(lik < 0):
        raise ValueError("likelihood vectors must be nonnegative")
    pi_init = np.asarray(pi_init, dtype=float)
    if np.any(pi_init <= 0):
        raise ValueError("pi_init must be strictly positive")

    usable = lik.sum(axis=1) > 0
    skipped = int(lik.shape[0] - usable.sum())
    if skipped:
        logger.warning("skipping %d all-zero likelihood steps in profile estimation", skipped)
        lik = lik[usable]
        if lik.shape[0] == 0:
            raise ValueError("all likelihood vectors are zero")
    profile, iters, ll_hist = em_iterate(
        lik, pi_init, cfg.tolerance, cfg.max_iters, record_ll=record_ll, backend=backend
    )
    return EmResult(profile=profile, iterations=iters, loglik_history=ll_hist, skipped_steps=skipped)


def em_mle(likelihoods: np.ndarray, pi_init: np.ndarray, cfg: EmConfig) -> np.ndarray:
    """Maximum-likelihood profile given per-step likelihood vectors of the
    released locations.

    Iterates the fixed point: the next profile is the average over steps of
    the posterior each step's likelihood induces under the current profile.
    All-zero likelihood steps are skipped with a warning.
    """

    return em_mle_detailed(likelihoods, pi_init, cfg).profile


def blend(pi_ini: np.ndarray, pi_ml: np.ndarray, r: int, gamma: float) -> np.ndarray:
    """Shrink the ML estimate toward the initial profile with weight that
    decays as 1/r**gamma."""

    if r < 1:
        raise ValueError("query index must be >= 1")
    if gamma <= 0:
        raise ValueError("gamma must be > 0")
    w = 1.0 / r**gamma
    return w * pi_ini + (1.0 - w) * pi_ml


@dataclass(frozen=True)
class PebConfig:
    """Profile-estimation mechanism settings.

    estimate_stride re-runs the estimator only every that many new
    observations (1 = every query); intermediate steps reuse the last
    estimate.
    """

    pi_ini: np.ndarray
    base: np.ndarray
    gamma: float = 0.5
    em: EmConfig = field(default_factory=EmConfig)
    estimate_stride: int = 1

    def __post_init__(self) -> None:
        validate_profile(self.pi_ini, "pi_ini")
        validate_channel(self.base, "base channel")
        if self.gamma <= 0:
            raise ValueError("gamma must be > 0")
        if self.estimate_stride < 1:
            raise ValueError("estimate_stride must be >= 1")


class PebMechanism(Mechanism):
    """Re-estimates the user profile from past releases before every query.

    Step r: (1) ML-estimate the profile from the stored likelihood vectors of
    releases 1..r-1 (the initial profile when none exist), (2) blend toward
    the initial profile, (3) remap the base channel around the blend, sample,
    and store the released cell's likelihood column for future estimates.
    """

    def __init__(self, cfg: PebConfig, d_q: np.ndarray):
        self.cfg = cfg
        self.d_q = np.asarray(d_q, dtype=float)
        self.n = cfg.base.shape[0]
        self._base_cdf = np.cumsum(cfg.base, axis=1)
        self._uniform = np.full(self.n, 1.0 / self.n)
        self.reset()

    def reset(self) -> None:
        self._stored: list[np.ndarray] = []
        self._step = 0
        self._estimated_at = -1
        self._skipped = 0
        self.pi_ml = self.cfg.pi_ini.copy()
        self.pi_blend = self.cfg.pi_ini.copy()

    @property
    def degenerate_steps(self) -> int:
        return self._skipped

    def _update_estimate(self) -> None:
        observed = len(self._stored)
        if observed < 1:
            self.pi_ml = self.cfg.pi_ini.copy()
            return
        stale = observed - self._estimated_at
        if self._estimated_at >= 1 and stale < self.cfg.estimate_stride:
            return
        init = self.pi_ml if self.cfg.em.warm_start and self._estimated_at >= 1 else self._uniform
        init = np.maximum(init, 1e-300)  # warm starts must stay strictly positive
        self.pi_ml = em_mle(np.asarray(self._stored), init, self.cfg.em)
        self._estimated_at = observed

    def step(self, x: int, rng: np.random.Generator) -> tuple[int, np.ndarray]:
        self._step += 1
        self._update_estimate()
        self.pi_blend = blend(self.cfg.pi_ini, self.pi_ml, self._step, self.cfg.gamma)
        g, channel = remap_sporadic(self.cfg.base, self.pi_blend, self.d_q)
        draft = sample_categorical(rng, self._base_cdf[x])
        z = int(g[draft])
        likelihood = channel[:, z]
        if likelihood.sum() <= 0.0:  # unusable for estimation; skipped there too
            self._skipped += 1
        self._stored.append(likelihood.copy())
        return z, likelihood


def peb_mechanism(cfg: PebConfig, d_q: np.ndarray) -> PebMechanism:
    """Build the profile-estimation mechanism."""

    if cfg.base.shape[0] != cfg.pi_ini.shape[0]:
        raise ValueError("base channel rows must match pi_ini length")
    return PebMechanism(cfg, d_q)
