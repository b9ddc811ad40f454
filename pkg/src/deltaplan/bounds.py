"""Online estimators of the per-step discrepancy bound.

``m_state`` reweights stored atlas discrepancies by the transition density
against the uniform proposal (truncated to a radius around the query
center), scaled by the remaining-value bound. ``m_belief`` subsamples the
particle belief. ``hoeffding_bound`` gives the concentration level of the
state estimator, and ``truncation_error_budget`` bounds the mass the two
truncations discard.

Models consumed here must provide ``transition_mean(x, action)``; the fast
path additionally requires ``transition_sigma`` (isotropic Gaussian
transition), otherwise ``transition_logpdf_batch(x, action, xs)`` is used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .atlas import DeltaAtlas, radius_query
from .particles import ParticleBelief
from .tiny import RewardSchedule


@dataclass(frozen=True)
class BoundConfig:
    d_t: float
    n_x: int
    atlas: DeltaAtlas
    schedule: RewardSchedule
    center_on_transition_mean: bool = True

    def __post_init__(self):
        if self.d_t <= 0:
            raise ValueError("truncation radius must be positive")
        if self.n_x < 1:
            raise ValueError("need at least one belief subsample")


@dataclass(frozen=True)
class HoeffdingConstants:
    """Per-step range constants B_i = 2 * v_max(i) * max transition/proposal ratio."""

    b_i: np.ndarray
    n_delta: int
    nu: float

    def __post_init__(self):
        if np.any(np.asarray(self.b_i) <= 0):
            raise ValueError("range constants must be positive")


def hoeffding_constants(
    schedule: RewardSchedule, max_density_ratio: float, n_delta: int, nu: float
) -> HoeffdingConstants:
    b = 2.0 * schedule.v_max_per_step * max_density_ratio
    return HoeffdingConstants(b_i=b, n_delta=n_delta, nu=nu)


def hoeffding_bound(b: float, n_delta: int, nu: float) -> float:
    """P(|m - m_hat| >= nu) <= 2 exp(-2 N nu^2 / B^2), clamped to [0, 1]."""
    if nu <= 0:
        raise ValueError("nu must be positive")
    if n_delta == 0:
        return 1.0
    return min(1.0, 2.0 * math.exp(-2.0 * n_delta * nu**2 / b**2))


def m_state(x, action, t: int, config: BoundConfig, model) -> float:
    """Truncated importance-reweighted bound increment for one state-action.

    v_max(t+1) / N_sampled * sum over atlas states within d_t of the query
    center of transition_pdf / proposal_density * stored delta. The center
    is the transition mean (the truncation discards transition tail mass);
    set ``center_on_transition_mean=False`` to center on the state itself.
    Empty neighborhoods contribute zero.
    """
    schedule = config.schedule
    if t + 1 >= schedule.v_max_per_step.size:
        raise ValueError("no future step remains at this time index")
    atlas = config.atlas
    if atlas.n_kept == 0:
        return 0.0
    x = np.asarray(x, dtype=float)
    center = np.asarray(model.transition_mean(x, action), dtype=float) if config.center_on_transition_mean else x
    v_max = float(schedule.v_max_per_step[t + 1])
    sigma = getattr(model, "transition_sigma", None)
    if sigma is not None and atlas.delta_states.shape[1] == 2:
        total = kernels.bound_increment_sum(
            atlas.delta_states,
            atlas.delta_values,
            center,
            config.d_t,
            float(sigma) ** 2,
            atlas.proposal.density,
        )
        return v_max * total / atlas.n_sampled
    idx = radius_query(atlas, center, config.d_t)
    if idx.size == 0:
        return 0.0
    dens = np.exp(model.transition_logpdf_batch(x, action, atlas.delta_states[idx]))
    total = float((dens / atlas.proposal.density * atlas.delta_values[idx]).sum())
    return v_max * total / atlas.n_sampled


def m_belief(
    belief: ParticleBelief,
    action,
    t: int,
    config: BoundConfig,
    model,
    rng: np.random.Generator,
) -> float:
    """Belief-level bound increment from ``n_x`` i.i.d. weighted draws."""
    if belief.fully_terminal:
        return 0.0
    if config.atlas.n_kept == 0:
        return 0.0
    cum = np.cumsum(belief.weights)
    cum[-1] = 1.0
    idx = np.searchsorted(cum, rng.random(config.n_x), side="right")
    sigma = getattr(model, "transition_sigma", None)
    if sigma is not None and config.center_on_transition_mean and config.atlas.delta_states.shape[1] == 2:
        shift = np.asarray(action, dtype=float)
        v_max = float(config.schedule.v_max_per_step[t + 1])
        total = kernels.bound_belief_sum(
            np.ascontiguousarray(belief.states[idx]),
            shift,
            config.atlas.delta_states,
            config.atlas.delta_values,
            config.d_t,
            float(sigma) ** 2,
            config.atlas.proposal.density,
        )
        return v_max * total / config.atlas.n_sampled
    return float(
        np.mean([m_state(belief.states[j], action, t, config, model) for j in idx])
    )


def truncation_error_budget(config: BoundConfig, model, schedule: RewardSchedule) -> float:
    """Bound on the estimator mass discarded by the two truncations.

    The threshold filter drops states whose discrepancy is below the
    threshold (each importance unit of dropped mass contributes at most the
    threshold), and the radius truncation drops Gaussian transition tail
    mass P(||noise|| > d_t) whose discrepancy is at most 2. Scaled by the
    global value bound. Zero when threshold = 0 and d_t = inf; monotone
    decreasing in d_t.
    """
    sigma = getattr(model, "transition_sigma", None)
    if sigma is None:
        raise ValueError("budget requires an isotropic Gaussian transition")
    tail = math.exp(-config.d_t**2 / (2.0 * float(sigma) ** 2)) if math.isfinite(config.d_t) else 0.0
    return schedule.v_max_global * (2.0 * config.atlas.threshold + 2.0 * tail)
