"""Weighted particle beliefs: propagation, SIS updates, resampling, moments.

The particle count stays constant through every update; particles that land
in a terminal region keep their slot with weight zero. ``survival_mass``
tracks the product of per-step non-termination probabilities along a belief
branch, which scales future value contributions during planning.

Models are duck-typed. A planning model must provide:
    propagate_states(states, action, rng) -> (C, d) array
    reward_batch(t, states, action)       -> (C,) rewards at arrival time t
    terminal_mask(states)                 -> (C,) bools
and an observation-model view must provide:
    obs_logpdf(z, states)                 -> (C,) log densities
    sample_obs(state, rng)                -> observation
"""

from __future__ import annotations

import numpy as np

WEIGHT_SUM_TOL = 1e-9


class WeightDegeneracyError(RuntimeError):
    """All particle likelihoods vanished for the given observation."""

    def __init__(self, observation):
        super().__init__("all particle likelihoods are zero for the observation")
        self.observation = observation


class ParticleBelief:
    """Immutable-by-convention weighted particle set.

    Construction validates shapes and normalization; hot internal paths
    that construct beliefs from already-normalized arrays pass
    ``validate=False``.
    """

    __slots__ = ("states", "weights", "survival_mass", "time_index", "fully_terminal")

    def __init__(
        self,
        states: np.ndarray,
        weights: np.ndarray,
        survival_mass: float = 1.0,
        time_index: int = 0,
        fully_terminal: bool = False,
        validate: bool = True,
    ):
        if validate:
            states = np.asarray(states, dtype=float)
            weights = np.asarray(weights, dtype=float)
            if states.ndim != 2 or weights.shape != (states.shape[0],):
                raise ValueError("states must be (C, d) with matching weights")
            if not fully_terminal and abs(weights.sum() - 1.0) > WEIGHT_SUM_TOL:
                raise ValueError("weights must sum to 1")
            if not (0.0 <= survival_mass <= 1.0 + 1e-12):
                raise ValueError("survival mass must lie in [0, 1]")
        self.states = states
        self.weights = weights
        self.survival_mass = survival_mass
        self.time_index = time_index
        self.fully_terminal = fully_terminal

    @property
    def n_particles(self) -> int:
        return self.states.shape[0]

    def replace(self, **kw) -> "ParticleBelief":
        out = ParticleBelief.__new__(ParticleBelief)
        for name in self.__slots__:
            setattr(out, name, kw.pop(name, getattr(self, name)))
        if kw:
            raise TypeError(f"unknown fields {sorted(kw)}")
        return out


def from_prior(sampler, n_particles: int, rng: np.random.Generator, t: int = 0) -> ParticleBelief:
    """Equal-weight belief of i.i.d. draws from ``sampler(rng, size)``."""
    states = sampler(rng, n_particles)
    w = np.full(n_particles, 1.0 / n_particles)
    return ParticleBelief(states, w, 1.0, t)


def propagate(
    belief: ParticleBelief, action, model, rng: np.random.Generator
) -> tuple[ParticleBelief, float, float]:
    """Advance every particle one step through the transition model.

    Returns the propagated belief along with the weight-averaged reward of
    the arrival states (terminal arrivals included; they earn their terminal
    reward) and the survival factor, i.e. the weight mass arriving outside
    the terminal regions. The returned belief renormalizes over survivors
    and multiplies its survival mass by that factor; if nothing survives it
    is flagged fully terminal (a valid zero-value leaf).
    """
    if belief.fully_terminal:
        raise ValueError("cannot propagate a fully terminal belief")
    t_new = belief.time_index + 1
    if hasattr(model, "propagate_full"):
        states, rewards, alive = model.propagate_full(belief.states, action, t_new, rng)
    else:
        states = model.propagate_states(belief.states, action, rng)
        rewards = model.reward_batch(t_new, states, action)
        alive = ~model.terminal_mask(states)
    mean_reward = float(belief.weights @ rewards)
    survival_factor = float(belief.weights @ alive)
    if survival_factor <= 0.0:
        out = ParticleBelief(
            states, belief.weights, 0.0, t_new, fully_terminal=True, validate=False
        )
        return out, mean_reward, 0.0
    w = belief.weights * alive / survival_factor
    out = ParticleBelief(
        states, w, belief.survival_mass * survival_factor, t_new, validate=False
    )
    return out, mean_reward, survival_factor


def sis_update(belief: ParticleBelief, observation, obs_model) -> ParticleBelief:
    """Importance-reweight the belief by the observation likelihood."""
    if belief.fully_terminal:
        raise ValueError("cannot update a fully terminal belief")
    loglik = obs_model.obs_logpdf(observation, belief.states)
    # shift before exponentiating; only relative likelihoods matter
    finite = np.isfinite(loglik)
    if not finite.any():
        raise WeightDegeneracyError(observation)
    shift = loglik[finite].max()
    lik = np.where(finite, np.exp(loglik - shift), 0.0)
    w = belief.weights * lik
    total = w.sum()
    if total <= 0.0:
        raise WeightDegeneracyError(observation)
    return belief.replace(weights=w / total)


def systematic_resample_indices(weights: np.ndarray, u0: float) -> np.ndarray:
    """Systematic resampling with a single uniform offset ``u0`` in [0, 1)."""
    c = weights.size
    positions = (np.arange(c) + u0) / c
    cum = np.cumsum(weights)
    cum[-1] = 1.0
    return np.searchsorted(cum, positions, side="right")


def resample(belief: ParticleBelief, rng: np.random.Generator) -> ParticleBelief:
    """Systematic resample to uniform weights; survival mass is preserved."""
    if belief.fully_terminal:
        raise ValueError("cannot resample a fully terminal belief")
    idx = systematic_resample_indices(belief.weights, float(rng.random()))
    return belief.replace(
        states=belief.states[idx],
        weights=np.full(belief.n_particles, 1.0 / belief.n_particles),
    )


def effective_sample_size(weights: np.ndarray) -> float:
    return 1.0 / float((weights**2).sum())


def moments(belief: ParticleBelief) -> tuple[np.ndarray, np.ndarray]:
    """Weighted mean and covariance of the particle set."""
    if belief.fully_terminal:
        raise ValueError("moments of a fully terminal belief are undefined")
    mean = belief.weights @ belief.states
    centered = belief.states - mean
    cov = (belief.weights[:, None] * centered).T @ centered
    return mean, cov
