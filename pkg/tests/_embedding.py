"""Embed a tiny discrete POMDP behind the continuous planner protocol.

States become 1D float points (the state index), actions are passed as
1-vectors carrying the action index, and observation densities are the
discrete pmf values. With action-independent rewards, zero reward at t=0,
and gamma = 1, the planner's root action values are directly comparable to
the exact enumeration of the underlying instance.
"""

from __future__ import annotations

import numpy as np

from deltaplan.tiny import TinyDiscretePomdp


class EmbeddedObsModel:
    def __init__(self, model: TinyDiscretePomdp, which: str):
        self.obs = model.obs_matrix(which)
        self.cum_obs = np.cumsum(self.obs, axis=1)

    def sample_obs(self, state, rng: np.random.Generator) -> np.ndarray:
        row = self.cum_obs[int(round(float(state[0])))]
        z = int(np.searchsorted(row, rng.random(), side="right"))
        return np.array([float(z)])

    def obs_logpdf(self, z, states: np.ndarray) -> np.ndarray:
        idx = np.rint(states[:, 0]).astype(int)
        with np.errstate(divide="ignore"):
            return np.log(self.obs[idx, int(round(float(z[0])))])


class EmbeddedTinyModel:
    """Planner-protocol wrapper around a TinyDiscretePomdp."""

    def __init__(self, model: TinyDiscretePomdp, which: str):
        self.model = model
        self.obs = EmbeddedObsModel(model, which)
        self.actions = np.arange(model.n_actions, dtype=float)[:, None]
        self.horizon = model.horizon
        self.gamma = model.gamma
        self.cum_t = np.cumsum(model.transition, axis=2)

    def propagate_states(self, states, action, rng):
        idx = np.rint(states[:, 0]).astype(int)
        rows = self.cum_t[int(round(float(action[0])))][idx]
        u = rng.random(idx.size)
        nxt = (u[:, None] < rows).argmax(axis=1)
        return nxt.astype(float)[:, None]

    def reward_batch(self, t, states, action=None):
        idx = np.rint(states[:, 0]).astype(int)
        return self.model.rewards[t, idx, 0]

    def terminal_mask(self, states):
        return np.zeros(states.shape[0], dtype=bool)

    def rollout_action(self, mean_state, rng) -> int:
        return int(rng.integers(self.model.n_actions))


def tiled_root_particles(model: TinyDiscretePomdp, copies: int):
    """Exact root representation: every state replicated with prior weight."""
    states = np.repeat(np.arange(model.n_states, dtype=float), copies)[:, None]
    weights = np.repeat(model.b0 / copies, copies)
    return states, weights
