"""The 2D beacons environment: a wall-surrounded arena with a gated goal
region below and a row of beacons above. Observations are accurate near the
beacons (the "light" region, where the expensive model is a 1126-component
ring mixture and the cheap model a single Gaussian) and diffuse elsewhere
(both models share one wide Gaussian there).

All numeric parameters live in :class:`BeaconsConfig` and are overridable;
the defaults reproduce the reference setup.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .gaussians import ring_offsets_and_weights, RING_SIGMA_LIGHT, RING_N_SIGMA, RING_K_R
from .tiny import RewardSchedule

DEFAULT_ACTIONS = np.array([[0.0, 1.0], [0.0, -1.0], [1.0, 0.0], [-1.0, 0.0]])


@dataclass(frozen=True)
class BeaconsConfig:
    arena: tuple = (-2.0, 0.0, 12.0, 6.0)  # x1, y1, x2, y2
    goal: tuple = (4.0, -1.5, 6.0, 0.0)
    beacon_xs: tuple = (0.0, 2.0, 4.0, 6.0, 8.0, 10.0)
    beacon_y: float = 4.0
    beacon_radius: float = 1.0
    prior_means: tuple = ((1.0, 2.0), (9.0, 2.0))
    prior_sigma_x: float = 0.5
    prior_sigma_y: float = 0.25
    sigma_t: float = 0.15
    sigma_dark: float = 5.0
    sigma_light: float = 0.3
    horizon: int = 15
    gamma: float = 1.0
    r_hit: float = 100.0
    r_collide: float = -50.0
    r_miss_step: float = -1.0
    r_miss_last: float = -50.0

    def goal_center(self) -> np.ndarray:
        x1, y1, x2, y2 = self.goal
        return np.array([(x1 + x2) / 2.0, (y1 + y2) / 2.0])

    def schedule(self) -> RewardSchedule:
        """Survival-aware per-step reward bounds.

        A trajectory that is still alive at step t earns at most the miss
        magnitude per subsequent live step plus one terminal event, so the
        slots are [0, |miss|, ..., |miss|, terminal magnitude]; with the
        default rewards the implied value bound is v_max(t) = 100 + (L - t)
        for t >= 1.
        """
        terminal_mag = max(
            abs(self.r_hit),
            abs(self.r_collide + self.r_miss_step),
            abs(self.r_collide + self.r_miss_last),
            abs(self.r_miss_last),
        )
        r_max = np.full(self.horizon + 1, abs(self.r_miss_step))
        r_max[0] = 0.0
        r_max[self.horizon] = terminal_mag
        return RewardSchedule(r_max, self.gamma)


class BeaconsEnv:
    """Vectorized dynamics, rewards, regions, and observation views."""

    def __init__(self, config: BeaconsConfig | None = None):
        self.config = config or BeaconsConfig()
        c = self.config
        self.beacons = np.column_stack(
            [np.asarray(c.beacon_xs, dtype=float), np.full(len(c.beacon_xs), c.beacon_y)]
        )
        self.actions = DEFAULT_ACTIONS.copy()
        offsets, weights = ring_offsets_and_weights()
        self._ring_offsets = offsets
        self._ring_weights = weights
        self._ring_log_weights = np.log(weights)
        self._ring_cum_weights = np.cumsum(weights)
        self._ring_cum_weights[-1] = 1.0
        self._ring_var = (c.sigma_light * RING_N_SIGMA / RING_K_R) ** 2
        self.transition_sigma = c.sigma_t
        self.goal_center = c.goal_center()
        self.horizon = c.horizon
        self.gamma = c.gamma

    # -- regions ------------------------------------------------------------

    def light_mask(self, states: np.ndarray) -> np.ndarray:
        pts = np.ascontiguousarray(np.atleast_2d(states))
        sq = kernels.min_sq_dist(pts, self.beacons)
        return sq <= self.config.beacon_radius**2

    def in_goal(self, states: np.ndarray) -> np.ndarray:
        x1, y1, x2, y2 = self.config.goal
        pts = np.atleast_2d(states)
        return (pts[:, 0] >= x1) & (pts[:, 0] <= x2) & (pts[:, 1] >= y1) & (pts[:, 1] <= y2)

    def in_collision(self, states: np.ndarray) -> np.ndarray:
        x1, y1, x2, y2 = self.config.arena
        pts = np.atleast_2d(states)
        inside = (pts[:, 0] >= x1) & (pts[:, 0] <= x2) & (pts[:, 1] >= y1) & (pts[:, 1] <= y2)
        return ~inside & ~self.in_goal(pts)

    def region_masks(self, states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(goal, collision) in a single pass; collision excludes the goal."""
        x1, y1, x2, y2 = self.config.arena
        gx1, gy1, gx2, gy2 = self.config.goal
        pts = np.atleast_2d(states)
        x, y = pts[:, 0], pts[:, 1]
        goal = (x >= gx1) & (x <= gx2) & (y >= gy1) & (y <= gy2)
        inside = (x >= x1) & (x <= x2) & (y >= y1) & (y <= y2)
        collide = ~(inside | goal)
        return goal, collide

    def terminal_mask(self, states: np.ndarray) -> np.ndarray:
        goal, collide = self.region_masks(states)
        return goal | collide

    # -- dynamics and reward --------------------------------------------------

    def propagate_states(self, states: np.ndarray, action, rng: np.random.Generator) -> np.ndarray:
        states = np.atleast_2d(states)
        noise = rng.standard_normal(states.shape)
        return states + np.asarray(action, dtype=float) + self.config.sigma_t * noise

    def transition_mean(self, x, action) -> np.ndarray:
        return np.asarray(x, dtype=float) + np.asarray(action, dtype=float)

    def transition_logpdf_batch(self, x, action, xs: np.ndarray) -> np.ndarray:
        mean = self.transition_mean(x, action)
        diffs = np.ascontiguousarray(np.atleast_2d(xs) - mean)
        return kernels.diag_gauss_logpdf(diffs, self.config.sigma_t**2)

    def reward_batch(self, t: int, states: np.ndarray, action=None) -> np.ndarray:
        """Indicator rewards at time t; the first step is unrewarded."""
        c = self.config
        pts = np.atleast_2d(states)
        if t == 0:
            return np.zeros(pts.shape[0])
        goal, collide = self.region_masks(pts)
        r_miss = c.r_miss_last if t == c.horizon else c.r_miss_step
        return c.r_hit * goal + r_miss * (~goal) + c.r_collide * collide

    def propagate_full(self, states, action, t_new: int, rng: np.random.Generator):
        """Fused transition + reward + survival masks (one region pass)."""
        c = self.config
        nxt = states + np.asarray(action, dtype=float) + c.sigma_t * rng.standard_normal(states.shape)
        goal, collide = self.region_masks(nxt)
        if t_new == 0:
            rewards = np.zeros(nxt.shape[0])
        else:
            r_miss = c.r_miss_last if t_new == c.horizon else c.r_miss_step
            rewards = c.r_hit * goal + r_miss * (~goal) + c.r_collide * collide
        return nxt, rewards, ~(goal | collide)

    def reward(self, t: int, x) -> float:
        return float(self.reward_batch(t, np.atleast_2d(x))[0])

    def sample_prior(self, rng: np.random.Generator, size: int = 1) -> np.ndarray:
        c = self.config
        means = np.asarray(c.prior_means, dtype=float)
        comps = rng.integers(len(means), size=size)
        noise = rng.standard_normal((size, 2))
        scale = np.array([c.prior_sigma_x, c.prior_sigma_y])
        return means[comps] + scale * noise

    def step(self, x, action, t: int, rng: np.random.Generator) -> tuple[np.ndarray, float, bool]:
        """True-state transition; terminal on goal/collision entry or horizon."""
        if t >= self.config.horizon:
            raise ValueError("cannot step at or beyond the horizon")
        x_new = self.propagate_states(np.atleast_2d(x), action, rng)[0]
        reward = self.reward(t + 1, x_new)
        terminal = bool(self.terminal_mask(x_new[None, :])[0]) or (t + 1 == self.config.horizon)
        return x_new, reward, terminal

    # -- observation views ----------------------------------------------------

    def obs_model(self, which: str) -> "BeaconsObsModel":
        if which not in ("original", "simplified"):
            raise ValueError(f"unknown observation model {which!r}")
        return BeaconsObsModel(self, which)

    def obs_pdf(self, which: str, z, x) -> float:
        """Density of observation z at state x under the chosen model."""
        view = self.obs_model(which)
        return float(np.exp(view.logpdf_batch(np.asarray(x, dtype=float), np.atleast_2d(z)))[0])


class BeaconsObsModel:
    """One observation model (original or simplified) with batched queries."""

    def __init__(self, env: BeaconsEnv, which: str):
        self.env = env
        self.which = which

    # SIS direction: one observation, many states
    def obs_logpdf(self, z, states: np.ndarray) -> np.ndarray:
        env = self.env
        pts = np.atleast_2d(states)
        diffs = np.ascontiguousarray(np.asarray(z, dtype=float) - pts)
        out = np.asarray(
            kernels.diag_gauss_logpdf(diffs, env.config.sigma_dark**2), dtype=float
        ).copy()
        light = env.light_mask(pts)
        if light.any():
            sub = np.ascontiguousarray(diffs[light])
            if self.which == "original":
                out[light] = kernels.shared_cov_gmm_logpdf(
                    sub, env._ring_offsets, env._ring_log_weights, env._ring_var
                )
            else:
                out[light] = kernels.diag_gauss_logpdf(sub, env.config.sigma_light**2)
        return out

    # TV-estimation direction: one state, many observations
    def logpdf_batch(self, x, zs: np.ndarray) -> np.ndarray:
        env = self.env
        x = np.asarray(x, dtype=float)
        diffs = np.ascontiguousarray(np.atleast_2d(zs) - x)
        if bool(env.light_mask(x[None, :])[0]):
            if self.which == "original":
                return np.asarray(
                    kernels.shared_cov_gmm_logpdf(
                        diffs, env._ring_offsets, env._ring_log_weights, env._ring_var
                    )
                )
            return np.asarray(kernels.diag_gauss_logpdf(diffs, env.config.sigma_light**2))
        return np.asarray(kernels.diag_gauss_logpdf(diffs, env.config.sigma_dark**2))

    def sample_batch(self, x, rng: np.random.Generator, n: int) -> np.ndarray:
        env = self.env
        x = np.asarray(x, dtype=float)
        if bool(env.light_mask(x[None, :])[0]):
            if self.which == "original":
                comps = np.searchsorted(env._ring_cum_weights, rng.random(n), side="right")
                noise = rng.standard_normal((n, 2))
                return x + env._ring_offsets[comps] + np.sqrt(env._ring_var) * noise
            return x + env.config.sigma_light * rng.standard_normal((n, 2))
        return x + env.config.sigma_dark * rng.standard_normal((n, 2))

    def sample_obs(self, x, rng: np.random.Generator) -> np.ndarray:
        return self.sample_batch(x, rng, 1)[0]


class CountingObsModel:
    """Wrapper that counts density and sampler invocations of a view."""

    def __init__(self, inner):
        self.inner = inner
        self.pdf_calls = 0
        self.sample_calls = 0

    def snapshot(self) -> tuple[int, int]:
        return self.pdf_calls, self.sample_calls

    def obs_logpdf(self, z, states):
        self.pdf_calls += 1
        return self.inner.obs_logpdf(z, states)

    def logpdf_batch(self, x, zs):
        self.pdf_calls += 1
        return self.inner.logpdf_batch(x, zs)

    def sample_batch(self, x, rng, n):
        self.sample_calls += 1
        return self.inner.sample_batch(x, rng, n)

    def sample_obs(self, x, rng):
        self.sample_calls += 1
        return self.inner.sample_obs(x, rng)


@dataclass
class BeaconsPlanningModel:
    """Model bundle handed to the planner: dynamics plus ONE observation view.

    Simplified-mode planning receives only the cheap view, so the expensive
    model cannot be touched during a planning session by construction; the
    harness still verifies this with counting wrappers.
    """

    env: BeaconsEnv
    obs: object  # BeaconsObsModel or CountingObsModel
    actions: np.ndarray = field(init=False)

    def __post_init__(self):
        self.actions = self.env.actions
        self.horizon = self.env.horizon
        self.gamma = self.env.gamma
        self.transition_sigma = self.env.transition_sigma
        self.goal_center = self.env.goal_center

    def propagate_states(self, states, action, rng):
        return self.env.propagate_states(states, action, rng)

    def propagate_full(self, states, action, t_new, rng):
        return self.env.propagate_full(states, action, t_new, rng)

    def reward_batch(self, t, states, action=None):
        return self.env.reward_batch(t, states, action)

    def terminal_mask(self, states):
        return self.env.terminal_mask(states)

    def transition_mean(self, x, action):
        return self.env.transition_mean(x, action)

    def transition_logpdf_batch(self, x, action, xs):
        return self.env.transition_logpdf_batch(x, action, xs)

    def rollout_action(self, mean_state, rng) -> int:
        ips = self.actions @ (self.goal_center - mean_state)
        return int(np.argmax(ips))

    def fast_rollout(self, states, weights, t, bound_config, rng):
        """Kernel rollout; consumes pre-drawn noise so both paths match."""
        c = self.env.config
        steps = max(c.horizon - t, 0)
        normals = rng.standard_normal((steps, states.shape[0], 2))
        if bound_config is not None and bound_config.atlas.n_kept:
            choice_u = rng.random((steps, bound_config.n_x))
            with_bound = True
            v_max = bound_config.schedule.v_max_per_step
            delta_xy = bound_config.atlas.delta_states
            delta_val = bound_config.atlas.delta_values
            d_t = bound_config.d_t
            q0 = bound_config.atlas.proposal.density
            n_tot = bound_config.atlas.n_sampled
        else:
            choice_u = np.zeros((steps, 1))
            with_bound = False
            v_max = np.zeros(c.horizon + 2)
            delta_xy = np.empty((0, 2))
            delta_val = np.empty(0)
            d_t = 1.0
            q0 = 1.0
            n_tot = 1
        return kernels.beacons_rollout(
            np.ascontiguousarray(states),
            np.ascontiguousarray(weights),
            t,
            c.horizon,
            c.gamma,
            self.actions,
            c.sigma_t,
            np.asarray(c.arena, dtype=float),
            np.asarray(c.goal, dtype=float),
            self.goal_center,
            c.r_hit,
            c.r_collide,
            c.r_miss_step,
            c.r_miss_last,
            normals,
            with_bound,
            v_max,
            n_tot,
            delta_xy,
            delta_val,
            d_t,
            q0,
            choice_u,
        )
