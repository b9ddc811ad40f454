"""Tiny discrete POMDPs with exact enumeration oracles.

These instances are small enough (a few states, observations, and steps)
that values, action values, and the discrepancy bounds can be computed
exactly by enumerating every observation history with exact Bayesian belief
updates. They are the ground truth against which the sampled estimators and
the planner are checked.

Conventions:
  * rewards[t, x, a] for t = 0..horizon; the slice at t = horizon is read
    with action index 0 (no action is taken at the horizon), so generators
    tie that slice across actions.
  * a history is a tuple of (action, observation) index pairs; policies are
    explicit lookup tables over histories.
  * value = sum_{t=0..L} gamma^t * reward_t, with belief updates using the
    chosen observation model ("original" uses p_z, "simplified" uses q_z).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ROW_SUM_TOL = 1e-12

History = tuple[tuple[int, int], ...]


class EnumerationLimitError(RuntimeError):
    """Raised when an exact enumeration would exceed the configured budget."""

    def __init__(self, count: int, limit: int):
        super().__init__(f"enumeration of {count} histories exceeds budget {limit}")
        self.count = count
        self.limit = limit


@dataclass
class RewardSchedule:
    """Per-step reward bounds and the value bounds they imply.

    ``v_max_per_step[t] = sum_{i=t..L} gamma^(i-t) * r_max_per_step[i]``.
    """

    r_max_per_step: np.ndarray
    gamma: float
    v_max_per_step: np.ndarray = field(init=False)
    v_max_global: float = field(init=False)

    def __post_init__(self):
        r = np.asarray(self.r_max_per_step, dtype=float)
        if np.any(r < 0):
            raise ValueError("reward bounds must be nonnegative")
        self.r_max_per_step = r
        v = np.zeros_like(r)
        v[-1] = r[-1]
        for t in range(r.size - 2, -1, -1):
            v[t] = r[t] + self.gamma * v[t + 1]
        self.v_max_per_step = v
        self.v_max_global = float(v.max()) if v.size else 0.0


@dataclass
class TinyDiscretePomdp:
    """Finite POMDP given by stochastic matrices and a reward table."""

    transition: np.ndarray  # (A, X, X), rows over next state
    p_z: np.ndarray  # (X, Z)
    q_z: np.ndarray  # (X, Z)
    rewards: np.ndarray  # (L+1, X, A)
    horizon: int
    gamma: float
    b0: np.ndarray  # (X,)

    def __post_init__(self):
        self.transition = np.asarray(self.transition, dtype=float)
        self.p_z = np.asarray(self.p_z, dtype=float)
        self.q_z = np.asarray(self.q_z, dtype=float)
        self.rewards = np.asarray(self.rewards, dtype=float)
        self.b0 = np.asarray(self.b0, dtype=float)
        a, x, x2 = self.transition.shape
        if x != x2 or self.p_z.shape[0] != x or self.q_z.shape != self.p_z.shape:
            raise ValueError("inconsistent matrix shapes")
        if self.rewards.shape != (self.horizon + 1, x, a):
            raise ValueError("rewards must have shape (L+1, X, A)")
        if not (0.0 < self.gamma <= 1.0):
            raise ValueError("gamma must lie in (0, 1]")
        for mat in (self.transition.reshape(-1, x), self.p_z, self.q_z, self.b0[None, :]):
            if np.any(np.abs(mat.sum(axis=1) - 1.0) > ROW_SUM_TOL):
                raise ValueError("stochastic rows must sum to 1 within 1e-12")
            if np.any(mat < 0):
                raise ValueError("probabilities must be nonnegative")

    @property
    def n_states(self) -> int:
        return self.transition.shape[1]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[0]

    @property
    def n_obs(self) -> int:
        return self.p_z.shape[1]

    def obs_matrix(self, which: str) -> np.ndarray:
        if which == "original":
            return self.p_z
        if which == "simplified":
            return self.q_z
        raise ValueError(f"unknown observation model {which!r}")

    def schedule(self) -> RewardSchedule:
        r_max = np.abs(self.rewards).max(axis=(1, 2))
        return RewardSchedule(r_max, self.gamma)

    def delta_z(self) -> np.ndarray:
        """Exact per-state unnormalized TV distance sum_z |p_z - q_z|."""
        return np.abs(self.p_z - self.q_z).sum(axis=1)


class HistoryPolicy:
    """Explicit policy table keyed by full (action, observation) history."""

    def __init__(self, table: dict[History, int]):
        self.table = table

    def action(self, history: History) -> int:
        return self.table[history]


def all_histories(model: TinyDiscretePomdp, depth: int):
    """Yield every (action, observation) history of length <= depth."""
    frontier: list[History] = [()]
    yield ()
    for _ in range(depth):
        nxt: list[History] = []
        for h in frontier:
            for a in range(model.n_actions):
                for z in range(model.n_obs):
                    h2 = h + ((a, z),)
                    nxt.append(h2)
                    yield h2
        frontier = nxt


def random_policy(model: TinyDiscretePomdp, rng: np.random.Generator) -> HistoryPolicy:
    """Uniformly random action at every reachable history up to L-1."""
    table = {
        h: int(rng.integers(model.n_actions))
        for h in all_histories(model, model.horizon - 1)
    }
    return HistoryPolicy(table)


def random_tiny(
    rng: np.random.Generator,
    *,
    n_states: int | None = None,
    n_actions: int = 2,
    n_obs: int | None = None,
    horizon: int | None = None,
    gamma: float = 1.0,
    zero_terminal_reward: bool = False,
    action_independent_rewards: bool = False,
    identical_models: bool = False,
) -> TinyDiscretePomdp:
    """Random well-conditioned instance (all probabilities bounded away from 0)."""
    x = int(n_states if n_states is not None else rng.integers(2, 4))
    z = int(n_obs if n_obs is not None else rng.integers(2, 4))
    a = int(n_actions)
    horizon = int(horizon if horizon is not None else rng.integers(1, 4))

    def _rows(shape):
        raw = rng.dirichlet(np.ones(shape[-1]), size=shape[:-1])
        return 0.85 * raw + 0.15 / shape[-1]

    transition = _rows((a, x, x))
    p_z = _rows((x, z))
    if identical_models:
        q_z = p_z.copy()
    else:
        q_z = 0.6 * p_z + 0.4 * _rows((x, z))
    rewards = rng.uniform(-1.0, 1.0, size=(horizon + 1, x, a))
    if action_independent_rewards:
        rewards = np.repeat(rewards[:, :, :1], a, axis=2)
    else:
        rewards[horizon] = rewards[horizon, :, :1]
    if zero_terminal_reward:
        rewards[horizon] = 0.0
    b0 = _rows((1, x))[0]
    return TinyDiscretePomdp(transition, p_z, q_z, rewards, horizon, gamma, b0)


# ---------------------------------------------------------------------------
# exact enumeration
# ---------------------------------------------------------------------------


def _check_budget(model: TinyDiscretePomdp, limit: int):
    count = model.n_obs**model.horizon
    if count > limit:
        raise EnumerationLimitError(count, limit)


def _reward_at(model: TinyDiscretePomdp, t: int, belief: np.ndarray, action: int | None) -> float:
    a = 0 if t == model.horizon or action is None else action
    return float(belief @ model.rewards[t, :, a])


def exact_value(
    model: TinyDiscretePomdp,
    policy: HistoryPolicy,
    which: str,
    *,
    forced_first: int | None = None,
    belief0: np.ndarray | None = None,
    limit: int = 10**6,
) -> float:
    """Exact value of ``policy`` under the chosen observation model.

    Sums over every observation history, weighting each branch by its
    marginal likelihood under the chosen model and performing exact belief
    updates. ``forced_first`` overrides the first action (the Q-value case).
    """
    _check_budget(model, limit)
    obs = model.obs_matrix(which)
    b0 = model.b0 if belief0 is None else np.asarray(belief0, dtype=float)
    total = 0.0
    stack: list[tuple[int, np.ndarray, History, float]] = [(0, b0, (), 1.0)]
    while stack:
        t, belief, hist, like = stack.pop()
        if t == model.horizon:
            total += like * model.gamma**t * _reward_at(model, t, belief, None)
            continue
        if t == 0 and forced_first is not None:
            a = forced_first
        else:
            a = policy.action(hist)
        total += like * model.gamma**t * _reward_at(model, t, belief, a)
        prop = belief @ model.transition[a]
        for z in range(model.n_obs):
            lz = float(prop @ obs[:, z])
            if lz <= 0.0:
                continue
            post = prop * obs[:, z] / lz
            stack.append((t + 1, post, hist + ((a, z),), like * lz))
    return total


def exact_q_value(
    model: TinyDiscretePomdp,
    policy: HistoryPolicy,
    action: int,
    which: str,
    *,
    belief0: np.ndarray | None = None,
    limit: int = 10**6,
) -> float:
    """Exact action value: first action forced, then the policy."""
    return exact_value(
        model, policy, which, forced_first=action, belief0=belief0, limit=limit
    )


def exact_bound_m(
    model: TinyDiscretePomdp,
    policy: HistoryPolicy,
    *,
    forced_first: int | None = None,
    limit: int = 10**6,
) -> float:
    """Exact cumulative discrepancy bound for the policy from time 0.

    Accumulates v_max(t+1) * E[transition-propagated Delta_Z] along every
    simplified-model history, i.e. the per-step increments
    m_t(x, a) = v_max(t+1) * sum_x' T(x'|x,a) * Delta_Z(x') weighted by the
    belief, for t = 0..L-1. Zero when the two observation models coincide
    or when the horizon leaves no future step.
    """
    _check_budget(model, limit)
    v_max = model.schedule().v_max_per_step
    dz = model.delta_z()
    obs = model.q_z
    # m_x[a][x] at time t equals v_max[t+1] * (T[a] @ dz)[x]
    t_dz = np.stack([model.transition[a] @ dz for a in range(model.n_actions)])
    total = 0.0
    stack: list[tuple[int, np.ndarray, History, float]] = [(0, model.b0, (), 1.0)]
    while stack:
        t, belief, hist, like = stack.pop()
        if t >= model.horizon:
            continue
        if t == 0 and forced_first is not None:
            a = forced_first
        else:
            a = policy.action(hist)
        total += like * v_max[t + 1] * float(belief @ t_dz[a])
        prop = belief @ model.transition[a]
        for z in range(model.n_obs):
            lz = float(prop @ obs[:, z])
            if lz <= 0.0:
                continue
            post = prop * obs[:, z] / lz
            stack.append((t + 1, post, hist + ((a, z),), like * lz))
    return total


def exact_phi(
    model: TinyDiscretePomdp,
    policy: HistoryPolicy,
    action: int,
    *,
    limit: int = 10**6,
) -> float:
    """Action form of the cumulative bound: force ``action`` then follow policy."""
    return exact_bound_m(model, policy, forced_first=action, limit=limit)


def corollary_rhs(
    model: TinyDiscretePomdp,
    policy: HistoryPolicy,
    *,
    limit: int = 10**6,
) -> float:
    """Sum over i of v_max(i) times the expected propagated discrepancy.

    Computed per time step with an independent enumeration (one pass per i)
    rather than a single accumulation, so it cross-checks
    :func:`exact_bound_m` at the float level.
    """
    _check_budget(model, limit)
    v_max = model.schedule().v_max_per_step
    dz = model.delta_z()
    total = 0.0
    for i in range(1, model.horizon + 1):
        total += v_max[i] * expected_propagated_delta(model, policy, i)
    return total


def expected_propagated_delta(
    model: TinyDiscretePomdp, policy: HistoryPolicy, i: int
) -> float:
    """E over simplified-model histories of the propagated-belief discrepancy at step i."""
    obs = model.q_z
    dz = model.delta_z()
    acc = 0.0
    stack: list[tuple[int, np.ndarray, History, float]] = [(0, model.b0, (), 1.0)]
    while stack:
        t, belief, hist, like = stack.pop()
        a = policy.action(hist)
        prop = belief @ model.transition[a]
        if t + 1 == i:
            acc += like * float(prop @ dz)
            continue
        for z in range(model.n_obs):
            lz = float(prop @ obs[:, z])
            if lz <= 0.0:
                continue
            post = prop * obs[:, z] / lz
            stack.append((t + 1, post, hist + ((a, z),), like * lz))
    return acc


def lemma_reward_sides(
    model: TinyDiscretePomdp,
    policy: HistoryPolicy,
    i: int,
    which: str,
) -> tuple[float, float]:
    """Expected step-i reward computed two ways.

    The first is the history expectation: branch likelihood times the
    belief-weighted reward. The second marginalizes state trajectories
    jointly with observations via a forward pass per observation sequence.
    The two must agree to float precision; their equality underpins the
    bound theorems.
    """
    obs = model.obs_matrix(which)
    # side 1: history enumeration with belief updates
    side_hist = 0.0
    stack: list[tuple[int, np.ndarray, History, float]] = [(0, model.b0, (), 1.0)]
    actions_at: dict[History, int] = {}
    while stack:
        t, belief, hist, like = stack.pop()
        if t == i:
            a = 0 if i == model.horizon else policy.action(hist)
            side_hist += like * float(belief @ model.rewards[i, :, a])
            continue
        a = policy.action(hist)
        actions_at[hist] = a
        prop = belief @ model.transition[a]
        for z in range(model.n_obs):
            lz = float(prop @ obs[:, z])
            if lz <= 0.0:
                continue
            post = prop * obs[:, z] / lz
            stack.append((t + 1, post, hist + ((a, z),), like * lz))

    # side 2: joint state-observation trajectories (forward algorithm per
    # observation sequence; actions replayed from the policy)
    side_traj = 0.0
    frontier: list[tuple[History, np.ndarray]] = [((), model.b0.copy())]
    for step in range(i):
        nxt = []
        for hist, fwd in frontier:
            a = policy.action(hist)
            prop = fwd @ model.transition[a]
            for z in range(model.n_obs):
                nxt.append((hist + ((a, z),), prop * obs[:, z]))
        frontier = nxt
    for hist, fwd in frontier:
        a = 0 if i == model.horizon else policy.action(hist)
        side_traj += float(fwd @ model.rewards[i, :, a])
    return side_hist, side_traj


def optimal_policy(
    model: TinyDiscretePomdp, which: str, *, limit: int = 10**6
) -> tuple[HistoryPolicy, np.ndarray]:
    """Optimal history policy and its root Q-values by backward recursion."""
    _check_budget(model, limit)
    obs = model.obs_matrix(which)
    table: dict[History, int] = {}

    def v_of(t: int, belief: np.ndarray, hist: History) -> float:
        if t == model.horizon:
            return _reward_at(model, t, belief, None)
        qs = [q_of(t, belief, hist, a) for a in range(model.n_actions)]
        best = int(np.argmax(qs))
        table[hist] = best
        return qs[best]

    def q_of(t: int, belief: np.ndarray, hist: History, a: int) -> float:
        total = _reward_at(model, t, belief, a)
        prop = belief @ model.transition[a]
        for z in range(model.n_obs):
            lz = float(prop @ obs[:, z])
            if lz <= 0.0:
                continue
            post = prop * obs[:, z] / lz
            total += model.gamma * lz * v_of(t + 1, post, hist + ((a, z),))
        return total

    root_q = np.array([q_of(0, model.b0, (), a) for a in range(model.n_actions)])
    # ensure the table covers the root and every visited history
    table[()] = int(np.argmax(root_q))
    return HistoryPolicy(table), root_q


# ---------------------------------------------------------------------------
# plain-text serialization (versionable oracle fixtures)
# ---------------------------------------------------------------------------

_FORMAT_HEADER = "tiny-pomdp v1"


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def save_tiny(model: TinyDiscretePomdp, path) -> None:
    """Write the model in the documented plain-text matrix format."""
    lines = [_FORMAT_HEADER]
    lines.append(f"states {model.n_states}")
    lines.append(f"actions {model.n_actions}")
    lines.append(f"observations {model.n_obs}")
    lines.append(f"horizon {model.horizon}")
    lines.append(f"gamma {_fmt(model.gamma)}")
    lines.append("initial_belief")
    lines.append(" ".join(_fmt(v) for v in model.b0))
    for a in range(model.n_actions):
        lines.append(f"transition {a}")
        for row in model.transition[a]:
            lines.append(" ".join(_fmt(v) for v in row))
    for name, mat in (("obs_original", model.p_z), ("obs_simplified", model.q_z)):
        lines.append(name)
        for row in mat:
            lines.append(" ".join(_fmt(v) for v in row))
    for t in range(model.horizon + 1):
        lines.append(f"reward {t}")
        for row in model.rewards[t]:
            lines.append(" ".join(_fmt(v) for v in row))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def load_tiny(path) -> TinyDiscretePomdp:
    """Read a model written by :func:`save_tiny` (bit-exact round trip)."""
    with open(path, encoding="ascii") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if lines[0] != _FORMAT_HEADER:
        raise ValueError(f"unrecognized header {lines[0]!r}")
    idx = 1
    meta = {}
    for key in ("states", "actions", "observations", "horizon"):
        name, val = lines[idx].split()
        if name != key:
            raise ValueError(f"expected {key!r}, found {name!r}")
        meta[key] = int(val)
        idx += 1
    name, val = lines[idx].split()
    if name != "gamma":
        raise ValueError("expected gamma")
    gamma = float(val)
    idx += 1

    def _rows(n):
        nonlocal idx
        out = [np.array([float(v) for v in lines[idx + i].split()]) for i in range(n)]
        idx += n
        return np.stack(out)

    if lines[idx] != "initial_belief":
        raise ValueError("expected initial_belief")
    idx += 1
    b0 = _rows(1)[0]
    transition = []
    for a in range(meta["actions"]):
        if lines[idx] != f"transition {a}":
            raise ValueError(f"expected transition {a}")
        idx += 1
        transition.append(_rows(meta["states"]))
    mats = {}
    for key in ("obs_original", "obs_simplified"):
        if lines[idx] != key:
            raise ValueError(f"expected {key}")
        idx += 1
        mats[key] = _rows(meta["states"])
    rewards = []
    for t in range(meta["horizon"] + 1):
        if lines[idx] != f"reward {t}":
            raise ValueError(f"expected reward {t}")
        idx += 1
        rewards.append(_rows(meta["states"]))
    return TinyDiscretePomdp(
        transition=np.stack(transition),
        p_z=mats["obs_original"],
        q_z=mats["obs_simplified"],
        rewards=np.stack(rewards),
        horizon=meta["horizon"],
        gamma=gamma,
        b0=b0,
    )
