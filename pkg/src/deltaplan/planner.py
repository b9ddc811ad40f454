"""Monte Carlo tree search over particle beliefs with double progressive
widening, joint accumulation of the value estimate and the discrepancy
bound estimate, and extraction of the plain / lower-bound / upper-bound
action choices.

Visit counts are incremented before the widening checks, so a fresh node
widens on its first visit. Unvisited action edges select with an infinite
exploration bonus; every argmax breaks ties toward the lowest action index,
which makes plans a deterministic function of (seed, config, root belief).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .bounds import BoundConfig, m_belief
from .particles import ParticleBelief, propagate, resample, sis_update

UNVISITED_BONUS = float("inf")


@dataclass(frozen=True)
class PlannerConfig:
    n_sims: int = 500
    ucb_c: float = 50.0
    k_a: float = 1.1
    alpha_a: float = 0.24
    k_o: float = 1.1
    alpha_o: float = 0.19
    particle_count: int = 250
    bound_config: BoundConfig | None = None

    def __post_init__(self):
        if self.n_sims < 1:
            raise ValueError("need at least one simulation")
        if min(self.k_a, self.alpha_a, self.k_o, self.alpha_o) <= 0:
            raise ValueError("widening constants must be positive")


@dataclass
class _Child:
    node: "BeliefTreeNode"
    observation: object
    reward: float
    survival_factor: float


@dataclass
class _ActionEdge:
    action_index: int
    n: int = 0
    q_hat: float = 0.0
    phi_hat: float = 0.0
    m_hat: float | None = None
    children: list = field(default_factory=list)


@dataclass
class BeliefTreeNode:
    belief: ParticleBelief
    n: int = 0
    edges: list = field(default_factory=list)  # ordered list of _ActionEdge


@dataclass(frozen=True)
class PlanResult:
    q_hat: np.ndarray
    phi_hat: np.ndarray
    visits: np.ndarray
    pi_qz: int
    pi_lb: int
    pi_ub: int
    duration_ms: float
    n_sims: int


def extract_choices(q_hat: np.ndarray, phi_hat: np.ndarray, visits: np.ndarray) -> tuple[int, int, int]:
    """Argmax of q, q - phi, q + phi over visited actions (lowest index wins)."""
    visited = visits > 0
    if not visited.any():
        raise ValueError("no action was visited")

    def _pick(values: np.ndarray) -> int:
        masked = np.where(visited, values, -np.inf)
        return int(np.argmax(masked))

    return _pick(q_hat), _pick(q_hat - phi_hat), _pick(q_hat + phi_hat)


def plan(
    root_belief: ParticleBelief,
    t: int,
    model,
    config: PlannerConfig,
    rng: np.random.Generator,
) -> PlanResult:
    """Run a full planning session from ``root_belief`` at time ``t``."""
    if root_belief.fully_terminal:
        raise ValueError("cannot plan from a fully terminal belief")
    if t >= model.horizon:
        raise ValueError("horizon exhausted; no actions remain")
    start = time.perf_counter()
    root = BeliefTreeNode(belief=root_belief)
    for _ in range(config.n_sims):
        _simulate(root, t, model, config, rng)
    n_actions = model.actions.shape[0]
    q = np.zeros(n_actions)
    phi = np.zeros(n_actions)
    visits = np.zeros(n_actions, dtype=int)
    for edge in root.edges:
        q[edge.action_index] = edge.q_hat
        phi[edge.action_index] = edge.phi_hat
        visits[edge.action_index] = edge.n
    pi_qz, pi_lb, pi_ub = extract_choices(q, phi, visits)
    duration_ms = (time.perf_counter() - start) * 1e3
    return PlanResult(q, phi, visits, pi_qz, pi_lb, pi_ub, duration_ms, config.n_sims)


def _simulate(node: BeliefTreeNode, t: int, model, config: PlannerConfig, rng) -> tuple[float, float]:
    if t >= model.horizon or node.belief.fully_terminal:
        return 0.0, 0.0
    node.n += 1
    n_actions = model.actions.shape[0]
    if len(node.edges) < n_actions and len(node.edges) < config.k_a * node.n**config.alpha_a:
        node.edges.append(_ActionEdge(action_index=len(node.edges)))
    edge = _select_ucb(node, config.ucb_c)
    edge.n += 1
    if config.bound_config is not None and edge.m_hat is None:
        edge.m_hat = m_belief(
            node.belief, model.actions[edge.action_index], t, config.bound_config, model, rng
        )
    if len(edge.children) < config.k_o * edge.n**config.alpha_o:
        child = _expand(node.belief, edge.action_index, model, rng)
        edge.children.append(child)
        leaf_q, leaf_phi = rollout(child.node.belief, t + 1, model, config, rng)
    else:
        child = edge.children[int(rng.integers(len(edge.children)))]
        leaf_q, leaf_phi = _simulate(child.node, t + 1, model, config, rng)
    total_q = child.reward + model.gamma * child.survival_factor * leaf_q
    total_phi = (edge.m_hat or 0.0) + leaf_phi
    edge.q_hat += (total_q - edge.q_hat) / edge.n
    edge.phi_hat += (total_phi - edge.phi_hat) / edge.n
    return total_q, total_phi


def _select_ucb(node: BeliefTreeNode, c: float) -> _ActionEdge:
    best = None
    best_score = -math.inf
    log_n = math.log(max(node.n, 1))
    for edge in node.edges:
        if edge.n == 0:
            score = UNVISITED_BONUS
        else:
            score = edge.q_hat + c * math.sqrt(log_n / edge.n)
        if score > best_score:
            best = edge
            best_score = score
    return best


def _expand(belief: ParticleBelief, action_index: int, model, rng) -> _Child:
    """Propagate, sample an observation, reweight, resample."""
    action = model.actions[action_index]
    propagated, reward, survival = propagate(belief, action, model, rng)
    if propagated.fully_terminal:
        return _Child(node=BeliefTreeNode(belief=propagated), observation=None, reward=reward, survival_factor=0.0)
    cum = np.cumsum(propagated.weights)
    cum[-1] = 1.0
    pick = int(np.searchsorted(cum, rng.random(), side="right"))
    z = model.obs.sample_obs(propagated.states[pick], rng)
    posterior = sis_update(propagated, z, model.obs)
    posterior = resample(posterior, rng)
    return _Child(node=BeliefTreeNode(belief=posterior), observation=z, reward=reward, survival_factor=survival)


def rollout(
    belief: ParticleBelief, t: int, model, config: PlannerConfig, rng
) -> tuple[float, float]:
    """Leaf estimate: greedy rollout returning (return, bound return).

    Rewards are discounted and survival-weighted; bound increments are
    accumulated plainly. Uses the model's kernel rollout when it has one,
    otherwise a generic loop driven by ``model.rollout_action``.
    """
    if t >= model.horizon or belief.fully_terminal:
        return 0.0, 0.0
    if hasattr(model, "fast_rollout"):
        ret, bound = model.fast_rollout(
            belief.states, belief.weights, t, config.bound_config, rng
        )
        return float(ret), float(bound)
    ret = 0.0
    bound = 0.0
    disc = 1.0
    current = belief
    while t < model.horizon and not current.fully_terminal:
        mean = current.weights @ current.states
        a_idx = model.rollout_action(mean, rng)
        if config.bound_config is not None:
            bound += m_belief(current, model.actions[a_idx], t, config.bound_config, model, rng)
        current, reward, survival = propagate(current, model.actions[a_idx], model, rng)
        ret += disc * reward
        disc *= model.gamma * survival
        t += 1
        if survival <= 0.0:
            break
    return ret, bound


def backup_totals(
    rewards: list[float],
    survivals: list[float],
    m_hats: list[float],
    leaf_q: float,
    leaf_phi: float,
    gamma: float,
) -> tuple[float, float]:
    """Fold a root-to-leaf path into the totals backed up at the root edge.

    Value: r + gamma * survival * child_total, leaf inclusive. Bound:
    m_hat + child_total with no discount and no survival weighting.
    """
    total_q = leaf_q
    total_phi = leaf_phi
    for r, s, m in zip(reversed(rewards), reversed(survivals), reversed(m_hats)):
        total_q = r + gamma * s * total_q
        total_phi = m + total_phi
    return total_q, total_phi
