"""Hot numeric kernels with numba-jitted and pure-numpy implementations.

Every kernel exists in two versions: a ``_np`` suffix (vectorized numpy,
always importable) and a jitted one compiled with numba. The jitted path is
used when numba is installed and the environment variable
``DELTAPLAN_NUMBA`` is not set to ``0`` at import time.
``benchmarks/kernel_bench.py`` compares the two paths on representative
workloads.

All kernels are serial: results must be reproducible for a given input and
seed, and parallel reductions would reorder float sums.
"""

from __future__ import annotations

import math
import os

import numpy as np

LOG_2PI = math.log(2.0 * math.pi)


def _numba_requested() -> bool:
    flag = os.environ.get("DELTAPLAN_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "off", "no")


NUMBA_ACTIVE = False
if _numba_requested():
    try:
        from numba import njit

        NUMBA_ACTIVE = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ACTIVE = False


# ---------------------------------------------------------------------------
# numpy implementations (reference + fallback path)
# ---------------------------------------------------------------------------


def diag_gauss_logpdf_np(diffs: np.ndarray, var: float) -> np.ndarray:
    """Log density of N(0, var*I_2) at rows of ``diffs`` (n, 2)."""
    sq = diffs[:, 0] ** 2 + diffs[:, 1] ** 2
    return -0.5 * sq / var - (LOG_2PI + math.log(var))


def shared_cov_gmm_logpdf_np(
    diffs: np.ndarray,
    offsets: np.ndarray,
    log_weights: np.ndarray,
    var: float,
) -> np.ndarray:
    """Log density of a shared-covariance GMM at rows of ``diffs`` (n, 2).

    Components are N(offset_k, var*I_2) with the given log weights; ``diffs``
    are points expressed relative to the mixture center. Accumulated in log
    space with a max shift so points far from every component do not
    underflow to zero density.
    """
    d0 = diffs[:, 0][:, None] - offsets[:, 0][None, :]
    d1 = diffs[:, 1][:, None] - offsets[:, 1][None, :]
    logs = log_weights[None, :] - 0.5 * (d0 * d0 + d1 * d1) / var
    m = logs.max(axis=1)
    out = m + np.log(np.exp(logs - m[:, None]).sum(axis=1))
    return out - (LOG_2PI + math.log(var))


def min_sq_dist_np(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Per-point squared distance to the nearest of ``centers`` (k, 2)."""
    d0 = points[:, 0][:, None] - centers[:, 0][None, :]
    d1 = points[:, 1][:, None] - centers[:, 1][None, :]
    return (d0 * d0 + d1 * d1).min(axis=1)


def bound_increment_sum_np(
    delta_xy: np.ndarray,
    delta_val: np.ndarray,
    center: np.ndarray,
    d_t: float,
    sigma_sq: float,
    q0_density: float,
) -> float:
    """Truncated importance-weighted discrepancy sum for one query center.

    Sums transition_pdf(x_n | center) / q0 * delta_n over stored states
    within Euclidean radius ``d_t`` of ``center``, for an isotropic Gaussian
    transition of variance ``sigma_sq`` whose mean is ``center``. Returns the
    raw sum: no 1/N normalization and no value scaling.
    """
    if delta_xy.shape[0] == 0:
        return 0.0
    d0 = delta_xy[:, 0] - center[0]
    d1 = delta_xy[:, 1] - center[1]
    sq = d0 * d0 + d1 * d1
    mask = sq <= d_t * d_t
    if not mask.any():
        return 0.0
    dens = np.exp(-0.5 * sq[mask] / sigma_sq) / (2.0 * math.pi * sigma_sq)
    return float(np.sum(dens / q0_density * delta_val[mask]))


def bound_belief_sum_np(
    particles: np.ndarray,
    shift: np.ndarray,
    delta_xy: np.ndarray,
    delta_val: np.ndarray,
    d_t: float,
    sigma_sq: float,
    q0_density: float,
) -> float:
    """Mean of ``bound_increment_sum`` over particles with centers p+shift."""
    n = particles.shape[0]
    if n == 0 or delta_xy.shape[0] == 0:
        return 0.0
    c0 = particles[:, 0] + shift[0]
    c1 = particles[:, 1] + shift[1]
    d0 = c0[:, None] - delta_xy[:, 0][None, :]
    d1 = c1[:, None] - delta_xy[:, 1][None, :]
    sq = d0 * d0 + d1 * d1
    inside = sq <= d_t * d_t
    dens = np.where(inside, np.exp(np.where(inside, -0.5 * sq / sigma_sq, 0.0)), 0.0)
    dens /= 2.0 * math.pi * sigma_sq
    return float((dens / q0_density * delta_val[None, :]).sum() / n)


def beacons_rollout_np(
    states: np.ndarray,
    weights: np.ndarray,
    t0: int,
    horizon: int,
    gamma: float,
    actions: np.ndarray,
    sigma_t: float,
    arena: np.ndarray,
    goal: np.ndarray,
    goal_center: np.ndarray,
    r_hit: float,
    r_collide: float,
    r_miss_step: float,
    r_miss_last: float,
    normals: np.ndarray,
    with_bound: bool,
    v_max: np.ndarray,
    n_delta_total: int,
    delta_xy: np.ndarray,
    delta_val: np.ndarray,
    d_t: float,
    q0_density: float,
    choice_u: np.ndarray,
) -> tuple[float, float]:
    """Greedy goal-steering rollout from a beacons particle belief.

    Each step picks the action with the largest inner product against the
    direction from the belief mean to the goal center (lowest action index
    on ties), optionally accumulates the per-step bound increment over
    ``choice_u``-selected particles, then advances the surviving particles.
    Rewards are survival-weighted and discounted; bound increments are
    neither. ``normals`` is (max_steps, C, 2) pre-drawn noise and
    ``choice_u`` is (max_steps, n_x) pre-drawn uniforms so that both kernel
    paths consume identical randomness.

    Returns ``(return, bound_return)``.
    """
    states = states.copy()
    weights = weights.copy()
    ret = 0.0
    bound_ret = 0.0
    disc = 1.0
    t = t0
    step = 0
    sigma_sq = sigma_t * sigma_t
    while t < horizon:
        gx = goal_center[0] - float(weights @ states[:, 0])
        gy = goal_center[1] - float(weights @ states[:, 1])
        ips = actions[:, 0] * gx + actions[:, 1] * gy
        best_a = int(np.argmax(ips))
        if with_bound and delta_xy.shape[0] > 0:
            cum = np.cumsum(weights)
            cum[-1] = 1.0
            idx = np.searchsorted(cum, choice_u[step], side="right")
            m_hat = v_max[t + 1] / n_delta_total * bound_belief_sum_np(
                states[idx], actions[best_a], delta_xy, delta_val, d_t, sigma_sq, q0_density
            )
            bound_ret += m_hat
        nxt = states + actions[best_a][None, :] + sigma_t * normals[step]
        in_goal = (
            (nxt[:, 0] >= goal[0])
            & (nxt[:, 0] <= goal[2])
            & (nxt[:, 1] >= goal[1])
            & (nxt[:, 1] <= goal[3])
        )
        in_arena = (
            (nxt[:, 0] >= arena[0])
            & (nxt[:, 0] <= arena[2])
            & (nxt[:, 1] >= arena[1])
            & (nxt[:, 1] <= arena[3])
        )
        collide = (~in_arena) & (~in_goal)
        t += 1
        r_miss = r_miss_last if t == horizon else r_miss_step
        rew = r_hit * in_goal + r_miss * (~in_goal) + r_collide * collide
        ret += disc * float(weights @ rew)
        alive = ~(in_goal | collide)
        surv = float(weights @ alive)
        if t >= horizon or surv <= 0.0:
            break
        disc *= gamma * surv
        weights = weights * alive / surv
        states = nxt
        step += 1
    return ret, bound_ret


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if NUMBA_ACTIVE:

    @njit(cache=True)
    def _diag_gauss_logpdf_nb(diffs, var):
        n = diffs.shape[0]
        out = np.empty(n)
        c = LOG_2PI + math.log(var)
        for i in range(n):
            out[i] = -0.5 * (diffs[i, 0] ** 2 + diffs[i, 1] ** 2) / var - c
        return out

    @njit(cache=True)
    def _shared_cov_gmm_logpdf_nb(diffs, offsets, log_weights, var):
        n = diffs.shape[0]
        k = offsets.shape[0]
        out = np.empty(n)
        c = LOG_2PI + math.log(var)
        logs = np.empty(k)
        for i in range(n):
            m = -np.inf
            for j in range(k):
                d0 = diffs[i, 0] - offsets[j, 0]
                d1 = diffs[i, 1] - offsets[j, 1]
                v = log_weights[j] - 0.5 * (d0 * d0 + d1 * d1) / var
                logs[j] = v
                if v > m:
                    m = v
            s = 0.0
            for j in range(k):
                s += math.exp(logs[j] - m)
            out[i] = m + math.log(s) - c
        return out

    @njit(cache=True)
    def _min_sq_dist_nb(points, centers):
        n = points.shape[0]
        k = centers.shape[0]
        out = np.empty(n)
        for i in range(n):
            best = np.inf
            for j in range(k):
                d0 = points[i, 0] - centers[j, 0]
                d1 = points[i, 1] - centers[j, 1]
                sq = d0 * d0 + d1 * d1
                if sq < best:
                    best = sq
            out[i] = best
        return out

    @njit(cache=True)
    def _bound_increment_sum_nb(delta_xy, delta_val, center, d_t, sigma_sq, q0_density):
        total = 0.0
        r2 = d_t * d_t
        norm = 2.0 * math.pi * sigma_sq
        for n in range(delta_xy.shape[0]):
            d0 = delta_xy[n, 0] - center[0]
            d1 = delta_xy[n, 1] - center[1]
            sq = d0 * d0 + d1 * d1
            if sq <= r2:
                total += math.exp(-0.5 * sq / sigma_sq) / norm / q0_density * delta_val[n]
        return total

    @njit(cache=True)
    def _bound_belief_sum_nb(particles, shift, delta_xy, delta_val, d_t, sigma_sq, q0_density):
        n = particles.shape[0]
        if n == 0 or delta_xy.shape[0] == 0:
            return 0.0
        total = 0.0
        center = np.empty(2)
        for i in range(n):
            center[0] = particles[i, 0] + shift[0]
            center[1] = particles[i, 1] + shift[1]
            total += _bound_increment_sum_nb(delta_xy, delta_val, center, d_t, sigma_sq, q0_density)
        return total / n

    @njit(cache=True)
    def _beacons_rollout_nb(
        states,
        weights,
        t0,
        horizon,
        gamma,
        actions,
        sigma_t,
        arena,
        goal,
        goal_center,
        r_hit,
        r_collide,
        r_miss_step,
        r_miss_last,
        normals,
        with_bound,
        v_max,
        n_delta_total,
        delta_xy,
        delta_val,
        d_t,
        q0_density,
        choice_u,
    ):
        c = states.shape[0]
        st = states.copy()
        w = weights.copy()
        ret = 0.0
        bound_ret = 0.0
        disc = 1.0
        t = t0
        step = 0
        sigma_sq = sigma_t * sigma_t
        n_x = choice_u.shape[1]
        picked = np.empty((n_x, 2))
        center = np.empty(2)
        while t < horizon:
            mx = 0.0
            my = 0.0
            for i in range(c):
                mx += w[i] * st[i, 0]
                my += w[i] * st[i, 1]
            gx = goal_center[0] - mx
            gy = goal_center[1] - my
            best_a = 0
            best_ip = -np.inf
            for k in range(actions.shape[0]):
                ip = actions[k, 0] * gx + actions[k, 1] * gy
                if ip > best_ip:
                    best_ip = ip
                    best_a = k
            if with_bound and delta_xy.shape[0] > 0:
                for j in range(n_x):
                    u = choice_u[step, j]
                    acc = 0.0
                    idx = c - 1
                    for i in range(c):
                        acc += w[i]
                        if u < acc:
                            idx = i
                            break
                    picked[j, 0] = st[idx, 0]
                    picked[j, 1] = st[idx, 1]
                total = 0.0
                for j in range(n_x):
                    center[0] = picked[j, 0] + actions[best_a, 0]
                    center[1] = picked[j, 1] + actions[best_a, 1]
                    total += _bound_increment_sum_nb(
                        delta_xy, delta_val, center, d_t, sigma_sq, q0_density
                    )
                bound_ret += v_max[t + 1] / n_delta_total * (total / n_x)
            t += 1
            r_miss = r_miss_last if t == horizon else r_miss_step
            rho = 0.0
            surv = 0.0
            for i in range(c):
                x0 = st[i, 0] + actions[best_a, 0] + sigma_t * normals[step, i, 0]
                x1 = st[i, 1] + actions[best_a, 1] + sigma_t * normals[step, i, 1]
                st[i, 0] = x0
                st[i, 1] = x1
                in_goal = goal[0] <= x0 <= goal[2] and goal[1] <= x1 <= goal[3]
                in_arena = arena[0] <= x0 <= arena[2] and arena[1] <= x1 <= arena[3]
                collide = (not in_arena) and (not in_goal)
                r = 0.0
                if in_goal:
                    r += r_hit
                else:
                    r += r_miss
                if collide:
                    r += r_collide
                rho += w[i] * r
                if in_goal or collide:
                    w[i] = -w[i]  # mark terminal, restored below
                else:
                    surv += w[i]
            ret += disc * rho
            if t >= horizon or surv <= 0.0:
                break
            disc *= gamma * surv
            for i in range(c):
                if w[i] < 0.0:
                    w[i] = 0.0
                else:
                    w[i] = w[i] / surv
            step += 1
        return ret, bound_ret


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

if NUMBA_ACTIVE:
    diag_gauss_logpdf = _diag_gauss_logpdf_nb
    shared_cov_gmm_logpdf = _shared_cov_gmm_logpdf_nb
    min_sq_dist = _min_sq_dist_nb
    bound_increment_sum = _bound_increment_sum_nb
    bound_belief_sum = _bound_belief_sum_nb
    beacons_rollout = _beacons_rollout_nb
else:
    diag_gauss_logpdf = diag_gauss_logpdf_np
    shared_cov_gmm_logpdf = shared_cov_gmm_logpdf_np
    min_sq_dist = min_sq_dist_np
    bound_increment_sum = bound_increment_sum_np
    bound_belief_sum = bound_belief_sum_np
    beacons_rollout = beacons_rollout_np


def active_path() -> str:
    """Name of the kernel path in use ("numba" or "numpy")."""
    return "numba" if NUMBA_ACTIVE else "numpy"
