"""Seeded verification suites: numeric checks of the equalities and
inequalities the estimators rely on, run against brute-force oracles on
tiny instances. Every suite returns a deterministic, JSON-serializable
report (no wall-clock content), so repeated runs under one seed are
byte-identical.
"""

from __future__ import annotations

import math

import numpy as np

from .atlas import DeltaAtlas, ProposalQ0, Rect, UnconditionalObs, estimate_tv
from .bounds import BoundConfig, hoeffding_bound, m_state
from .gaussians import Gaussian2, gaussian_tv_closed_form
from .sparse import convergence_experiment
from .tiny import (
    RewardSchedule,
    corollary_rhs,
    exact_bound_m,
    exact_phi,
    exact_q_value,
    exact_value,
    lemma_reward_sides,
    random_policy,
    random_tiny,
)

SUITES = ("lemma1", "bounds", "convergence", "estimators", "all")

FLOAT_SLACK = 1e-9


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, *key))))


def verify_lemma1(seed: int, n_instances: int = 100) -> dict:
    """History-expectation vs state-trajectory-expectation of rewards."""
    worst = 0.0
    failures = 0
    for i in range(n_instances):
        rng = _rng(seed, i)
        model = random_tiny(rng)
        policy = random_policy(model, rng)
        for which in ("original", "simplified"):
            for step in range(1, model.horizon + 1):
                lhs, rhs = lemma_reward_sides(model, policy, step, which)
                err = abs(lhs - rhs)
                worst = max(worst, err)
                if err > FLOAT_SLACK:
                    failures += 1
    return {
        "suite": "lemma1",
        "seed": seed,
        "instances": n_instances,
        "max_abs_error": worst,
        "failures": failures,
        "ok": failures == 0,
    }


def verify_bounds(seed: int, n_instances: int = 1000) -> dict:
    """Value/action-value gaps against the exact cumulative bounds.

    Checks, per random instance and policy: the value gap against the
    cumulative bound, the per-action gap against the action bound, the
    equality of the cumulative bound with the per-step scaled-expectation
    form, and the per-step reward-gap bound.
    """
    gammas = (1.0, 0.9, 0.5)
    violations = {"value_bound": 0, "action_bound": 0, "equality": 0, "per_step": 0}
    worst_equality = 0.0
    for i in range(n_instances):
        rng = _rng(seed, i)
        model = random_tiny(rng, gamma=gammas[i % len(gammas)])
        policy = random_policy(model, rng)
        v_p = exact_value(model, policy, "original")
        v_q = exact_value(model, policy, "simplified")
        m_bound = exact_bound_m(model, policy)
        if abs(v_p - v_q) > m_bound + FLOAT_SLACK:
            violations["value_bound"] += 1
        rhs = corollary_rhs(model, policy)
        err = abs(m_bound - rhs)
        worst_equality = max(worst_equality, err)
        if err > FLOAT_SLACK:
            violations["equality"] += 1
        for a in range(model.n_actions):
            q_p = exact_q_value(model, policy, a, "original")
            q_q = exact_q_value(model, policy, a, "simplified")
            phi = exact_phi(model, policy, a)
            if abs(q_p - q_q) > phi + FLOAT_SLACK:
                violations["action_bound"] += 1
        schedule = model.schedule()
        for step in range(1, model.horizon + 1):
            lhs_p, _ = lemma_reward_sides(model, policy, step, "original")
            lhs_q, _ = lemma_reward_sides(model, policy, step, "simplified")
            cap = schedule.r_max_per_step[step] * sum(
                _expected_delta(model, policy, j) for j in range(1, step + 1)
            )
            if abs(lhs_p - lhs_q) > cap + FLOAT_SLACK:
                violations["per_step"] += 1
    total = sum(violations.values())
    return {
        "suite": "bounds",
        "seed": seed,
        "instances": n_instances,
        "violations": violations,
        "max_equality_error": worst_equality,
        "ok": total == 0,
    }


def _expected_delta(model, policy, i):
    from .tiny import expected_propagated_delta

    return expected_propagated_delta(model, policy, i)


def verify_convergence(
    seed: int,
    n_instances: int = 30,
    c_grid: tuple[int, ...] = (8, 32, 128, 512),
    rel_err_cap: float = 0.05,
) -> dict:
    """Monotone error decay of the fixed-width estimator (see sparse)."""
    result = convergence_experiment(seed, n_instances=n_instances, c_grid=c_grid)
    ok = result["median_strictly_decreasing"] and result["final_median_rel_err"] < rel_err_cap
    return {
        "suite": "convergence",
        "seed": seed,
        "instances": n_instances,
        "c_grid": list(c_grid),
        "rows": result["rows"],
        "median_strictly_decreasing": result["median_strictly_decreasing"],
        "final_median_rel_err": result["final_median_rel_err"],
        "rel_err_cap": rel_err_cap,
        "ok": ok,
    }


TV_SIGMA = 0.3
TV_GAP = 0.3
TV_N_Z = 4096
TV_TOLERANCE = 0.02
TV_MIN_HITS = 95


def tv_estimator_trials(seed: int, n_trials: int = 100) -> dict:
    """Sampled TV estimates against the closed form for a Gaussian pair."""
    g1 = Gaussian2(np.zeros(2), np.full(2, TV_SIGMA**2))
    g2 = Gaussian2(np.array([TV_GAP, 0.0]), np.full(2, TV_SIGMA**2))
    target = gaussian_tv_closed_form(g1, g2)
    p = UnconditionalObs(g1)
    q = UnconditionalObs(g2)
    hits = 0
    worst = 0.0
    for i in range(n_trials):
        est = estimate_tv(np.zeros(2), p, q, TV_N_Z, _rng(seed, i))
        err = abs(est - target)
        worst = max(worst, err)
        if err < TV_TOLERANCE:
            hits += 1
    return {
        "target": target,
        "trials": n_trials,
        "hits": hits,
        "required": TV_MIN_HITS,
        "max_abs_error": worst,
        "ok": hits >= (TV_MIN_HITS * n_trials) // 100,
    }


class _UniformRectModel:
    """Synthetic transition: uniform over the proposal rectangle.

    With the proposal equal to the transition, every importance ratio is 1
    and the bound increment reduces to the plain average of stored
    discrepancies, which has an analytic expectation.
    """

    def __init__(self, rect: Rect):
        self.rect = rect

    def transition_mean(self, x, action):
        return np.asarray(x, dtype=float)

    def transition_logpdf_batch(self, x, action, xs):
        inside = self.rect.contains(xs)
        with np.errstate(divide="ignore"):
            return np.where(inside, -math.log(self.rect.area), -np.inf)


def hoeffding_coverage(
    seed: int,
    n_redraws: int = 1000,
    n_delta: int = 500,
) -> dict:
    """Empirical concentration of the bound increment under i.i.d. states.

    Discrepancy values are the indicator 2*[x0 > 1/2] on the unit square
    (mean 1, the highest-variance case for the Hoeffding range), the
    transition equals the uniform proposal, and nu is chosen so the bound
    is about 0.1. The observed violation frequency must not exceed it.
    """
    rect = Rect(np.zeros(2), np.ones(2))
    model = _UniformRectModel(rect)
    schedule = RewardSchedule(np.array([1.0, 1.0]), 1.0)
    v_max = schedule.v_max_per_step[1]  # scale applied at t=0
    max_ratio = 1.0  # transition density equals the proposal density
    b = 2.0 * v_max * max_ratio
    # nu making the bound land exactly at 0.1: nu^2 = B^2 ln(20) / (2 n)
    nu = math.sqrt(b * b * math.log(20.0) / (2.0 * n_delta))
    bound = hoeffding_bound(b, n_delta, nu)
    exact_m = v_max * 1.0  # E[delta] = 1 under the uniform proposal
    violations = 0
    for i in range(n_redraws):
        rng = _rng(seed, i)
        states = rng.random((n_delta, 2))
        values = 2.0 * (states[:, 0] > 0.5)
        keep = values > 0.0
        atlas = DeltaAtlas(
            delta_states=states[keep],
            delta_values=values[keep],
            kept_indices=np.flatnonzero(keep),
            proposal=ProposalQ0(rect),
            n_sampled=n_delta,
            n_z=1,
            threshold=0.0,
            seed=seed,
        )
        config = BoundConfig(
            d_t=math.inf, n_x=1, atlas=atlas, schedule=schedule,
            center_on_transition_mean=False,
        )
        m_hat = m_state(np.full(2, 0.5), None, 0, config, model)
        if abs(m_hat - exact_m) >= nu:
            violations += 1
    freq = violations / n_redraws
    return {
        "n_redraws": n_redraws,
        "n_delta": n_delta,
        "nu": nu,
        "bound": bound,
        "violation_frequency": freq,
        "ok": freq <= bound,
    }


def quadrature_tv(g1: Gaussian2, g2: Gaussian2, half_width: float = 6.0, n: int = 801) -> float:
    """Brute-force integral of |p - q| on a grid (oracle for the closed form)."""
    center = (g1.mean + g2.mean) / 2.0
    xs = np.linspace(center[0] - half_width, center[0] + half_width, n)
    ys = np.linspace(center[1] - half_width, center[1] + half_width, n)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    diff = np.abs(g1.pdf(pts) - g2.pdf(pts))
    cell = (xs[1] - xs[0]) * (ys[1] - ys[0])
    return float(diff.sum() * cell)


def closed_form_vs_quadrature(seed: int, n_pairs: int = 20) -> dict:
    """Closed-form TV against grid quadrature on random equal-cov pairs."""
    rng = _rng(seed, 0)
    worst = 0.0
    for _ in range(n_pairs):
        sigma = float(rng.uniform(0.2, 1.0))
        gap = rng.uniform(-1.5, 1.5, size=2)
        g1 = Gaussian2(np.zeros(2), np.full(2, sigma**2))
        g2 = Gaussian2(gap, np.full(2, sigma**2))
        worst = max(worst, abs(gaussian_tv_closed_form(g1, g2) - quadrature_tv(g1, g2)))
    return {"pairs": n_pairs, "max_abs_error": worst, "ok": worst < 1e-4}


def verify_estimators(seed: int, n_trials: int = 100, n_redraws: int = 1000) -> dict:
    tv = tv_estimator_trials(seed, n_trials)
    quad = closed_form_vs_quadrature(seed)
    hoeff = hoeffding_coverage(seed, n_redraws=n_redraws)
    return {
        "suite": "estimators",
        "seed": seed,
        "tv_trials": tv,
        "closed_form_vs_quadrature": quad,
        "hoeffding_coverage": hoeff,
        "ok": tv["ok"] and quad["ok"] and hoeff["ok"],
    }


def run_suite(
    suite: str,
    seed: int = 0,
    *,
    instances: int | None = None,
    trials: int | None = None,
    c_grid: tuple[int, ...] | None = None,
) -> dict:
    """Run one named suite (or all) and return its report."""
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; choose from {SUITES}")
    if suite == "lemma1":
        return verify_lemma1(seed, instances or 100)
    if suite == "bounds":
        return verify_bounds(seed, instances or 1000)
    if suite == "convergence":
        return verify_convergence(seed, instances or 30, c_grid or (8, 32, 128, 512))
    if suite == "estimators":
        t = trials or 100
        return verify_estimators(seed, t, n_redraws=10 * t)
    reports = {
        name: run_suite(name, seed, instances=instances, trials=trials, c_grid=c_grid)
        for name in ("lemma1", "bounds", "convergence", "estimators")
    }
    return {
        "suite": "all",
        "seed": seed,
        "reports": reports,
        "ok": all(r["ok"] for r in reports.values()),
    }
