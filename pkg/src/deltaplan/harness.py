"""Experiment driver: configuration, the plan/act/observe/filter scenario
loop, CSV emission, and aggregate reports.

Outputs per run directory:
    records.csv  - one row per scenario timestep; deterministic under
                   (config, seed), byte-for-byte.
    timings.csv  - planning durations (wall clock, inherently
                   non-deterministic; kept out of records.csv on purpose).
    meta.json    - run parameters plus observation-model call counters.
    atlas.txt    - copy of the atlas consumed (simplified/paired modes).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace as dc_replace
from pathlib import Path

import numpy as np

from .atlas import AtlasConfig, DeltaAtlas, Rect, build_atlas, load_atlas, save_atlas
from .beacons import BeaconsConfig, BeaconsEnv, BeaconsPlanningModel, CountingObsModel
from .bounds import BoundConfig
from .particles import (
    ParticleBelief,
    WeightDegeneracyError,
    effective_sample_size,
    from_prior,
    propagate,
    resample,
    sis_update,
)
from .planner import PlannerConfig, plan

logger = logging.getLogger(__name__)

RECORDS_SCHEMA = "deltaplan-records v1"
TIMINGS_SCHEMA = "deltaplan-timings v1"

RECORD_COLUMNS = (
    ["scenario_id", "t", "model_tag", "true_x", "true_y", "obs_x", "obs_y"]
    + [f"q_hat_{i}" for i in range(4)]
    + [f"phi_hat_{i}" for i in range(4)]
    + ["pi_qz", "pi_lb", "pi_ub", "cumulative_reward", "terminal", "seed"]
)

# reference-setup proposal support: the arena inflated by one action length
# on every side, goal depth included, so every state reachable in one step
# from the interior is covered.
DEFAULT_ATLAS_RECT = (-3.0, -2.5, 13.0, 7.0)


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


@dataclass(frozen=True)
class RunConfig:
    env: BeaconsConfig
    planner: PlannerConfig
    d_t: float = 0.6
    n_x: int = 30
    atlas_cfg: AtlasConfig | None = None
    atlas_path: str | None = None
    mode: str = "simplified"
    n_scenarios: int = 10
    seed: int = 0
    out_dir: str = "runs/out"


def _build_dataclass(cls, overrides: dict, name: str):
    valid = set(cls.__dataclass_fields__)
    bad = set(overrides) - valid
    if bad:
        raise ConfigError(f"unknown {name} keys: {sorted(bad)}")
    try:
        return cls(**overrides)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {name} section: {exc}") from exc


def load_config(path: str | Path | None) -> dict:
    """Parse the JSON config file into section dictionaries."""
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    known = {"environment", "planner", "bounds", "atlas", "atlas_path"}
    bad = set(raw) - known
    if bad:
        raise ConfigError(f"unknown config sections: {sorted(bad)}")
    return raw


def make_run_config(
    raw: dict,
    *,
    mode: str = "simplified",
    n_scenarios: int = 10,
    seed: int = 0,
    out_dir: str = "runs/out",
    atlas_path: str | None = None,
) -> RunConfig:
    if mode not in ("original", "simplified", "paired"):
        raise ConfigError(f"unknown mode {mode!r}")
    env_over = dict(raw.get("environment", {}))
    for key in ("prior_means", "beacon_xs", "arena", "goal"):
        if key in env_over:
            env_over[key] = tuple(
                tuple(v) if isinstance(v, list) else v for v in env_over[key]
            )
    env = _build_dataclass(BeaconsConfig, env_over, "environment")
    planner = _build_dataclass(PlannerConfig, dict(raw.get("planner", {})), "planner")
    bounds_over = dict(raw.get("bounds", {}))
    d_t = float(bounds_over.pop("d_t", 0.6))
    n_x = int(bounds_over.pop("n_x", 30))
    if bounds_over:
        raise ConfigError(f"unknown bounds keys: {sorted(bounds_over)}")
    atlas_over = dict(raw.get("atlas", {}))
    rect_vals = atlas_over.pop("rect", list(DEFAULT_ATLAS_RECT))
    if len(rect_vals) != 4:
        raise ConfigError("atlas rect must be [x1, y1, x2, y2]")
    try:
        rect = Rect(np.array(rect_vals[:2]), np.array(rect_vals[2:]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    atlas_cfg = AtlasConfig(
        n_delta=int(atlas_over.pop("n_delta", 2048)),
        n_z=int(atlas_over.pop("n_z", 256)),
        threshold=float(atlas_over.pop("threshold", 1e-4)),
        rect=rect,
    )
    if atlas_over:
        raise ConfigError(f"unknown atlas keys: {sorted(atlas_over)}")
    return RunConfig(
        env=env,
        planner=planner,
        d_t=d_t,
        n_x=n_x,
        atlas_cfg=atlas_cfg,
        atlas_path=atlas_path if atlas_path is not None else raw.get("atlas_path"),
        mode=mode,
        n_scenarios=n_scenarios,
        seed=seed,
        out_dir=out_dir,
    )


def build_atlas_from_config(config: RunConfig | AtlasConfig, seed: int) -> DeltaAtlas:
    """Build the beacons discrepancy atlas for the configured proposal."""
    if isinstance(config, RunConfig):
        env_cfg, atlas_cfg = config.env, config.atlas_cfg
    else:
        env_cfg, atlas_cfg = BeaconsConfig(), config
    env = BeaconsEnv(env_cfg)
    return build_atlas(atlas_cfg, env.obs_model("original"), env.obs_model("simplified"), seed)


def _substream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, *key))))


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass
class ScenarioRecord:
    scenario_id: int
    t: int
    model_tag: str
    true_state: np.ndarray
    observation: np.ndarray | None
    q_hat: np.ndarray | None
    phi_hat: np.ndarray | None
    pi_qz: int | None
    pi_lb: int | None
    pi_ub: int | None
    plan_duration_ms: float | None
    cumulative_reward: float
    terminal: bool
    seed: int

    def csv_cells(self) -> list[str]:
        obs = ["", ""] if self.observation is None else [_fmt(v) for v in self.observation]
        qs = [""] * 4 if self.q_hat is None else [_fmt(v) for v in self.q_hat]
        phis = [""] * 4 if self.phi_hat is None else [_fmt(v) for v in self.phi_hat]
        pis = [
            "" if v is None else str(v) for v in (self.pi_qz, self.pi_lb, self.pi_ub)
        ]
        return (
            [str(self.scenario_id), str(self.t), self.model_tag]
            + [_fmt(v) for v in self.true_state]
            + obs
            + qs
            + phis
            + pis
            + [_fmt(self.cumulative_reward), "1" if self.terminal else "0", str(self.seed)]
        )


def run_one_scenario(
    scenario_id: int,
    env: BeaconsEnv,
    planning_model: BeaconsPlanningModel,
    inference_obs,
    planner_cfg: PlannerConfig,
    seed: int,
    model_tag: str,
) -> list[ScenarioRecord]:
    """Plan, act, observe, and filter until the true state terminates."""
    return _run_one_scenario_with(
        scenario_id, env, planning_model, inference_obs, planner_cfg, seed, model_tag, plan
    )


def _write_records(path: Path, records: list[ScenarioRecord]) -> None:
    lines = [f"# {RECORDS_SCHEMA}", ",".join(RECORD_COLUMNS)]
    for rec in records:
        lines.append(",".join(rec.csv_cells()))
    path.write_text("\n".join(lines) + "\n", encoding="ascii")


def _write_timings(path: Path, records: list[ScenarioRecord]) -> None:
    lines = [f"# {TIMINGS_SCHEMA}", "scenario_id,t,model_tag,plan_duration_ms"]
    for rec in records:
        if rec.plan_duration_ms is not None:
            lines.append(
                f"{rec.scenario_id},{rec.t},{rec.model_tag},{_fmt(rec.plan_duration_ms)}"
            )
    path.write_text("\n".join(lines) + "\n", encoding="ascii")


def run_scenarios(config: RunConfig) -> dict:
    """Execute the configured scenarios; returns a summary dictionary."""
    out_root = Path(config.out_dir)
    out_root.mkdir(parents=True, exist_ok=True)
    modes = ["original", "simplified"] if config.mode == "paired" else [config.mode]
    needs_atlas = "simplified" in modes
    atlas = None
    if needs_atlas:
        if config.atlas_path is None:
            raise ConfigError("simplified/paired modes require an atlas (atlas_path)")
        if not Path(config.atlas_path).exists():
            raise ConfigError(f"atlas file not found: {config.atlas_path}")
        atlas = load_atlas(config.atlas_path)
    summary: dict = {"mode": config.mode, "seed": config.seed, "runs": {}}
    for tag in modes:
        out_dir = out_root / tag if config.mode == "paired" else out_root
        out_dir.mkdir(parents=True, exist_ok=True)
        summary["runs"][tag] = _run_mode(config, tag, atlas, out_dir)
    return summary


def _run_mode(config: RunConfig, tag: str, atlas: DeltaAtlas | None, out_dir: Path) -> dict:
    env = BeaconsEnv(config.env)
    counting_original = CountingObsModel(env.obs_model("original"))
    counting_simplified = CountingObsModel(env.obs_model("simplified"))
    if tag == "simplified":
        bound_cfg = BoundConfig(
            d_t=config.d_t, n_x=config.n_x, atlas=atlas, schedule=config.env.schedule()
        )
        planning_model = BeaconsPlanningModel(env, counting_simplified)
    else:
        bound_cfg = None
        planning_model = BeaconsPlanningModel(env, counting_original)
    planner_cfg = dc_replace(config.planner, bound_config=bound_cfg)
    plan_pdf_calls = {"original": 0, "simplified": 0}
    plan_sample_calls = {"original": 0, "simplified": 0}
    records: list[ScenarioRecord] = []
    for sid in range(config.n_scenarios):
        # inference always consumes the original model, so planner usage is
        # measured with snapshots around each planning call, not per scenario
        recs, deltas = _run_scenario_counted(
            sid, env, planning_model, counting_original, counting_simplified,
            planner_cfg, config.seed, tag,
        )
        records.extend(recs)
        plan_pdf_calls["original"] += deltas["original_pdf"]
        plan_pdf_calls["simplified"] += deltas["simplified_pdf"]
        plan_sample_calls["original"] += deltas["original_sample"]
        plan_sample_calls["simplified"] += deltas["simplified_sample"]
    _write_records(out_dir / "records.csv", records)
    _write_timings(out_dir / "timings.csv", records)
    if atlas is not None:
        save_atlas(atlas, out_dir / "atlas.txt")
    meta = {
        "model_tag": tag,
        "seed": config.seed,
        "n_scenarios": config.n_scenarios,
        "planning_pdf_calls": plan_pdf_calls,
        "planning_sample_calls": plan_sample_calls,
        "records": len(records),
    }
    (out_dir / "meta.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="ascii"
    )
    return meta


def _run_scenario_counted(
    sid, env, planning_model, counting_original, counting_simplified, planner_cfg, seed, tag
):
    """Run one scenario and measure obs-model usage inside planning calls."""
    deltas = {"original_pdf": 0, "original_sample": 0, "simplified_pdf": 0, "simplified_sample": 0}

    def counted_plan(belief, t, model, cfg, rng):
        o0 = counting_original.snapshot()
        s0 = counting_simplified.snapshot()
        result = plan(belief, t, model, cfg, rng)
        o1 = counting_original.snapshot()
        s1 = counting_simplified.snapshot()
        deltas["original_pdf"] += o1[0] - o0[0]
        deltas["original_sample"] += o1[1] - o0[1]
        deltas["simplified_pdf"] += s1[0] - s0[0]
        deltas["simplified_sample"] += s1[1] - s0[1]
        return result

    records = _run_one_scenario_with(
        sid, env, planning_model, counting_original, planner_cfg, seed, tag, counted_plan
    )
    return records, deltas


def _run_one_scenario_with(
    scenario_id, env, planning_model, inference_obs, planner_cfg, seed, model_tag, plan_fn
):
    """run_one_scenario with an injectable planning call (for counting)."""
    env_rng = _substream(seed, scenario_id, 0)
    filter_rng = _substream(seed, scenario_id, 1)
    c = planner_cfg.particle_count
    x = env.sample_prior(env_rng, 1)[0]
    belief = from_prior(env.sample_prior, c, filter_rng)
    cum_reward = env.reward(0, x)
    last_obs = None
    records: list[ScenarioRecord] = []
    for t in range(env.config.horizon):
        plan_rng = _substream(seed, scenario_id, 2, t)
        result = plan_fn(belief, t, planning_model, planner_cfg, plan_rng)
        records.append(
            ScenarioRecord(
                scenario_id=scenario_id,
                t=t,
                model_tag=model_tag,
                true_state=x,
                observation=last_obs,
                q_hat=result.q_hat,
                phi_hat=result.phi_hat if planner_cfg.bound_config is not None else None,
                pi_qz=result.pi_qz,
                pi_lb=result.pi_lb,
                pi_ub=result.pi_ub,
                plan_duration_ms=result.duration_ms,
                cumulative_reward=cum_reward,
                terminal=False,
                seed=seed,
            )
        )
        action = env.actions[result.pi_qz]
        x, reward, terminal = env.step(x, action, t, env_rng)
        cum_reward += reward
        if terminal:
            records.append(
                ScenarioRecord(
                    scenario_id=scenario_id,
                    t=t + 1,
                    model_tag=model_tag,
                    true_state=x,
                    observation=None,
                    q_hat=None,
                    phi_hat=None,
                    pi_qz=None,
                    pi_lb=None,
                    pi_ub=None,
                    plan_duration_ms=None,
                    cumulative_reward=cum_reward,
                    terminal=True,
                    seed=seed,
                )
            )
            break
        z = inference_obs.sample_obs(x, env_rng)
        last_obs = z
        propagated, _, _ = propagate(belief, action, env, filter_rng)
        if propagated.fully_terminal:
            logger.warning(
                "scenario %d t=%d: inference belief fully terminal; reseeding uniform",
                scenario_id,
                t,
            )
            propagated = ParticleBelief(
                propagated.states, np.full(c, 1.0 / c), 1.0, propagated.time_index
            )
        try:
            belief = sis_update(propagated, z, inference_obs)
        except WeightDegeneracyError:
            logger.warning(
                "scenario %d t=%d: weight degeneracy; keeping propagated belief",
                scenario_id,
                t,
            )
            belief = propagated
        if effective_sample_size(belief.weights) < c / 2.0:
            belief = resample(belief, filter_rng)
        belief = belief.replace(survival_mass=1.0)
    return records


# ---------------------------------------------------------------------------
# CSV reading and reports
# ---------------------------------------------------------------------------


def read_records(path: str | Path) -> list[dict]:
    """Parse records.csv back into dictionaries (empty cells become None)."""
    lines = Path(path).read_text(encoding="ascii").splitlines()
    if not lines or not lines[0].startswith("# " + RECORDS_SCHEMA.split()[0]):
        raise ValueError(f"unrecognized records file {path}")
    header = lines[1].split(",")
    out = []
    for line in lines[2:]:
        if not line:
            continue
        cells = line.split(",")
        row = dict(zip(header, cells))
        out.append(row)
    return out


def read_timings(path: str | Path) -> list[dict]:
    lines = Path(path).read_text(encoding="ascii").splitlines()
    header = lines[1].split(",")
    return [dict(zip(header, line.split(","))) for line in lines[2:] if line]


def inversion_report(records: list[dict]) -> list[dict]:
    """Per-timestep percentage of planned steps whose bound policies differ.

    Only rows with recorded bound values (simplified-mode planning rows)
    participate; a scenario is alive at t if it has such a row there.
    """
    by_t: dict[int, list[dict]] = {}
    for row in records:
        if row.get("pi_qz") and row.get("phi_hat_0"):
            by_t.setdefault(int(row["t"]), []).append(row)
    report = []
    for t in sorted(by_t):
        rows = by_t[t]
        n = len(rows)
        lb = sum(1 for r in rows if r["pi_lb"] != r["pi_qz"])
        ub = sum(1 for r in rows if r["pi_ub"] != r["pi_qz"])
        report.append(
            {
                "t": t,
                "n_alive": n,
                "pct_lb_differs": 100.0 * lb / n,
                "pct_ub_differs": 100.0 * ub / n,
            }
        )
    return report


def timing_report(timings: list[dict]) -> list[dict]:
    """Mean/std planning duration per (model_tag, t)."""
    by_key: dict[tuple[str, int], list[float]] = {}
    for row in timings:
        key = (row["model_tag"], int(row["t"]))
        by_key.setdefault(key, []).append(float(row["plan_duration_ms"]))
    report = []
    for (tag, t) in sorted(by_key):
        vals = np.array(by_key[(tag, t)])
        report.append(
            {
                "model_tag": tag,
                "t": t,
                "n": vals.size,
                "mean_ms": float(vals.mean()),
                "std_ms": float(vals.std()),
            }
        )
    return report
