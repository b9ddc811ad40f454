"""Offline discrepancy atlas: quasi-random states, sampled TV estimates,
threshold filtering, KD-tree indexing, and text persistence.

Observation models consumed here are conditional-density views exposing
``sample_batch(x, rng, n) -> (n, d)`` and ``logpdf_batch(x, zs) -> (n,)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle given by opposite corners (inclusive)."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=float))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=float))
        if self.lo.shape != self.hi.shape or self.lo.ndim != 1:
            raise ValueError("corners must be vectors of equal dimension")
        if np.any(self.hi <= self.lo):
            raise ValueError("rectangle is degenerate")

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def area(self) -> float:
        return float(np.prod(self.hi - self.lo))

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        return np.all((pts >= self.lo) & (pts <= self.hi), axis=1)


@dataclass(frozen=True)
class ProposalQ0:
    """Uniform proposal over a rectangle; density is 1/area on the support."""

    rect: Rect

    @property
    def density(self) -> float:
        return 1.0 / self.rect.area


def plastic_constant(dim: int) -> float:
    """Real root of x**(dim+1) = x + 1 via fixed-point iteration."""
    x = 2.0
    for _ in range(128):
        x = (1.0 + x) ** (1.0 / (dim + 1))
    return x


def r2_sequence(n: int, rect: Rect) -> np.ndarray:
    """First ``n`` points of the plastic-constant low-discrepancy sequence.

    The unmapped sequence is frac(k * alpha) for k = 1..n with
    alpha_j = phi**-(j+1) and phi the generalized plastic constant; points
    are then mapped affinely into ``rect``. Deterministic, no RNG.
    """
    if n < 1:
        raise ValueError("need at least one point")
    phi = plastic_constant(rect.dim)
    alpha = 1.0 / phi ** np.arange(1, rect.dim + 1)
    k = np.arange(1, n + 1, dtype=float)
    unit = (k[:, None] * alpha[None, :]) % 1.0
    return rect.lo + unit * (rect.hi - rect.lo)


class UnconditionalObs:
    """Adapter: a fixed density used as a state-independent observation model."""

    def __init__(self, dist):
        self.dist = dist

    def sample_batch(self, x, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.dist.sample(rng, n)

    def logpdf_batch(self, x, zs: np.ndarray) -> np.ndarray:
        return self.dist.logpdf(zs)


def estimate_tv(x, p, q, n_z: int, rng: np.random.Generator) -> float:
    """Sampled unnormalized TV distance between p(.|x) and q(.|x), in [0, 2].

    Draws observations from the equal mixture of the two models (components
    alternate deterministically under the seed: even draws from p, odd from
    q) and averages 2*|p - q| / (p + q). The ratio is computed from the
    shifted log densities so it cannot overflow or underflow.
    """
    if n_z < 1:
        raise ValueError("need at least one observation sample")
    n_p = (n_z + 1) // 2
    zs = np.empty((n_z, np.atleast_1d(np.asarray(x)).size), dtype=float)
    zs[0::2] = p.sample_batch(x, rng, n_p)
    if n_z - n_p:
        zs[1::2] = q.sample_batch(x, rng, n_z - n_p)
    lp = p.logpdf_batch(x, zs)
    lq = q.logpdf_batch(x, zs)
    if np.any(np.isnan(lp) | np.isnan(lq) | np.isposinf(lp) | np.isposinf(lq)):
        raise ValueError("non-finite density encountered")
    if np.any(np.isneginf(lp) & np.isneginf(lq)):
        raise ValueError("both densities vanished at a drawn sample")
    shift = np.maximum(lp, lq)
    a = np.exp(lp - shift)
    b = np.exp(lq - shift)
    terms = 2.0 * np.abs(a - b) / (a + b)
    return float(terms.mean())


@dataclass
class DeltaAtlas:
    """Pre-filtered delta states with discrepancy estimates and a KD index."""

    delta_states: np.ndarray  # (m, d)
    delta_values: np.ndarray  # (m,)
    kept_indices: np.ndarray  # (m,) indices into the original sample sequence
    proposal: ProposalQ0
    n_sampled: int
    n_z: int
    threshold: float
    seed: int
    _tree: cKDTree | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.delta_states = np.asarray(self.delta_states, dtype=float)
        self.delta_values = np.asarray(self.delta_values, dtype=float)
        self.kept_indices = np.asarray(self.kept_indices, dtype=int)
        m = self.delta_states.shape[0]
        if self.delta_values.shape != (m,) or self.kept_indices.shape != (m,):
            raise ValueError("inconsistent atlas arrays")
        if m and not np.all(self.delta_values > self.threshold):
            raise ValueError("stored delta values must exceed the threshold")
        if m > self.n_sampled:
            raise ValueError("kept count cannot exceed sampled count")

    @property
    def n_kept(self) -> int:
        return self.delta_states.shape[0]

    @property
    def tree(self) -> cKDTree | None:
        if self._tree is None and self.n_kept:
            self._tree = cKDTree(self.delta_states)
        return self._tree

    def stats(self) -> dict:
        v = self.delta_values
        return {
            "n_sampled": self.n_sampled,
            "n_kept": self.n_kept,
            "mean": float(v.mean()) if v.size else 0.0,
            "min": float(v.min()) if v.size else 0.0,
            "max": float(v.max()) if v.size else 0.0,
        }


def radius_query(atlas: DeltaAtlas, center, radius: float) -> np.ndarray:
    """Indices of delta states within Euclidean ``radius`` of ``center``.

    Exactly the brute-force set {n : ||x_n - center|| <= radius}, returned
    in ascending index order.
    """
    if atlas.n_kept == 0 or radius < 0:
        return np.empty(0, dtype=int)
    if not np.isfinite(radius):
        return np.arange(atlas.n_kept)
    idx = atlas.tree.query_ball_point(np.asarray(center, dtype=float), radius)
    return np.sort(np.asarray(idx, dtype=int))


@dataclass(frozen=True)
class AtlasConfig:
    n_delta: int
    n_z: int
    threshold: float
    rect: Rect


def state_rng(master_seed: int, index: int) -> np.random.Generator:
    """Independent substream for one delta state; thread-count invariant."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((master_seed, index))))


def build_atlas(config: AtlasConfig, p, q, seed: int) -> DeltaAtlas:
    """Sample, estimate, filter, and index the discrepancy atlas.

    Delta states come from the low-discrepancy sequence over the proposal
    rectangle; each state's estimate uses an RNG substream derived from
    (seed, state index), so the result is independent of evaluation order.
    States whose estimate exceeds the threshold (strictly) are kept.
    """
    states = r2_sequence(config.n_delta, config.rect)
    values = np.empty(config.n_delta)
    for n in range(config.n_delta):
        values[n] = estimate_tv(states[n], p, q, config.n_z, state_rng(seed, n))
    keep = values > config.threshold
    if not keep.any():
        warnings.warn("no delta states survived filtering; atlas is empty")
    return DeltaAtlas(
        delta_states=states[keep],
        delta_values=values[keep],
        kept_indices=np.flatnonzero(keep),
        proposal=ProposalQ0(config.rect),
        n_sampled=config.n_delta,
        n_z=config.n_z,
        threshold=config.threshold,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# persistence (text, 17 significant digits, bit-exact round trip)
# ---------------------------------------------------------------------------

_FORMAT_HEADER = "deltaplan-atlas v1"


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def save_atlas(atlas: DeltaAtlas, path) -> None:
    st = atlas.stats()
    lines = [
        _FORMAT_HEADER,
        f"n_sampled {atlas.n_sampled}",
        f"n_kept {atlas.n_kept}",
        f"n_z {atlas.n_z}",
        f"threshold {_fmt(atlas.threshold)}",
        "rect " + " ".join(_fmt(v) for v in np.concatenate([atlas.proposal.rect.lo, atlas.proposal.rect.hi])),
        f"seed {atlas.seed}",
        f"stat_mean {_fmt(st['mean'])}",
        f"stat_min {_fmt(st['min'])}",
        f"stat_max {_fmt(st['max'])}",
        "records",
    ]
    for i in range(atlas.n_kept):
        x, y = atlas.delta_states[i]
        lines.append(
            f"{atlas.kept_indices[i]}, {_fmt(x)}, {_fmt(y)}, {_fmt(atlas.delta_values[i])}"
        )
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def load_atlas(path) -> DeltaAtlas:
    with open(path, encoding="ascii") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if lines[0] != _FORMAT_HEADER:
        raise ValueError(f"unrecognized atlas header {lines[0]!r}")
    meta = {}
    idx = 1
    while lines[idx] != "records":
        key, *vals = lines[idx].split()
        meta[key] = vals
        idx += 1
    rect_vals = [float(v) for v in meta["rect"]]
    d = len(rect_vals) // 2
    rect = Rect(np.array(rect_vals[:d]), np.array(rect_vals[d:]))
    records = [ln.split(",") for ln in lines[idx + 1 :]]
    kept = np.array([int(r[0]) for r in records], dtype=int)
    states = np.array([[float(r[1]), float(r[2])] for r in records], dtype=float)
    values = np.array([float(r[3]) for r in records], dtype=float)
    if states.size == 0:
        states = np.empty((0, d))
        values = np.empty(0)
        kept = np.empty(0, dtype=int)
    return DeltaAtlas(
        delta_states=states,
        delta_values=values,
        kept_indices=kept,
        proposal=ProposalQ0(rect),
        n_sampled=int(meta["n_sampled"][0]),
        n_z=int(meta["n_z"][0]),
        threshold=float(meta["threshold"][0]),
        seed=int(meta["seed"][0]),
    )
