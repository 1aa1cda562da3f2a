"""Trajectory evaluation: NE, SR, OSR, SPL, RGS, RGSPL, plus the feature
dispersion statistics used to study how augmentation reshapes embeddings.

Definitions
-----------
NE    mean Euclidean distance (m) from the final node to the goal.
SR    fraction of episodes stopping within `radius` of the goal.
OSR   fraction whose closest point along the path is within `radius`.
SPL   success weighted by shortest/actual path length: s * l / max(p, l),
      where p sums the geodesic lengths of traversed edges.
RGS   success AND the predicted object equals the goal object.
RGSPL RGS with the same path-length weighting as SPL.

Sums use math.fsum so reduction order cannot perturb results.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.spatial.distance import pdist

from .errors import (
    DimensionMismatch,
    InternalConsistency,
    InvalidPath,
    MissingGoal,
    TooFewVectors,
)
from .nav_sim import EnvGraph, Trajectory

SUCCESS_RADIUS = 3.0  # meters


@dataclass(frozen=True)
class EpisodeGoal:
    instruction_id: str
    goal_position: np.ndarray  # (3,) meters
    goal_object: str | None
    shortest_length: float  # geodesic start -> goal, meters


@dataclass(frozen=True)
class EpisodeMetrics:
    instruction_id: str
    ne: float
    success: bool
    oracle_success: bool
    spl: float
    rgs: bool
    rgspl: float
    path_length: float

    def to_json_obj(self) -> dict:
        return {
            "instruction_id": self.instruction_id,
            "ne": self.ne,
            "success": self.success,
            "oracle_success": self.oracle_success,
            "spl": self.spl,
            "rgs": self.rgs,
            "rgspl": self.rgspl,
            "path_length": self.path_length,
        }


@dataclass(frozen=True)
class DispersionStats:
    variance: float
    avg_pairwise_dist: float


@dataclass(frozen=True)
class DispersionComparison:
    """Before/after spread statistics with percent changes, the shape used
    to study how augmentation reshapes a feature space."""

    before: DispersionStats
    after: DispersionStats

    @property
    def variance_change_pct(self) -> float:
        return percent_change(self.before.variance, self.after.variance)

    @property
    def avg_dist_change_pct(self) -> float:
        return percent_change(self.before.avg_pairwise_dist,
                              self.after.avg_pairwise_dist)

    def to_json_obj(self) -> dict:
        return {
            "before": {"variance": self.before.variance,
                       "avg_pairwise_dist": self.before.avg_pairwise_dist},
            "after": {"variance": self.after.variance,
                      "avg_pairwise_dist": self.after.avg_pairwise_dist},
            "variance_change_pct": self.variance_change_pct,
            "avg_dist_change_pct": self.avg_dist_change_pct,
        }


@dataclass(frozen=True)
class MetricsReport:
    ne: float
    sr: float
    osr: float
    spl: float
    rgs: float
    rgspl: float
    per_episode: tuple[EpisodeMetrics, ...]
    dispersion: DispersionComparison | None = None

    def to_json_obj(self) -> dict:
        obj = {
            "ne": self.ne,
            "sr": self.sr,
            "osr": self.osr,
            "spl": self.spl,
            "rgs": self.rgs,
            "rgspl": self.rgspl,
            "episodes": [e.to_json_obj() for e in self.per_episode],
        }
        if self.dispersion is not None:
            obj["dispersion"] = self.dispersion.to_json_obj()
        return obj

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj(), indent=2)

    def to_csv(self) -> str:
        # column order follows the usual benchmark tables
        header = "NE,OSR,SR,SPL,RGS,RGSPL"
        row = f"{self.ne},{self.osr},{self.sr},{self.spl},{self.rgs},{self.rgspl}"
        return header + "\n" + row + "\n"


def evaluate(
    trajectories: Sequence[Trajectory],
    env: EnvGraph,
    goals: Mapping[str, EpisodeGoal],
    radius: float = SUCCESS_RADIUS,
    dispersion_stats: DispersionComparison | None = None,
) -> MetricsReport:
    """Aggregate the full metric suite over a trajectory set."""
    if not trajectories:
        raise InvalidPath("no trajectories to evaluate")
    episodes: list[EpisodeMetrics] = []
    for traj in trajectories:
        goal = goals.get(traj.instruction_id)
        if goal is None:
            raise MissingGoal(f"no goal for instruction {traj.instruction_id!r}")
        episodes.append(_evaluate_one(traj, env, goal, radius))

    n = len(episodes)
    sr = math.fsum(1.0 for e in episodes if e.success) / n
    osr = math.fsum(1.0 for e in episodes if e.oracle_success) / n
    spl = math.fsum(e.spl for e in episodes) / n
    rgs = math.fsum(1.0 for e in episodes if e.rgs) / n
    rgspl = math.fsum(e.rgspl for e in episodes) / n
    ne = math.fsum(e.ne for e in episodes) / n

    eps = 1e-12
    if not (spl <= sr + eps and sr <= osr + eps and rgspl <= rgs + eps and rgs <= sr + eps):
        raise InternalConsistency(
            f"metric ordering violated: SPL={spl} SR={sr} OSR={osr} "
            f"RGS={rgs} RGSPL={rgspl}"
        )
    return MetricsReport(ne=ne, sr=sr, osr=osr, spl=spl, rgs=rgs, rgspl=rgspl,
                         per_episode=tuple(episodes), dispersion=dispersion_stats)


def _evaluate_one(traj: Trajectory, env: EnvGraph, goal: EpisodeGoal,
                  radius: float) -> EpisodeMetrics:
    if not traj.path:
        raise InvalidPath(f"trajectory {traj.instruction_id!r} has an empty path")
    for nid in traj.path:
        if nid not in env.nodes:
            raise InvalidPath(f"trajectory {traj.instruction_id!r} visits unknown "
                              f"node {nid!r}")
    gp = np.asarray(goal.goal_position, dtype=np.float64)
    dists = [float(np.linalg.norm(env.nodes[nid].position - gp)) for nid in traj.path]

    p = 0.0
    for a, b in zip(traj.path, traj.path[1:]):
        if a == b:
            continue
        if not env.has_edge(a, b):
            raise InvalidPath(
                f"trajectory {traj.instruction_id!r} jumps {a!r} -> {b!r} "
                f"without an edge"
            )
        p += env.edge_length(a, b)

    ne = dists[-1]
    success = ne <= radius
    oracle = min(dists) <= radius
    l = goal.shortest_length
    denom = max(p, l)
    ratio = (l / denom) if denom > 0 else 1.0
    spl = ratio if success else 0.0
    rgs = bool(success and goal.goal_object is not None
               and traj.predicted_object == goal.goal_object)
    rgspl = ratio if rgs else 0.0
    return EpisodeMetrics(
        instruction_id=traj.instruction_id,
        ne=ne,
        success=success,
        oracle_success=oracle,
        spl=spl,
        rgs=rgs,
        rgspl=rgspl,
        path_length=p,
    )


def dispersion(features: Sequence[np.ndarray]) -> DispersionStats:
    """Spread statistics of a feature set.

    avg_pairwise_dist is the mean Euclidean distance over all unordered
    pairs. variance is the mean squared deviation from the centroid
    divided by the width, i.e. the average per-dimension variance, so the
    number is comparable across embedding widths.
    """
    if len(features) < 2:
        raise TooFewVectors(f"need at least 2 vectors, got {len(features)}")
    rows = [np.asarray(f, dtype=np.float64).reshape(-1) for f in features]
    dim = rows[0].shape[0]
    if any(r.shape[0] != dim for r in rows):
        raise DimensionMismatch("dispersion inputs must share one width")
    x = np.vstack(rows)
    avg = float(pdist(x).mean())
    centroid = x.mean(axis=0)
    var = float(((x - centroid) ** 2).sum(axis=1).mean() / dim)
    return DispersionStats(variance=var, avg_pairwise_dist=avg)


def percent_change(before: float, after: float) -> float:
    """100 * (after - before) / before."""
    return 100.0 * (after - before) / before


def compare_dispersion(before: Sequence[np.ndarray],
                       after: Sequence[np.ndarray]) -> DispersionComparison:
    """Dispersion of two feature sets plus the percent changes between them."""
    return DispersionComparison(before=dispersion(before), after=dispersion(after))
