"""Discrete graph navigation environment and episode runner.

Environments are undirected graphs of nodes with 3-D positions, a 36-view
panorama per node (12 azimuth headings x 3 elevation levels) and optional
object annotations. The episode runner wires retrieval and both augmentors
into a transparent dual-scale action scorer: fine scores compare the
instruction against the directional view facing each neighbor, coarse
scores compare it against aggregated topological-map features.
"""
from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    DuplicateNode,
    InvalidState,
    InvariantViolation,
    IoFailure,
    ParseError,
    UnknownNode,
)
from .feature_bank import BankManifest, FeatureBank, KnowledgeEntry, create_bank
from .goal_aware import InstructionRecord, gaa_forward, make_instruction
from .knowledge_aug import KnowledgeContext, ka_forward
from .params import PipelineParams
from .retrieval import gather_hit_features, index_image_knowledge, retrieve_view_knowledge

AZIMUTH_COUNT = 12
ELEVATIONS = (-math.pi / 6, 0.0, math.pi / 6)
VIEW_COUNT = AZIMUTH_COUNT * len(ELEVATIONS)
_AZ_STEP = 2.0 * math.pi / AZIMUTH_COUNT

STOP_ACTION = "<stop>"


@dataclass(frozen=True)
class View:
    feature: np.ndarray
    azimuth: float
    elevation: float


@dataclass(frozen=True)
class ObjectAnnotation:
    object_id: str
    feature: np.ndarray


@dataclass(frozen=True)
class NodeData:
    node_id: str
    position: np.ndarray  # (3,) meters
    panorama: tuple[View, ...]
    objects: tuple[ObjectAnnotation, ...] = ()

    @cached_property
    def view_matrix(self) -> np.ndarray:
        return np.vstack([v.feature for v in self.panorama])

    @cached_property
    def pooled(self) -> np.ndarray:
        return self.view_matrix.mean(axis=0)

    @cached_property
    def grid_lookup(self) -> dict[tuple[int, int], int]:
        """(azimuth index, elevation index) -> position in the panorama list."""
        lookup: dict[tuple[int, int], int] = {}
        for i, v in enumerate(self.panorama):
            az_idx = int(round(v.azimuth / _AZ_STEP)) % AZIMUTH_COUNT
            el_idx = int(np.argmin([abs(v.elevation - e) for e in ELEVATIONS]))
            if (az_idx, el_idx) in lookup:
                raise InvariantViolation(
                    f"node {self.node_id!r}: duplicate view direction "
                    f"(azimuth {v.azimuth:.4f}, elevation {v.elevation:.4f})"
                )
            lookup[(az_idx, el_idx)] = i
        return lookup


class EnvGraph:
    """Undirected navigation graph; edge lengths are Euclidean distances."""

    def __init__(self, nodes: Sequence[NodeData], edges: Sequence[tuple[str, str]]):
        self.nodes: dict[str, NodeData] = {}
        for n in nodes:
            if n.node_id in self.nodes:
                raise DuplicateNode(f"duplicate node id {n.node_id!r}")
            self.nodes[n.node_id] = n
        self._adj: dict[str, dict[str, float]] = {nid: {} for nid in self.nodes}
        for a, b in edges:
            if a not in self.nodes or b not in self.nodes:
                raise InvariantViolation(f"edge ({a!r}, {b!r}) references unknown node")
            if a == b:
                raise InvariantViolation(f"self-loop on node {a!r}")
            length = float(np.linalg.norm(self.nodes[a].position - self.nodes[b].position))
            self._adj[a][b] = length
            self._adj[b][a] = length
        self._validate()

    def _validate(self) -> None:
        dim = None
        for node in self.nodes.values():
            if len(node.panorama) != VIEW_COUNT:
                raise InvariantViolation(
                    f"node {node.node_id!r} has {len(node.panorama)} views, "
                    f"expected {VIEW_COUNT}"
                )
            if len(node.grid_lookup) != VIEW_COUNT:
                raise InvariantViolation(
                    f"node {node.node_id!r} does not cover the "
                    f"{AZIMUTH_COUNT}x{len(ELEVATIONS)} view grid"
                )
            width = node.panorama[0].feature.shape[0]
            if dim is None:
                dim = width
            if any(v.feature.shape != (dim,) for v in node.panorama):
                raise InvariantViolation(
                    f"node {node.node_id!r} mixes view feature widths"
                )
            if any(o.feature.shape != (dim,) for o in node.objects):
                raise InvariantViolation(
                    f"node {node.node_id!r} has object features of a different width"
                )

    @property
    def view_dim(self) -> int:
        first = next(iter(self.nodes.values()))
        return first.panorama[0].feature.shape[0]

    def neighbors(self, node_id: str) -> list[str]:
        if node_id not in self._adj:
            raise UnknownNode(node_id)
        return sorted(self._adj[node_id])

    def edge_length(self, a: str, b: str) -> float:
        try:
            return self._adj[a][b]
        except KeyError:
            raise InvariantViolation(f"no edge between {a!r} and {b!r}") from None

    def has_edge(self, a: str, b: str) -> bool:
        return b in self._adj.get(a, {})

    def edges(self) -> list[tuple[str, str]]:
        out = []
        for a in sorted(self._adj):
            for b in sorted(self._adj[a]):
                if a < b:
                    out.append((a, b))
        return out

    def to_dict(self) -> dict:
        return {
            "nodes": [
                {
                    "id": n.node_id,
                    "pos": [float(x) for x in n.position],
                    "views": [
                        {"az": v.azimuth, "el": v.elevation,
                         "feat": [float(x) for x in v.feature]}
                        for v in n.panorama
                    ],
                    "objects": [
                        {"id": o.object_id, "feat": [float(x) for x in o.feature]}
                        for o in n.objects
                    ],
                }
                for _, n in sorted(self.nodes.items())
            ],
            "edges": [[a, b] for a, b in self.edges()],
        }


def env_from_dict(obj: dict) -> EnvGraph:
    try:
        nodes = []
        for n in obj["nodes"]:
            views = tuple(
                View(feature=np.asarray(v["feat"], dtype=np.float64),
                     azimuth=float(v["az"]), elevation=float(v["el"]))
                for v in n["views"]
            )
            objects = tuple(
                ObjectAnnotation(object_id=o["id"],
                                 feature=np.asarray(o["feat"], dtype=np.float64))
                for o in n.get("objects", [])
            )
            nodes.append(NodeData(
                node_id=n["id"],
                position=np.asarray(n["pos"], dtype=np.float64),
                panorama=views,
                objects=objects,
            ))
        edges = [(e[0], e[1]) for e in obj["edges"]]
    except (KeyError, TypeError, IndexError, ValueError) as exc:
        raise ParseError(f"bad environment structure: {exc}") from exc
    return EnvGraph(nodes, edges)


def load_env(path: str | Path) -> EnvGraph:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    try:
        obj = json.loads(text)
    except ValueError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from exc
    return env_from_dict(obj)


def save_env(env: EnvGraph, path: str | Path) -> None:
    from .tensor_store import atomic_write

    data = json.dumps(env.to_dict(), separators=(",", ":")).encode("utf-8")
    atomic_write(Path(path), data)


def geodesic_distances(env: EnvGraph, source: str) -> dict[str, float]:
    """Single-source shortest-path lengths in meters; unreachable -> inf."""
    if source not in env.nodes:
        raise UnknownNode(source)
    dist = {nid: math.inf for nid in env.nodes}
    dist[source] = 0.0
    heap: list[tuple[float, str]] = [(0.0, source)]
    done: set[str] = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        for v, w in env._adj[u].items():
            nd = d + w
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def shortest_path(env: EnvGraph, source: str, target: str) -> list[str]:
    """Node sequence of a shortest path; ties resolved by ascending node id."""
    if source not in env.nodes:
        raise UnknownNode(source)
    if target not in env.nodes:
        raise UnknownNode(target)
    dist = {nid: math.inf for nid in env.nodes}
    prev: dict[str, str] = {}
    dist[source] = 0.0
    heap: list[tuple[float, str]] = [(0.0, source)]
    done: set[str] = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        if u == target:
            break
        for v, w in sorted(env._adj[u].items()):
            nd = d + w
            if nd < dist[v] or (nd == dist[v] and u < prev.get(v, "￿")):
                dist[v] = nd
                prev[v] = u
                heapq.heappush(heap, (nd, v))
    if math.isinf(dist[target]):
        raise InvariantViolation(f"{target!r} unreachable from {source!r}")
    path = [target]
    while path[-1] != source:
        path.append(prev[path[-1]])
    return path[::-1]


def facing_view_index(node: NodeData, to_position: np.ndarray) -> int:
    """Index of the directional view whose heading best matches the bearing
    from this node toward `to_position`."""
    delta = np.asarray(to_position, dtype=np.float64) - node.position
    bearing_az = math.atan2(delta[1], delta[0]) % (2.0 * math.pi)
    bearing_el = math.atan2(delta[2], math.hypot(delta[0], delta[1]))
    az_idx = int(round(bearing_az / _AZ_STEP)) % AZIMUTH_COUNT
    el_idx = int(np.argmin([abs(bearing_el - e) for e in ELEVATIONS]))
    return node.grid_lookup[(az_idx, el_idx)]


# ---------------------------------------------------------------------------
# agent state and scoring
# ---------------------------------------------------------------------------

@dataclass
class AgentState:
    current_node: str
    visited: list[str]
    topo_memory: dict[str, np.ndarray]
    steps_taken: int

    def check(self) -> None:
        if not self.visited or self.visited[-1] != self.current_node:
            raise InvalidState("current_node must be the last visited node")
        if self.steps_taken != len(self.visited) - 1:
            raise InvalidState("steps_taken must equal len(visited) - 1")


class _TopoAggregator:
    """Running per-node feature means: a visited node contributes its own
    pooled panorama; an unvisited node accumulates the facing views it was
    sighted through."""

    def __init__(self) -> None:
        self._visit_value: dict[str, np.ndarray] = {}
        self._sight_sum: dict[str, np.ndarray] = {}
        self._sight_count: dict[str, int] = {}

    def record_visit(self, node_id: str, pooled: np.ndarray) -> None:
        self._visit_value[node_id] = np.asarray(pooled, dtype=np.float64)

    def record_sight(self, node_id: str, feature: np.ndarray) -> None:
        if node_id in self._visit_value:
            return
        feature = np.asarray(feature, dtype=np.float64)
        if node_id in self._sight_sum:
            self._sight_sum[node_id] = self._sight_sum[node_id] + feature
            self._sight_count[node_id] += 1
        else:
            self._sight_sum[node_id] = feature.copy()
            self._sight_count[node_id] = 1

    def memory(self) -> dict[str, np.ndarray]:
        mem = {
            nid: self._sight_sum[nid] / self._sight_count[nid]
            for nid in self._sight_sum
            if nid not in self._visit_value
        }
        mem.update(self._visit_value)
        return mem


def score_actions(
    state: AgentState,
    env: EnvGraph,
    t_aug: np.ndarray,
    view_aug: Mapping[int, np.ndarray] | Sequence[np.ndarray],
    lam: float,
    stop_bias: float = 0.0,
) -> dict[str, float]:
    """Final action scores over neighbors, unvisited frontier nodes and stop.

    Fine scores compare pooled instruction features with the augmented view
    facing each neighbor; coarse scores use topological-map features. A
    non-adjacent frontier node has fine score -inf, so it can only win
    under pure coarse ranking (lam == 1).
    """
    state.check()
    if not 0.0 <= lam <= 1.0:
        raise InvalidState(f"lambda must be in [0, 1], got {lam}")
    if state.current_node not in env.nodes:
        raise InvalidState(f"unknown current node {state.current_node!r}")
    node = env.nodes[state.current_node]
    q = np.atleast_2d(np.asarray(t_aug, dtype=np.float64)).mean(axis=0)

    visited = set(state.visited)
    neighbors = env.neighbors(state.current_node)
    frontier = sorted(
        nid for nid in state.topo_memory
        if nid not in visited and nid not in neighbors and nid != state.current_node
    )

    def coarse(nid: str) -> float:
        if nid not in state.topo_memory:
            raise InvalidState(f"candidate {nid!r} missing from topological memory")
        m = state.topo_memory[nid]
        if m.shape != q.shape:
            raise DimensionMismatch(
                f"memory width {m.shape} != instruction width {q.shape}"
            )
        return float(q @ m)

    scores: dict[str, float] = {}
    for nid in neighbors:
        idx = facing_view_index(node, env.nodes[nid].position)
        v = np.asarray(view_aug[idx], dtype=np.float64)
        if v.shape != q.shape:
            raise DimensionMismatch(
                f"view width {v.shape} != instruction width {q.shape}"
            )
        fine = float(q @ v)
        scores[nid] = lam * coarse(nid) + (1.0 - lam) * fine
    for nid in frontier:
        scores[nid] = coarse(nid) if lam == 1.0 else -math.inf

    pooled = node.pooled
    if pooled.shape != q.shape:
        raise DimensionMismatch(
            f"panorama width {pooled.shape} != instruction width {q.shape}"
        )
    scores[STOP_ACTION] = float(q @ pooled) + stop_bias
    return scores


# ---------------------------------------------------------------------------
# episodes
# ---------------------------------------------------------------------------

KNOWLEDGE_MODES = ("on", "off", "text-only", "image-only")


@dataclass(frozen=True)
class KnowledgeBanks:
    text: FeatureBank | None = None
    image: FeatureBank | None = None


@dataclass(frozen=True)
class EpisodeConfig:
    start_node: str
    max_steps: int = 15
    lam: float = 0.5
    stop_bias: float = 0.0
    seed: int = 0  # reserved; the argmax policy is deterministic
    k: int = 5
    knowledge: str = "on"


@dataclass(frozen=True)
class Trajectory:
    instruction_id: str
    path: tuple[str, ...]
    predicted_object: str | None
    stop_reason: str

    def to_json_line(self) -> str:
        return json.dumps(
            {
                "instruction_id": self.instruction_id,
                "path": list(self.path),
                "predicted_object": self.predicted_object,
                "stop_reason": self.stop_reason,
            },
            separators=(",", ":"),
        )


def trajectory_from_json(line: str) -> Trajectory:
    obj = json.loads(line)
    return Trajectory(
        instruction_id=obj["instruction_id"],
        path=tuple(obj["path"]),
        predicted_object=obj.get("predicted_object"),
        stop_reason=obj["stop_reason"],
    )


def _augmented_instruction(instr: InstructionRecord, banks: KnowledgeBanks,
                           params: PipelineParams, mode: str) -> np.ndarray:
    if mode == "off":
        return np.asarray(instr.features, dtype=np.float64)
    fused, _, _ = gaa_forward(instr.features, instr.subgoal_matrix, params.gaa)
    if mode in ("on", "image-only"):
        if banks.image is None:
            raise InvalidState(f"knowledge mode {mode!r} requires an image bank")
        k_rows = index_image_knowledge(instr.id, instr.subgoal_bank_ids(), banks.image)
        fused, _ = ka_forward(KnowledgeContext(k_rows, fused), params.ka_instruction)
    return fused


def _augmented_views(node: NodeData, banks: KnowledgeBanks, params: PipelineParams,
                     mode: str, k: int) -> np.ndarray:
    views = node.view_matrix
    if mode not in ("on", "text-only"):
        return views
    if banks.text is None:
        raise InvalidState(f"knowledge mode {mode!r} requires a text bank")
    vk = retrieve_view_knowledge(list(views), banks.text, k=k, node_id=node.node_id)
    k_rows = gather_hit_features(vk.per_view, banks.text)
    fused, _ = ka_forward(KnowledgeContext(k_rows, views), params.ka_view)
    return fused


def run_episode(env: EnvGraph, instr: InstructionRecord, banks: KnowledgeBanks,
                params: PipelineParams, cfg: EpisodeConfig) -> Trajectory:
    """Run one deterministic episode; see module docstring for the wiring.

    The instruction-side augmentation is computed once per episode; the
    vision-side augmentation is recomputed at every node.
    """
    if cfg.knowledge not in KNOWLEDGE_MODES:
        raise InvalidState(f"unknown knowledge mode {cfg.knowledge!r}")
    if cfg.start_node not in env.nodes:
        raise UnknownNode(cfg.start_node)
    if cfg.max_steps < 0:
        raise InvalidState("max_steps must be >= 0")

    t_aug = _augmented_instruction(instr, banks, params, cfg.knowledge)

    topo = _TopoAggregator()
    path = [cfg.start_node]
    stop_reason = "max_steps"

    def observe(node_id: str) -> None:
        node = env.nodes[node_id]
        topo.record_visit(node_id, node.pooled)
        for nb in env.neighbors(node_id):
            idx = facing_view_index(node, env.nodes[nb].position)
            topo.record_sight(nb, node.panorama[idx].feature)

    observe(cfg.start_node)
    while True:
        steps = len(path) - 1
        if steps >= cfg.max_steps:
            stop_reason = "max_steps"
            break
        current = path[-1]
        node = env.nodes[current]
        view_aug = _augmented_views(node, banks, params, cfg.knowledge, cfg.k)
        state = AgentState(current_node=current, visited=list(path),
                           topo_memory=topo.memory(), steps_taken=steps)
        scores = score_actions(state, env, t_aug, view_aug, cfg.lam, cfg.stop_bias)

        best = max(scores.values())
        tied = [a for a, s in scores.items() if s == best]
        if STOP_ACTION in tied:
            stop_reason = "stopped"
            break
        target = min(tied)

        if env.has_edge(current, target):
            path.append(target)
            observe(target)
        else:
            # coarse-only jump to a frontier node: walk the geodesic route
            hops = shortest_path(env, current, target)[1:]
            for hop in hops:
                if len(path) - 1 >= cfg.max_steps:
                    break
                path.append(hop)
                observe(hop)

    final_node = env.nodes[path[-1]]
    predicted = None
    if final_node.objects:
        q = np.atleast_2d(t_aug).mean(axis=0)
        ranked = sorted(
            final_node.objects,
            key=lambda o: (-float(q @ o.feature), o.object_id),
        )
        predicted = ranked[0].object_id
    return Trajectory(
        instruction_id=instr.id,
        path=tuple(path),
        predicted_object=predicted,
        stop_reason=stop_reason,
    )


def random_walk_episode(env: EnvGraph, start_node: str, max_steps: int,
                        rng: np.random.Generator) -> Trajectory:
    """Uniform baseline: at each node pick uniformly among neighbors + stop."""
    path = [start_node]
    stop_reason = "max_steps"
    while len(path) - 1 < max_steps:
        options = env.neighbors(path[-1]) + [STOP_ACTION]
        choice = options[int(rng.integers(len(options)))]
        if choice == STOP_ACTION:
            stop_reason = "stopped"
            break
        path.append(choice)
    return Trajectory(instruction_id="random-walk", path=tuple(path),
                      predicted_object=None, stop_reason=stop_reason)


# ---------------------------------------------------------------------------
# planted environments
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PlantSpec:
    num_nodes: int
    branching: int = 3
    dim: int = 48
    alpha: float = 0.9  # signal strength in [0, 1]


@dataclass(frozen=True)
class PlantedEpisode:
    env: EnvGraph
    instruction: InstructionRecord
    start_node: str
    goal_node: str
    goal_object_id: str
    text_bank: FeatureBank
    image_bank: FeatureBank
    shortest_length: float
    signal: np.ndarray  # the goal-phrase embedding marking the shortest path

    @property
    def goal_position(self) -> np.ndarray:
        return self.env.nodes[self.goal_node].position


GOAL_PHRASE_ID = "goal-phrase"
GOAL_OBJECT_ID = "obj-target"


def _unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def plant_env(seed: int, spec: PlantSpec) -> PlantedEpisode:
    """Random connected environment where the view facing the next hop on
    every shortest path to the goal carries a goal-aligned feature.

    Deterministic per seed. Node spacing is ~8 m on a jittered grid so no
    two distinct nodes fall within the 3 m success radius of each other.
    """
    if spec.num_nodes < 2:
        raise InvalidState("planted environments need at least 2 nodes")
    if not 0.0 <= spec.alpha <= 1.0:
        raise InvalidState("alpha must be in [0, 1]")
    rng = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, 909])
    n = spec.num_nodes
    width = max(3, len(str(n - 1)))
    ids = [f"n{i:0{width}d}" for i in range(n)]

    # positions: grid cells + jitter, 8 m pitch
    side = math.ceil(n ** (1.0 / 3.0))
    cells = [(i, j, k) for i in range(side) for j in range(side) for k in range(side)]
    positions = {}
    for idx, nid in enumerate(ids):
        cell = np.array(cells[idx], dtype=np.float64)
        positions[nid] = cell * 8.0 + rng.uniform(-1.0, 1.0, 3)

    # random tree for connectivity, then extra edges up to the target degree
    edge_set: set[tuple[str, str]] = set()
    for i in range(1, n):
        parent = int(rng.integers(i))
        a, b = sorted((ids[i], ids[parent]))
        edge_set.add((a, b))
    target_edges = max(n - 1, round(n * spec.branching / 2))
    attempts = 0
    while len(edge_set) < target_edges and attempts < 50 * n:
        attempts += 1
        i, j = rng.integers(n), rng.integers(n)
        if i == j:
            continue
        a, b = sorted((ids[int(i)], ids[int(j)]))
        edge_set.add((a, b))

    goal = ids[int(rng.integers(n))]
    goal_pos = positions[goal]

    # signal vector and per-node next hop toward the goal
    g = _unit(rng, spec.dim)
    adj: dict[str, dict[str, float]] = {nid: {} for nid in ids}
    for a, b in edge_set:
        length = float(np.linalg.norm(positions[a] - positions[b]))
        adj[a][b] = length
        adj[b][a] = length
    dist_to_goal = _dijkstra_plain(adj, goal)
    next_hop: dict[str, str] = {}
    for nid in ids:
        if nid == goal or math.isinf(dist_to_goal[nid]):
            continue
        options = sorted(
            (adj[nid][nb] + dist_to_goal[nb], nb) for nb in adj[nid]
        )
        next_hop[nid] = options[0][1]

    start_candidates = [nid for nid in ids
                        if nid != goal and not math.isinf(dist_to_goal[nid])
                        and _hop_count(adj, nid, goal) >= 2]
    if not start_candidates:
        start_candidates = [nid for nid in ids if nid != goal]
    start = start_candidates[int(rng.integers(len(start_candidates)))]

    nodes = []
    for nid in ids:
        views = []
        for el in ELEVATIONS:
            for a_idx in range(AZIMUTH_COUNT):
                views.append(View(feature=_unit(rng, spec.dim),
                                  azimuth=a_idx * _AZ_STEP, elevation=el))
        if nid in next_hop:
            probe = NodeData(node_id=nid, position=positions[nid],
                             panorama=tuple(views))
            idx = facing_view_index(probe, positions[next_hop[nid]])
            noise = views[idx].feature
            marked = spec.alpha * g + (1.0 - spec.alpha) * noise
            marked = marked / np.linalg.norm(marked)
            views[idx] = View(feature=marked, azimuth=views[idx].azimuth,
                              elevation=views[idx].elevation)
        objects = [
            ObjectAnnotation(object_id=f"obj-{nid}-{j}", feature=_unit(rng, spec.dim))
            for j in range(2)
        ]
        if nid == goal:
            objects.append(ObjectAnnotation(object_id=GOAL_OBJECT_ID, feature=g.copy()))
        nodes.append(NodeData(node_id=nid, position=positions[nid],
                              panorama=tuple(views), objects=tuple(objects)))

    env = EnvGraph(nodes, sorted(edge_set))

    instruction = make_instruction(
        instr_id=f"planted-{seed}",
        text="head toward the goal marker and stop beside it",
        subgoal_phrases=["goal marker"],
        dim=spec.dim,
        bank_ids=[GOAL_PHRASE_ID],
    )

    image_entries = [KnowledgeEntry(id=GOAL_PHRASE_ID, feature=g.astype(np.float32))]
    for j in range(3):
        image_entries.append(
            KnowledgeEntry(id=f"img-noise-{j}", feature=_unit(rng, spec.dim).astype(np.float32))
        )
    image_bank = create_bank(image_entries, BankManifest(
        name=f"planted-image-{seed}", modality="image", dim=spec.dim,
        count=0, normalized=True, created_by="plant_env",
    ))
    text_entries = [
        KnowledgeEntry(id=f"text-{j:04d}", feature=_unit(rng, spec.dim).astype(np.float32))
        for j in range(40)
    ]
    text_bank = create_bank(text_entries, BankManifest(
        name=f"planted-text-{seed}", modality="text", dim=spec.dim,
        count=0, normalized=True, created_by="plant_env",
    ))

    return PlantedEpisode(
        env=env,
        instruction=instruction,
        start_node=start,
        goal_node=goal,
        goal_object_id=GOAL_OBJECT_ID,
        text_bank=text_bank,
        image_bank=image_bank,
        shortest_length=dist_to_goal[start],
        signal=g,
    )


def _dijkstra_plain(adj: dict[str, dict[str, float]], source: str) -> dict[str, float]:
    dist = {nid: math.inf for nid in adj}
    dist[source] = 0.0
    heap = [(0.0, source)]
    done: set[str] = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        for v, w in adj[u].items():
            nd = d + w
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def _hop_count(adj: dict[str, dict[str, float]], source: str, target: str) -> int:
    if source == target:
        return 0
    seen = {source}
    frontier = [source]
    hops = 0
    while frontier:
        hops += 1
        nxt = []
        for u in frontier:
            for v in adj[u]:
                if v == target:
                    return hops
                if v not in seen:
                    seen.add(v)
                    nxt.append(v)
        frontier = nxt
    return -1
