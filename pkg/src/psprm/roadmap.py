"""Perception-score-guided PRM: build, weight, query, and the baseline planners.

Edges carry the raw normalized motion cost c_m = distance / radius and the
edge perception score c_p (average of endpoint and intermediate scores), so
any alpha can be re-applied in O(|E|) without rebuilding. The combined weight
is 1 - alpha * c_p + (1 - alpha) * c_m, always inside [1 - alpha, 2 - alpha].
"""

from __future__ import annotations

import heapq
import json
import struct
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .constraint import ConstraintSpec, constrained_interpolate, constraint_value, sample_on_manifold
from .robot import (RobotModel, aim_at, batch_fk, config_distance, distances_to,
                    interpolate, neighbor_pairs, wrap_angle)
from .world import Environment, GoalRegion, PlanningProblem, config_in_collision, edge_in_collision

ROADMAP_MAGIC = b"PSRG"
ROADMAP_VERSION = 1


class RoadmapBuildError(RuntimeError):
    """Sampling produced no valid roadmap nodes within the attempt budget."""


@dataclass(frozen=True)
class PlannerParams:
    num_nodes: int = 3000
    connection_radius: float = 2.0
    intermediates: int = 5
    alpha: float = 0.75
    edge_check_resolution: float = 0.05
    seed: int = 0
    sample_attempts: int = 100

    def __post_init__(self):
        if self.num_nodes < 2:
            raise ValueError("num_nodes must be >= 2")
        if self.connection_radius <= 0:
            raise ValueError("connection_radius must be positive")
        if self.intermediates < 0:
            raise ValueError("intermediates must be >= 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")


@dataclass
class RoadmapNode:
    config: np.ndarray
    pose: object
    score: float


@dataclass
class RoadmapEdge:
    u: int
    v: int
    c_m: float
    c_p: float
    weight: float
    intermediates: np.ndarray | None = None
    intermediate_scores: np.ndarray | None = None


def edge_perception_score(score_u: float, score_v: float, intermediate_scores) -> float:
    """Average of the endpoint scores and the intermediate scores."""
    vals = [score_u, score_v] + [float(s) for s in intermediate_scores]
    return float(sum(vals) / len(vals))


def edge_weight(c_p: float, c_m: float, alpha: float) -> float:
    """Combined edge weight 1 - alpha * c_p + (1 - alpha) * c_m."""
    if not 0.0 <= c_p <= 1.0:
        raise ValueError(f"c_p out of [0, 1]: {c_p}")
    if not 0.0 <= c_m <= 1.0:
        raise ValueError(f"c_m out of [0, 1]: {c_m}")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha out of [0, 1]: {alpha}")
    return 1.0 - alpha * c_p + (1.0 - alpha) * c_m


@dataclass
class Roadmap:
    nodes: list[RoadmapNode | None]
    edges: dict[tuple[int, int], RoadmapEdge]
    adjacency: dict[int, set[int]]
    params: PlannerParams
    constraint_kind: str | None
    alpha: float
    env: Environment
    env_hash: str
    scorer: object
    projected: bool = True

    def live_ids(self) -> list[int]:
        return [i for i, n in enumerate(self.nodes) if n is not None]

    def node(self, i: int) -> RoadmapNode:
        n = self.nodes[i]
        if n is None:
            raise KeyError(f"node {i} was pruned")
        return n

    def edge(self, u: int, v: int) -> RoadmapEdge:
        return self.edges[(u, v) if u < v else (v, u)]

    def has_edge(self, u: int, v: int) -> bool:
        return ((u, v) if u < v else (v, u)) in self.edges

    def add_node(self, node: RoadmapNode) -> int:
        self.nodes.append(node)
        nid = len(self.nodes) - 1
        self.adjacency[nid] = set()
        return nid

    def add_edge(self, edge: RoadmapEdge) -> None:
        key = (edge.u, edge.v) if edge.u < edge.v else (edge.v, edge.u)
        self.edges[key] = edge
        self.adjacency.setdefault(edge.u, set()).add(edge.v)
        self.adjacency.setdefault(edge.v, set()).add(edge.u)

    def drop_edge(self, u: int, v: int) -> None:
        key = (u, v) if u < v else (v, u)
        if key in self.edges:
            del self.edges[key]
            self.adjacency[u].discard(v)
            self.adjacency[v].discard(u)

    def prune_node(self, i: int) -> None:
        for nbr in sorted(self.adjacency.get(i, ())):
            key = (i, nbr) if i < nbr else (nbr, i)
            self.edges.pop(key, None)
            self.adjacency[nbr].discard(i)
        self.adjacency[i] = set()
        self.nodes[i] = None

    def num_edges(self) -> int:
        return len(self.edges)


class NullScorer:
    """Scorer for perception-blind baselines: every configuration scores 0."""

    name = "null"

    def score_config(self, env, model, q, pose=None) -> float:
        return 0.0

    def score_configs(self, env, model, qs, poses=None) -> np.ndarray:
        return np.zeros(len(qs))


def _edge_intermediates(spec: ConstraintSpec | None, model: RobotModel, env: Environment,
                        q1: np.ndarray, q2: np.ndarray, n: int,
                        projected: bool) -> list[np.ndarray] | None:
    """Intermediate configurations of a candidate edge, or None to reject it."""
    if spec is None:
        return [interpolate(model, q1, q2, i / (n + 1)) for i in range(1, n + 1)]
    if projected:
        return constrained_interpolate(spec, model, env, q1, q2, n)
    out = []
    for i in range(1, n + 1):
        q = interpolate(model, q1, q2, i / (n + 1))
        if constraint_value(spec, model, env, q) != 0.0 or config_in_collision(env, model, q):
            return None
        out.append(q)
    return out


def build(env: Environment, model: RobotModel, spec: ConstraintSpec,
          params: PlannerParams, scorer, projected: bool = True) -> Roadmap:
    """Construct the scored manifold roadmap.

    Nodes are sampled on the visibility manifold (per-node seeded), scored in
    one batch, and wired to all neighbors within the connection radius whose
    intermediates validate and whose straight edge is collision-free.
    Deterministic for a given seed.
    """
    configs = []
    for i in range(params.num_nodes):
        q = sample_on_manifold(spec, model, env, (params.seed, 0, i),
                               max_attempts=params.sample_attempts, project=projected)
        if q is not None:
            configs.append(q)
    if not configs:
        raise RoadmapBuildError(
            f"no valid nodes after {params.num_nodes} x {params.sample_attempts} attempts"
        )
    poses = batch_fk(model, configs)
    node_scores = scorer.score_configs(env, model, configs, poses)

    roadmap = Roadmap(
        nodes=[RoadmapNode(q, p, float(s)) for q, p, s in zip(configs, poses, node_scores)],
        edges={},
        adjacency={i: set() for i in range(len(configs))},
        params=params,
        constraint_kind=spec.kind if spec is not None else None,
        alpha=params.alpha,
        env=env,
        env_hash=env.content_hash(),
        scorer=scorer,
        projected=projected,
    )
    stacked = np.stack(configs)
    us, vs, ds = neighbor_pairs(model, stacked, params.connection_radius)
    _wire_edges(roadmap, model, spec, list(zip(us.tolist(), vs.tolist(), ds.tolist())))
    return roadmap


def _wire_edges(roadmap: Roadmap, model: RobotModel, spec: ConstraintSpec | None,
                candidates) -> int:
    """Validate candidate (u, v, d) pairs and add scored edges in one batch."""
    env = roadmap.env
    params = roadmap.params
    survivors = []
    all_inter: list[np.ndarray] = []
    for u, v, d in candidates:
        if d <= 0.0:
            continue
        qu, qv = roadmap.node(u).config, roadmap.node(v).config
        inter = _edge_intermediates(spec, model, env, qu, qv,
                                    params.intermediates, roadmap.projected)
        if inter is None:
            continue
        if edge_in_collision(env, model, qu, qv, params.edge_check_resolution):
            continue
        survivors.append((u, v, d, len(all_inter), len(inter)))
        all_inter.extend(inter)
    inter_scores = roadmap.scorer.score_configs(env, model, all_inter) if all_inter else np.zeros(0)
    for u, v, d, lo, count in survivors:
        scores = inter_scores[lo:lo + count]
        c_m = float(d) / params.connection_radius
        c_p = edge_perception_score(roadmap.node(u).score, roadmap.node(v).score, scores)
        roadmap.add_edge(RoadmapEdge(
            u, v, c_m, c_p, edge_weight(c_p, c_m, roadmap.alpha),
            intermediates=np.stack(all_inter[lo:lo + count]) if count else np.empty((0, model.k)),
            intermediate_scores=np.array(scores),
        ))
    return len(survivors)


def reweighted(roadmap: Roadmap, alpha: float) -> Roadmap:
    """Copy of the roadmap with edge weights recomputed for a new alpha."""
    out = Roadmap(
        nodes=[None if n is None else RoadmapNode(np.array(n.config), n.pose, n.score)
               for n in roadmap.nodes],
        edges={},
        adjacency={i: set() for i in range(len(roadmap.nodes))},
        params=replace(roadmap.params, alpha=alpha),
        constraint_kind=roadmap.constraint_kind,
        alpha=alpha,
        env=roadmap.env,
        env_hash=roadmap.env_hash,
        scorer=roadmap.scorer,
        projected=roadmap.projected,
    )
    for (u, v), e in roadmap.edges.items():
        out.add_edge(RoadmapEdge(u, v, e.c_m, e.c_p, edge_weight(e.c_p, e.c_m, alpha),
                                 e.intermediates, e.intermediate_scores))
    return out


@dataclass
class PlanResult:
    path: list[np.ndarray]
    total_weight: float
    motion_length: float
    mean_edge_cp: float
    planning_time_s: float
    expanded_nodes: int
    node_ids: list[int] = field(default_factory=list)
    edge_terms: list[tuple[float, float]] = field(default_factory=list)


@dataclass
class _QueryGraph:
    """Roadmap adjacency augmented with virtual start/goal connector edges."""

    extra: dict[int, list[tuple[int, float, float, float]]]
    configs: dict[int, np.ndarray]
    goal_ids: set[int]
    goal_targets: list[np.ndarray | GoalRegion]
    start_id: int = -1

    def neighbors(self, roadmap: Roadmap, nid: int):
        if nid >= 0:
            for nbr in sorted(roadmap.adjacency.get(nid, ())):
                e = roadmap.edge(nid, nbr)
                yield nbr, e.weight, e.c_m, e.c_p
        for nbr, w, c_m, c_p in self.extra.get(nid, ()):
            yield nbr, w, c_m, c_p


def _region_distance(model: RobotModel, q: np.ndarray, region: GoalRegion) -> float:
    """Weighted metric distance from q to the region box (wrap-aware)."""
    total = 0.0
    for j, joint in enumerate(model.joints):
        lo, hi = region.lo[j], region.hi[j]
        if lo <= q[j] <= hi:
            continue
        d = min(abs(q[j] - lo), abs(q[j] - hi))
        if joint.wraps:
            d = min(abs(wrap_angle(q[j] - lo)), abs(wrap_angle(q[j] - hi)))
        total += joint.metric_weight * d * d
    return float(np.sqrt(total))


def _goal_distance(model: RobotModel, q: np.ndarray, goal) -> float:
    if isinstance(goal, GoalRegion):
        return _region_distance(model, q, goal)
    return config_distance(model, q, goal)


def _connector_candidates(roadmap: Roadmap, model: RobotModel, q: np.ndarray):
    live = roadmap.live_ids()
    if not live:
        return []
    configs = np.stack([roadmap.node(i).config for i in live])
    dists = distances_to(model, configs, q)
    radius = roadmap.params.connection_radius
    return [(live[i], float(dists[i])) for i in np.flatnonzero(dists <= radius)]


def _score_many(roadmap: Roadmap, model: RobotModel, configs: list[np.ndarray]) -> np.ndarray:
    if not configs:
        return np.zeros(0)
    return roadmap.scorer.score_configs(roadmap.env, model, configs)


def _build_connectors(roadmap: Roadmap, model: RobotModel, q_from: np.ndarray,
                      from_id: int, into: dict, directed_out: bool) -> None:
    """Add scored connector edges between a virtual config and in-radius nodes."""
    env = roadmap.env
    params = roadmap.params
    n_inter = params.intermediates
    pending = []
    all_configs: list[np.ndarray] = [q_from]
    for nid, d in _connector_candidates(roadmap, model, q_from):
        if d <= 0.0:
            # coincident with a roadmap node: free connector
            pending.append((nid, 0.0, len(all_configs), 0))
            continue
        qn = roadmap.node(nid).config
        if edge_in_collision(env, model, q_from, qn, params.edge_check_resolution):
            continue
        inter = [interpolate(model, q_from, qn, i / (n_inter + 1)) for i in range(1, n_inter + 1)]
        pending.append((nid, d, len(all_configs), len(inter)))
        all_configs.extend(inter)
    scores = _score_many(roadmap, model, all_configs)
    s_from = float(scores[0]) if len(scores) else 0.0
    for nid, d, lo, count in pending:
        c_m = d / params.connection_radius
        c_p = edge_perception_score(s_from, roadmap.node(nid).score, scores[lo:lo + count])
        w = edge_weight(c_p, c_m, roadmap.alpha)
        if directed_out:
            into.setdefault(from_id, []).append((nid, w, c_m, c_p))
        else:
            into.setdefault(nid, []).append((from_id, w, c_m, c_p))


def build_query_graph(roadmap: Roadmap, env: Environment, model: RobotModel,
                      spec: ConstraintSpec | None, problem: PlanningProblem,
                      goal_sample_attempts: int = 50) -> _QueryGraph:
    """Connect start and goals to the roadmap with scored connector edges."""
    extra: dict[int, list] = {}
    configs: dict[int, np.ndarray] = {-1: problem.q_start}
    goal_ids: set[int] = set()
    goal_targets: list = []

    _build_connectors(roadmap, model, problem.q_start, -1, extra, directed_out=True)

    next_virtual = -2
    for g_index, goal in enumerate(problem.goals):
        goal_targets.append(goal)
        if isinstance(goal, GoalRegion):
            in_region = [i for i in roadmap.live_ids()
                         if goal.contains(roadmap.node(i).config)]
            if in_region:
                goal_ids.update(in_region)
                continue
            sampled = None
            if spec is not None:
                sampled = sample_on_manifold(
                    spec, model, env, (roadmap.params.seed, 1, g_index),
                    max_attempts=goal_sample_attempts, project=roadmap.projected,
                    box=(goal.lo, goal.hi))
                if sampled is not None and not goal.contains(sampled):
                    sampled = None
            else:
                for attempt in range(goal_sample_attempts):
                    rng = np.random.default_rng((roadmap.params.seed, 1, g_index, attempt))
                    q = rng.uniform(np.maximum(model.limits_lo, goal.lo),
                                    np.minimum(model.limits_hi, goal.hi))
                    if not config_in_collision(env, model, q):
                        sampled = q
                        break
            if sampled is None:
                continue
            goal_config = sampled
        else:
            goal_config = goal
        gid = next_virtual
        next_virtual -= 1
        configs[gid] = goal_config
        goal_ids.add(gid)
        _build_connectors(roadmap, model, goal_config, gid, extra, directed_out=False)
        # direct start->goal link when within radius
        d = config_distance(model, problem.q_start, goal_config)
        if 0.0 < d <= roadmap.params.connection_radius and not edge_in_collision(
                env, model, problem.q_start, goal_config, roadmap.params.edge_check_resolution):
            inter = [interpolate(model, problem.q_start, goal_config, i / (roadmap.params.intermediates + 1))
                     for i in range(1, roadmap.params.intermediates + 1)]
            scores = _score_many(roadmap, model, [problem.q_start, goal_config] + inter)
            c_m = d / roadmap.params.connection_radius
            c_p = edge_perception_score(float(scores[0]), float(scores[1]), scores[2:])
            extra.setdefault(-1, []).append((gid, edge_weight(c_p, c_m, roadmap.alpha), c_m, c_p))
    return _QueryGraph(extra, configs, goal_ids, goal_targets)


def query(roadmap: Roadmap, env: Environment, model: RobotModel,
          spec: ConstraintSpec | None, problem: PlanningProblem) -> PlanResult | None:
    """A* over the weighted roadmap from start to the cheapest goal.

    The heuristic (1 - alpha) * metric_distance / radius underestimates every
    remaining edge cost, so the returned path is optimal for the roadmap's
    alpha; ties break toward lower node index. Returns None when no goal is
    reachable.
    """
    t0 = time.perf_counter()
    for goal in problem.goals:
        if isinstance(goal, GoalRegion):
            if goal.contains(problem.q_start):
                return PlanResult([np.array(problem.q_start)], 0.0, 0.0, 0.0,
                                  time.perf_counter() - t0, 0, node_ids=[-1])
        elif config_distance(model, problem.q_start, goal) < 1e-12:
            return PlanResult([np.array(problem.q_start)], 0.0, 0.0, 0.0,
                              time.perf_counter() - t0, 0, node_ids=[-1])

    graph = build_query_graph(roadmap, env, model, spec, problem)
    if not graph.goal_ids:
        return None

    alpha = roadmap.alpha
    radius = roadmap.params.connection_radius

    def node_config(nid: int) -> np.ndarray:
        return graph.configs[nid] if nid < 0 else roadmap.node(nid).config

    def heuristic(nid: int) -> float:
        q = node_config(nid)
        return (1.0 - alpha) / radius * min(
            _goal_distance(model, q, g) for g in graph.goal_targets
        )

    g_cost: dict[int, float] = {-1: 0.0}
    parent: dict[int, tuple[int, float, float]] = {}
    heap = [(heuristic(-1), -1)]
    closed: set[int] = set()
    expanded = 0
    goal_reached = None
    while heap:
        f, nid = heapq.heappop(heap)
        if nid in closed:
            continue
        closed.add(nid)
        expanded += 1
        if nid in graph.goal_ids:
            goal_reached = nid
            break
        for nbr, w, c_m, c_p in graph.neighbors(roadmap, nid):
            if nbr in closed:
                continue
            cand = g_cost[nid] + w
            if cand < g_cost.get(nbr, np.inf):
                g_cost[nbr] = cand
                parent[nbr] = (nid, c_m, c_p)
                heapq.heappush(heap, (cand + heuristic(nbr), nbr))
    if goal_reached is None:
        return None

    ids = [goal_reached]
    terms = []
    while ids[-1] != -1:
        prev, c_m, c_p = parent[ids[-1]]
        terms.append((c_m, c_p))
        ids.append(prev)
    ids.reverse()
    terms.reverse()
    path = [np.array(node_config(i)) for i in ids]
    motion = sum(config_distance(model, a, b) for a, b in zip(path, path[1:]))
    mean_cp = float(np.mean([t[1] for t in terms])) if terms else 0.0
    return PlanResult(
        path=path,
        total_weight=float(g_cost[goal_reached]),
        motion_length=float(motion),
        mean_edge_cp=mean_cp,
        planning_time_s=time.perf_counter() - t0,
        expanded_nodes=expanded,
        node_ids=ids,
        edge_terms=terms,
    )


def _sample_unconstrained(env: Environment, model: RobotModel, seed_key,
                          max_attempts: int, frozen: dict[int, float]) -> np.ndarray | None:
    for attempt in range(max_attempts):
        rng = np.random.default_rng(seed_key + (attempt,))
        q = rng.uniform(model.limits_lo, model.limits_hi)
        for j, value in frozen.items():
            q[j] = value
        if not config_in_collision(env, model, q):
            return q
    return None


def build_unconstrained(env: Environment, model: RobotModel, params: PlannerParams,
                        frozen: dict[int, float] | None = None) -> Roadmap:
    """Distance-only roadmap over free space (no manifold, no scoring)."""
    frozen = frozen or {}
    configs = []
    for i in range(params.num_nodes):
        q = _sample_unconstrained(env, model, (params.seed, 4, i),
                                  params.sample_attempts, frozen)
        if q is not None:
            configs.append(q)
    if not configs:
        raise RoadmapBuildError("no collision-free samples found")
    poses = batch_fk(model, configs)
    roadmap = Roadmap(
        nodes=[RoadmapNode(q, p, 0.0) for q, p in zip(configs, poses)],
        edges={},
        adjacency={i: set() for i in range(len(configs))},
        params=replace(params, alpha=0.0),
        constraint_kind=None,
        alpha=0.0,
        env=env,
        env_hash=env.content_hash(),
        scorer=NullScorer(),
        projected=False,
    )
    us, vs, ds = neighbor_pairs(model, np.stack(configs), params.connection_radius)
    _wire_edges(roadmap, model, None, list(zip(us.tolist(), vs.tolist(), ds.tolist())))
    return roadmap


def baseline_post(env: Environment, model: RobotModel, problem: PlanningProblem,
                  params: PlannerParams) -> PlanResult | None:
    """Perception-blind planning over the non-aim joints, then aim post-processing.

    The aim joints stay at their start values while a distance-only roadmap is
    planned (goal configurations get the same frozen aim values, since only
    the base motion is being planned), and every returned waypoint has its
    pan/tilt solved analytically to point the optical axis at the monitored
    centroid (clamped to limits).
    """
    frozen = {j: float(problem.q_start[j]) for j in model.aim_joints}
    goals = []
    for goal in problem.goals:
        if isinstance(goal, GoalRegion):
            goals.append(goal)
            continue
        g = np.array(goal)
        for j, value in frozen.items():
            g[j] = value
        goals.append(g)
    roadmap = build_unconstrained(env, model, params, frozen)
    result = query(roadmap, env, model, None,
                   replace(problem, goals=tuple(goals)))
    if result is None:
        return None
    point = env.monitor_point()
    aimed = [aim_at(model, q, point) for q in result.path]
    motion = sum(config_distance(model, a, b) for a, b in zip(aimed, aimed[1:]))
    return replace(result, path=aimed, motion_length=float(motion))


def baseline_manifold(env: Environment, model: RobotModel, spec: ConstraintSpec,
                      problem: PlanningProblem, params: PlannerParams, scorer,
                      projected: bool = True) -> PlanResult | None:
    """Manifold-constrained planning with distance-only weights (alpha = 0).

    With projected=False this is the rejection baseline: sampling keeps only
    configurations already satisfying the constraint exactly.
    """
    roadmap = build(env, model, spec, replace(params, alpha=0.0), scorer, projected)
    return query(roadmap, env, model, spec, problem)


# ---------------------------------------------------------------------------
# Persistence: deterministic binary serialization for golden-file testing.
# ---------------------------------------------------------------------------

def save_roadmap(roadmap: Roadmap, path) -> None:
    live = roadmap.live_ids()
    index = {nid: i for i, nid in enumerate(live)}
    k = len(roadmap.node(live[0]).config) if live else 0
    header = {
        "version": ROADMAP_VERSION,
        "constraint_kind": roadmap.constraint_kind,
        "alpha": roadmap.alpha,
        "env_hash": roadmap.env_hash,
        "projected": roadmap.projected,
        "k": k,
        "node_ids": live,
        "params": {
            "num_nodes": roadmap.params.num_nodes,
            "connection_radius": roadmap.params.connection_radius,
            "intermediates": roadmap.params.intermediates,
            "alpha": roadmap.params.alpha,
            "edge_check_resolution": roadmap.params.edge_check_resolution,
            "seed": roadmap.params.seed,
            "sample_attempts": roadmap.params.sample_attempts,
        },
    }
    header_bytes = json.dumps(header, sort_keys=True).encode()
    configs = np.stack([roadmap.node(i).config for i in live]) if live else np.empty((0, k))
    poses = np.stack([
        np.concatenate([roadmap.node(i).pose.rotation.reshape(-1),
                        roadmap.node(i).pose.translation])
        for i in live
    ]) if live else np.empty((0, 12))
    scores = np.array([roadmap.node(i).score for i in live])

    indptr = [0]
    indices, c_ms, c_ps = [], [], []
    for nid in live:
        nbrs = sorted(n for n in roadmap.adjacency.get(nid, ()) if roadmap.nodes[n] is not None)
        for nbr in nbrs:
            e = roadmap.edge(nid, nbr)
            indices.append(index[nbr])
            c_ms.append(e.c_m)
            c_ps.append(e.c_p)
        indptr.append(len(indices))

    with open(path, "wb") as fh:
        fh.write(ROADMAP_MAGIC)
        fh.write(struct.pack("<II", ROADMAP_VERSION, len(header_bytes)))
        fh.write(header_bytes)
        fh.write(configs.astype("<f8").tobytes(order="C"))
        fh.write(poses.astype("<f8").tobytes(order="C"))
        fh.write(scores.astype("<f8").tobytes(order="C"))
        fh.write(np.array(indptr, dtype="<u8").tobytes())
        fh.write(np.array(indices, dtype="<u8").tobytes())
        fh.write(np.array(c_ms, dtype="<f8").tobytes())
        fh.write(np.array(c_ps, dtype="<f8").tobytes())


def load_roadmap(path, env: Environment, scorer) -> Roadmap:
    """Rebuild a roadmap from disk; edge intermediates are not persisted."""
    from .geom import RigidTransform

    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != ROADMAP_MAGIC:
        raise ValueError(f"{path}: not a roadmap file")
    version, header_len = struct.unpack_from("<II", data, 4)
    if version != ROADMAP_VERSION:
        raise ValueError(f"{path}: unsupported roadmap version {version}")
    offset = 12
    header = json.loads(data[offset:offset + header_len].decode())
    offset += header_len
    live = header["node_ids"]
    k = header["k"]
    n = len(live)

    def take(count, dtype):
        nonlocal offset
        arr = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
        offset += arr.nbytes
        return arr

    configs = take(n * k, "<f8").reshape(n, k)
    poses = take(n * 12, "<f8").reshape(n, 12)
    scores = take(n, "<f8")
    indptr = take(n + 1, "<u8")
    m = int(indptr[-1])
    indices = take(m, "<u8")
    c_ms = take(m, "<f8")
    c_ps = take(m, "<f8")

    if header["env_hash"] != env.content_hash():
        raise ValueError(f"{path}: roadmap was built for a different environment")
    params = PlannerParams(**header["params"])
    size = max(live) + 1 if live else 0
    nodes: list[RoadmapNode | None] = [None] * size
    for i, nid in enumerate(live):
        pose = RigidTransform(poses[i, :9].reshape(3, 3), poses[i, 9:])
        nodes[nid] = RoadmapNode(np.array(configs[i]), pose, float(scores[i]))
    roadmap = Roadmap(
        nodes=nodes,
        edges={},
        adjacency={nid: set() for nid in range(size)},
        params=params,
        constraint_kind=header["constraint_kind"],
        alpha=header["alpha"],
        env=env,
        env_hash=header["env_hash"],
        scorer=scorer,
        projected=header["projected"],
    )
    for row, nid in enumerate(live):
        for j in range(int(indptr[row]), int(indptr[row + 1])):
            nbr = live[int(indices[j])]
            if nid < nbr:
                roadmap.add_edge(RoadmapEdge(
                    nid, nbr, float(c_ms[j]), float(c_ps[j]),
                    edge_weight(float(c_ps[j]), float(c_ms[j]), roadmap.alpha)))
    return roadmap
