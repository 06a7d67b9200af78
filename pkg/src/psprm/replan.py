"""Dynamic execution: revalidation, pruning, partial rebuild and replanning.

The execute loop owns the mutable roadmap. It advances along the current
plan at a fixed speed, snapshots the scripted environment periodically, and
when a monitored target has moved it re-projects nodes, re-scores edges from
their cached intermediates, prunes what died, and replans whenever the
remaining path scores below the threshold or broke.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .constraint import ConstraintSpec, project_to_manifold, sample_on_manifold
from .robot import RobotModel, batch_fk, config_distance, forward_kinematics, interpolate
from .roadmap import (PlanResult, Roadmap, RoadmapNode,
                      edge_perception_score, edge_weight, query)
from .world import Environment, PlanningProblem, config_in_collision, env_at_time, target_displacement


@dataclass(frozen=True)
class ReplanParams:
    score_threshold: float = 0.4
    move_epsilon: float = 0.05
    check_period: float = 0.5
    rebuild_batch: int = 500
    max_rebuilds: int = 3
    enabled: bool = True

    def __post_init__(self):
        if not 0.0 <= self.score_threshold <= 1.0:
            raise ValueError("score_threshold must be in [0, 1]")
        if self.move_epsilon <= 0 or self.check_period <= 0:
            raise ValueError("move_epsilon and check_period must be positive")


@dataclass(frozen=True)
class ExecutionParams:
    speed: float = 0.5
    sample_resolution: float = 0.05

    def __post_init__(self):
        if self.speed <= 0 or self.sample_resolution <= 0:
            raise ValueError("speed and sample_resolution must be positive")


@dataclass
class PruneReport:
    moved: bool
    pruned_nodes: list[int] = field(default_factory=list)
    dropped_edges: int = 0
    live_nodes: int = -1

    @property
    def all_pruned(self) -> bool:
        return self.moved and self.live_nodes == 0


@dataclass
class TraceSample:
    time: float
    config: np.ndarray
    score: float
    plan_id: int


@dataclass
class ReplanEvent:
    time: float
    reason: str
    plan: PlanResult | None


@dataclass
class ExecutionTrace:
    samples: list[TraceSample]
    events: list[ReplanEvent]
    plan_count: int
    failure: bool = False

    def mean_score(self) -> float:
        return float(np.mean([s.score for s in self.samples])) if self.samples else 0.0

    def detection_rate(self, threshold: float = 0.5) -> float:
        if not self.samples:
            return 0.0
        return float(np.mean([s.score >= threshold for s in self.samples]))

    def path_length(self, model: RobotModel) -> float:
        return float(sum(
            config_distance(model, a.config, b.config)
            for a, b in zip(self.samples, self.samples[1:])
        ))


def revalidate_and_rescore(roadmap: Roadmap, env_now: Environment, model: RobotModel,
                           spec: ConstraintSpec, move_epsilon: float = 0.05,
                           scorer=None) -> PruneReport:
    """Re-project, re-check, re-score every node and edge against env_now.

    Nodes that no longer project onto the manifold or that collide are pruned
    with their edges. Surviving edges are re-scored from their cached (and
    re-projected) intermediates; edges stretched beyond the connection radius
    by the re-projection are dropped so c_m stays in [0, 1]. A no-op when no
    monitored target moved by at least move_epsilon.
    """
    scorer = scorer if scorer is not None else roadmap.scorer
    if target_displacement(roadmap.env, env_now) < move_epsilon:
        return PruneReport(moved=False)

    pruned: list[int] = []
    for nid in roadmap.live_ids():
        node = roadmap.node(nid)
        result = project_to_manifold(spec, model, env_now, node.config)
        if not result.converged or config_in_collision(env_now, model, result.q):
            roadmap.prune_node(nid)
            pruned.append(nid)
            continue
        node.config = result.q

    dropped = 0
    radius = roadmap.params.connection_radius
    reprojected: dict[tuple[int, int], list[np.ndarray]] = {}
    for key in sorted(roadmap.edges):
        edge = roadmap.edges[key]
        qu = roadmap.node(edge.u).config
        qv = roadmap.node(edge.v).config
        d = config_distance(model, qu, qv)
        if d > radius or d <= 0.0:
            roadmap.drop_edge(*key)
            dropped += 1
            continue
        inters = []
        ok = True
        cached = edge.intermediates
        if cached is None:
            n = roadmap.params.intermediates
            cached = [interpolate(model, qu, qv, i / (n + 1)) for i in range(1, n + 1)]
        for q in cached:
            result = project_to_manifold(spec, model, env_now, q)
            if not result.converged or config_in_collision(env_now, model, result.q):
                ok = False
                break
            inters.append(result.q)
        if not ok:
            roadmap.drop_edge(*key)
            dropped += 1
            continue
        edge.c_m = d / radius
        reprojected[key] = inters

    # one batched pass over every surviving pose to refresh scores
    live = roadmap.live_ids()
    node_configs = [roadmap.node(i).config for i in live]
    edge_keys = sorted(reprojected)
    flat_inters: list[np.ndarray] = []
    spans = {}
    for key in edge_keys:
        spans[key] = (len(flat_inters), len(reprojected[key]))
        flat_inters.extend(reprojected[key])
    all_configs = node_configs + flat_inters
    roadmap.env = env_now
    roadmap.env_hash = env_now.content_hash()
    if all_configs:
        poses = batch_fk(model, all_configs)
        scores = scorer.score_configs(env_now, model, all_configs, poses)
        for i, nid in enumerate(live):
            node = roadmap.node(nid)
            node.pose = poses[i]
            node.score = float(scores[i])
        base = len(live)
        for key in edge_keys:
            lo, count = spans[key]
            edge = roadmap.edges[key]
            edge.intermediates = (np.stack(reprojected[key]) if count
                                  else np.empty((0, model.k)))
            edge.intermediate_scores = scores[base + lo:base + lo + count]
            edge.c_p = edge_perception_score(roadmap.node(edge.u).score,
                                             roadmap.node(edge.v).score,
                                             edge.intermediate_scores)
            edge.weight = edge_weight(edge.c_p, edge.c_m, roadmap.alpha)

    return PruneReport(moved=True, pruned_nodes=pruned, dropped_edges=dropped,
                       live_nodes=len(live))


def partial_rebuild(roadmap: Roadmap, env_now: Environment, model: RobotModel,
                    spec: ConstraintSpec, rebuild_batch: int, round_index: int) -> int:
    """Sample fresh manifold nodes into the surviving graph; returns nodes added.

    Existing valid nodes keep their ids and are never resampled; new nodes are
    wired to everything within the connection radius with full edge scoring.
    """
    from .roadmap import _wire_edges

    params = roadmap.params
    new_ids = []
    for i in range(rebuild_batch):
        q = sample_on_manifold(spec, model, env_now,
                               (params.seed, 2, round_index, i),
                               max_attempts=params.sample_attempts,
                               project=roadmap.projected)
        if q is None:
            continue
        pose = forward_kinematics(model, q)
        new_ids.append(roadmap.add_node(RoadmapNode(q, pose, 0.0)))
    if not new_ids:
        return 0
    new_configs = [roadmap.node(i).config for i in new_ids]
    scores = roadmap.scorer.score_configs(env_now, model, new_configs)
    for nid, s in zip(new_ids, scores):
        roadmap.node(nid).score = float(s)

    live = roadmap.live_ids()
    configs = {i: roadmap.node(i).config for i in live}
    seen = set()
    candidates = []
    for v in new_ids:
        for u in live:
            if u == v:
                continue
            key = (u, v) if u < v else (v, u)
            if key in seen or roadmap.has_edge(*key):
                continue
            seen.add(key)
            d = config_distance(model, configs[u], configs[v])
            if 0.0 < d <= params.connection_radius:
                candidates.append((*key, d))
    candidates.sort()
    _wire_edges(roadmap, model, spec, candidates)
    return len(new_ids)


def _path_arc(model: RobotModel, path: list[np.ndarray]):
    lengths = [config_distance(model, a, b) for a, b in zip(path, path[1:])]
    return lengths, float(sum(lengths))


def _config_along(model: RobotModel, path: list[np.ndarray], lengths, s: float) -> np.ndarray:
    """Configuration at arc length s along the waypoint polyline."""
    acc = 0.0
    for (a, b), seg in zip(zip(path, path[1:]), lengths):
        if seg > 1e-12 and s <= acc + seg:
            return interpolate(model, a, b, (s - acc) / seg)
        acc += seg
    return np.array(path[-1])


def _segments_passed(lengths, s: float) -> int:
    acc = 0.0
    passed = 0
    for seg in lengths:
        if s >= acc + seg - 1e-12:
            passed += 1
            acc += seg
        else:
            break
    return passed


def _sample_remaining(model: RobotModel, path, lengths, s_now: float, total: float,
                      resolution: float) -> list[np.ndarray]:
    out = []
    s = s_now
    while s < total:
        out.append(_config_along(model, path, lengths, s))
        s += resolution
    out.append(np.array(path[-1]))
    return out


def _path_edges_alive(roadmap: Roadmap, node_ids: list[int], start_index: int) -> bool:
    ids = [i for i in node_ids[start_index:] if i >= 0]
    for nid in ids:
        if nid >= len(roadmap.nodes) or roadmap.nodes[nid] is None:
            return False
    for a, b in zip(ids, ids[1:]):
        if not roadmap.has_edge(a, b):
            return False
    return True


def execute(roadmap: Roadmap, env: Environment, model: RobotModel, spec: ConstraintSpec,
            problem: PlanningProblem, replan_params: ReplanParams,
            exec_params: ExecutionParams, scorer=None) -> ExecutionTrace:
    """Simulate execution with periodic monitoring and replanning.

    Fully deterministic for a given scenario and seed. The trace records every
    executed sample with its combined score against the environment at that
    simulated time, plus each replan event.
    """
    scorer = scorer if scorer is not None else roadmap.scorer
    plan = query(roadmap, env_at_time(env, 0.0), model, spec, problem)
    if plan is None:
        raise RuntimeError("initial query failed; execute needs a feasible problem")

    samples: list[TraceSample] = []
    events: list[ReplanEvent] = []
    plan_id = 0
    failure = False

    path = plan.path
    lengths, total = _path_arc(model, path)
    s_now = 0.0
    t = 0.0
    dt = exec_params.sample_resolution / exec_params.speed
    next_check = replan_params.check_period
    # hard budget: generous multiple of the nominal plan duration plus script span
    script_end = max((kf.time for frames in env.scripts.values() for kf in frames), default=0.0)
    t_budget = 10.0 * (total / exec_params.speed + 1.0) + script_end + 10.0

    node_ids = plan.node_ids

    while True:
        q_now = _config_along(model, path, lengths, s_now)
        env_now = env_at_time(env, t)
        score = scorer.score_config(env_now, model, q_now)
        samples.append(TraceSample(t, q_now, float(score), plan_id))

        if s_now >= total:
            break
        if t > t_budget:
            failure = True
            break

        s_now = min(s_now + exec_params.sample_resolution, total)
        t += dt

        if not replan_params.enabled or t < next_check:
            continue
        while next_check <= t:
            next_check += replan_params.check_period
        env_now = env_at_time(env, t)
        if target_displacement(roadmap.env, env_now) < replan_params.move_epsilon:
            continue
        report = revalidate_and_rescore(roadmap, env_now, model, spec,
                                        replan_params.move_epsilon)
        remaining = _sample_remaining(model, path, lengths, s_now, total,
                                      exec_params.sample_resolution)
        rem_scores = scorer.score_configs(env_now, model, remaining)
        mean_remaining = float(np.mean(rem_scores)) if len(rem_scores) else 0.0
        path_broken = not _path_edges_alive(roadmap, node_ids, _segments_passed(lengths, s_now))
        if mean_remaining >= replan_params.score_threshold and not path_broken:
            continue

        reason = "path_pruned" if path_broken else "low_score"
        q_here = _config_along(model, path, lengths, s_now)
        sub_problem = replace(problem, q_start=q_here)
        new_plan = query(roadmap, env_now, model, spec, sub_problem)
        rebuild_round = 0
        while new_plan is None and rebuild_round < replan_params.max_rebuilds:
            partial_rebuild(roadmap, env_now, model, spec,
                            replan_params.rebuild_batch, rebuild_round)
            new_plan = query(roadmap, env_now, model, spec, sub_problem)
            rebuild_round += 1
        if new_plan is None:
            failure = True
            events.append(ReplanEvent(t, reason + ":unrecoverable", None))
            break
        plan_id += 1
        events.append(ReplanEvent(t, reason, new_plan))
        path = new_plan.path
        lengths, total = _path_arc(model, path)
        s_now = 0.0
        node_ids = new_plan.node_ids

    return ExecutionTrace(samples=samples, events=events,
                          plan_count=1 + len([e for e in events if e.plan is not None]),
                          failure=failure)


def trace_to_csv(trace: ExecutionTrace, path) -> None:
    """CSV export: t, q_0..q_{k-1}, score, plan_id."""
    k = len(trace.samples[0].config) if trace.samples else 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"q_{i}" for i in range(k)] + ["score", "plan_id"])
        for s in trace.samples:
            writer.writerow([repr(float(s.time))] + [repr(float(v)) for v in s.config]
                            + [repr(float(s.score)), s.plan_id])


def trace_summary(trace: ExecutionTrace, model: RobotModel,
                  detection_threshold: float = 0.5) -> dict:
    return {
        "schema": 1,
        "plan_count": trace.plan_count,
        "mean_score": trace.mean_score(),
        "detection_rate_proxy": trace.detection_rate(detection_threshold),
        "path_len": trace.path_length(model),
        "failure": trace.failure,
    }


def save_trace(trace: ExecutionTrace, model: RobotModel, csv_path, summary_path) -> None:
    trace_to_csv(trace, csv_path)
    Path(summary_path).write_text(
        json.dumps(trace_summary(trace, model), indent=2, sort_keys=True) + "\n"
    )
