"""Command-line workflows: dataset generation, training, planning, simulation.

Exit codes: 0 success, 2 planning failure, 3 scenario/schema error, 4 I/O
error. All artifacts except bench timing columns are byte-deterministic for a
fixed seed; wall-clock timings go to the console, not into plan artifacts.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import perception as pc
from . import replan as rp
from . import roadmap as rm
from . import surrogate as sg
from .robot import aim_at, config_distance, interpolate
from .scenario import Scenario, ScenarioError, load_scenario, scenario_to_dict
from .viz import heatmap_svg, plot_scene_svg
from .world import PlanningProblem, config_in_collision, env_at_time

EXIT_OK = 0
EXIT_PLANNING = 2
EXIT_SCHEMA = 3
EXIT_IO = 4

METHODS = ("psprm", "psprm-surrogate", "post", "rejection", "manifold")


def _threads_cap() -> int:
    # PSPRM_THREADS caps batch parallelism; the batch kernels are
    # deterministic single-worker vectorized code, so any cap >= 1 is honored.
    raw = os.environ.get("PSPRM_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _oracle(sc: Scenario) -> pc.OracleScorer:
    return pc.OracleScorer(sc.perception, sc.camera)


def _surrogate(sc: Scenario, model_path) -> sg.SurrogateScorer:
    mlp = sg.load_model(model_path)
    return sg.SurrogateScorer(mlp, sc.perception)


def _alpha_for(sc: Scenario, method: str) -> float:
    if "alpha" in sc.raw.get("problem", {}):
        return sc.problem.alpha
    return 0.8 if method == "psprm-surrogate" else 0.75


def plan_with_method(sc: Scenario, method: str, surrogate_path=None):
    """Build + query for one method; returns (result, preprocess_seconds)."""
    t0 = time.perf_counter()
    if method == "post":
        result = rm.baseline_post(sc.env, sc.model, sc.problem, sc.planner)
        return result, time.perf_counter() - t0
    if method == "manifold":
        result = rm.baseline_manifold(sc.env, sc.model, sc.constraint, sc.problem,
                                      sc.planner, _oracle(sc))
        return result, time.perf_counter() - t0
    if method == "rejection":
        spec = replace(sc.constraint, kind="frustum")
        result = rm.baseline_manifold(sc.env, sc.model, spec, sc.problem,
                                      sc.planner, _oracle(sc), projected=False)
        return result, time.perf_counter() - t0
    if method == "psprm":
        scorer = _oracle(sc)
    elif method == "psprm-surrogate":
        if surrogate_path is None:
            raise ValueError("psprm-surrogate needs --surrogate-model")
        scorer = _surrogate(sc, surrogate_path)
    else:
        raise ValueError(f"unknown method {method!r}")
    params = replace(sc.planner, alpha=_alpha_for(sc, method))
    roadmap = rm.build(sc.env, sc.model, sc.constraint, params, scorer)
    preprocess = time.perf_counter() - t0
    result = rm.query(roadmap, sc.env, sc.model, sc.constraint, sc.problem)
    return result, preprocess


def sample_path(model, path, resolution: float):
    """Waypoint polyline resampled at fixed metric spacing, endpoints included."""
    if len(path) < 2:
        return [np.array(path[0])]
    out = []
    for a, b in zip(path, path[1:]):
        d = config_distance(model, a, b)
        steps = max(1, int(np.ceil(d / resolution)))
        for i in range(steps):
            out.append(interpolate(model, a, b, i / steps))
    out.append(np.array(path[-1]))
    return out


def executed_samples(sc: Scenario, result: rm.PlanResult, method: str):
    """Executed-trajectory samples; the post baseline re-aims every sample."""
    samples = sample_path(sc.model, result.path, sc.execution.sample_resolution)
    if method == "post":
        point = sc.env.monitor_point()
        samples = [aim_at(sc.model, q, point) for q in samples]
    return samples


def path_metrics(sc: Scenario, samples) -> dict:
    oracle = _oracle(sc)
    scores = oracle.score_configs(sc.env, sc.model, samples)
    return {
        "mean_path_score": float(np.mean(scores)) if len(scores) else 0.0,
        "detection_rate_proxy": float(np.mean(scores >= 0.5)) if len(scores) else 0.0,
        "num_samples": len(samples),
    }


def _write_trajectory_csv(path, model, samples, scores):
    k = model.k
    lines = [",".join(["i"] + [f"q_{j}" for j in range(k)] + ["score"])]
    for i, (q, s) in enumerate(zip(samples, scores)):
        lines.append(",".join([str(i)] + [repr(float(v)) for v in q] + [repr(float(s))]))
    Path(path).write_text("\n".join(lines) + "\n")


def cmd_gen_dataset(args) -> int:
    sc = load_scenario(args.scenario)
    if args.samples < 1:
        print("error: --samples must be >= 1", file=sys.stderr)
        return EXIT_PLANNING
    rows = pc.generate_dataset(sc.env.targets, sc.camera, sc.perception,
                               args.samples, args.seed)
    pc.save_dataset(args.out, rows, sc.perception, sc.camera, args.seed,
                    sc.env.num_classes())
    print(f"wrote {len(rows)} rows to {args.out}")
    return EXIT_OK


def cmd_train_surrogate(args) -> int:
    rows, meta = pc.load_dataset(args.data)
    num_classes = meta.get("num_classes")
    cfg = sg.TrainConfig(epochs=args.epochs, learning_rate=args.lr,
                         batch_size=args.batch, holdout_fraction=args.holdout,
                         seed=args.seed)
    try:
        model, curve = sg.train(rows, cfg, num_classes)
    except FloatingPointError as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return 1
    sg.save_model(model, args.out)
    sg.save_loss_curve(str(args.out) + ".loss.csv", curve)
    mae = sg.holdout_mae(model, rows, cfg)
    print(f"saved model to {args.out}; final holdout MAE = {mae:.4f}")
    return EXIT_OK


def cmd_plan(args) -> int:
    sc = load_scenario(args.scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    result, preprocess = plan_with_method(sc, args.method, args.surrogate_model)
    if result is None:
        (out / "metrics.json").write_text(json.dumps(
            {"schema": 1, "method": args.method, "success": False},
            indent=2, sort_keys=True) + "\n")
        print(f"planning failed for method {args.method}", file=sys.stderr)
        return EXIT_PLANNING
    samples = executed_samples(sc, result, args.method)
    metrics = {
        "schema": 1,
        "method": args.method,
        "success": True,
        "total_weight": result.total_weight,
        "motion_length": result.motion_length,
        "mean_edge_cp": result.mean_edge_cp,
        "expanded_nodes": result.expanded_nodes,
        **path_metrics(sc, samples),
    }
    scores = _oracle(sc).score_configs(sc.env, sc.model, samples)
    _write_trajectory_csv(out / "trajectory.csv", sc.model, samples, scores)
    plot_scene_svg(sc.env, sc.model, samples, out / "plan.svg")
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    wall = time.perf_counter() - t0
    print(f"method={args.method} preprocess={preprocess:.2f}s total={wall:.2f}s "
          f"score={metrics['mean_path_score']:.3f} len={result.motion_length:.2f}")
    return EXIT_OK


def cmd_replan_sim(args) -> int:
    sc = load_scenario(args.scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.method == "psprm-surrogate":
        if args.surrogate_model is None:
            print("psprm-surrogate needs --surrogate-model", file=sys.stderr)
            return EXIT_PLANNING
        scorer = _surrogate(sc, args.surrogate_model)
    else:
        scorer = _oracle(sc)
    params = replace(sc.planner, alpha=_alpha_for(sc, args.method))
    env0 = env_at_time(sc.env, 0.0)
    roadmap = rm.build(env0, sc.model, sc.constraint, params, scorer)
    replan_params = sc.replan if not args.no_replan else replace(sc.replan, enabled=False)
    try:
        trace = rp.execute(roadmap, sc.env, sc.model, sc.constraint, sc.problem,
                           replan_params, sc.execution, scorer)
    except RuntimeError as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return EXIT_PLANNING
    rp.save_trace(trace, sc.model, out / "trace.csv", out / "summary.json")
    plot_scene_svg(sc.env, sc.model, [s.config for s in trace.samples], out / "trace.svg")
    summary = rp.trace_summary(trace, sc.model)
    print(f"plan_count={summary['plan_count']} mean_score={summary['mean_score']:.3f} "
          f"detection={summary['detection_rate_proxy']:.3f} failure={summary['failure']}")
    return EXIT_OK if not trace.failure else EXIT_PLANNING


def _sample_problem(sc: Scenario, seed_key) -> PlanningProblem | None:
    """Random collision-free start/goal with the camera aimed at the target."""
    point = sc.env.monitor_point()
    configs = []
    for which in range(2):
        found = None
        for attempt in range(200):
            rng = np.random.default_rng(seed_key + (which, attempt))
            q = rng.uniform(sc.model.limits_lo, sc.model.limits_hi)
            if sc.model.aim_joints:
                q = aim_at(sc.model, q, point)
            if not config_in_collision(sc.env, sc.model, q):
                found = q
                break
        if found is None:
            return None
        configs.append(found)
    return PlanningProblem(q_start=configs[0], goals=(configs[1],),
                           alpha=sc.problem.alpha)


def run_bench(sc: Scenario, methods, n_problems: int, seed: int,
              surrogate_path=None) -> dict:
    """Per-method aggregates over shared seeded problems on one scenario."""
    oracle = _oracle(sc)
    problems = []
    for j in range(n_problems):
        prob = _sample_problem(sc, (seed, 5, j))
        if prob is not None:
            problems.append(prob)

    rows = {}
    prepared = {}
    for method in methods:
        t0 = time.perf_counter()
        if method in ("psprm", "manifold"):
            # one scored build serves both: manifold is the alpha = 0 reweighting
            if "psprm_roadmap" not in prepared:
                params = replace(sc.planner, alpha=_alpha_for(sc, "psprm"))
                prepared["psprm_roadmap"] = rm.build(
                    sc.env, sc.model, sc.constraint, params, oracle)
                prepared["psprm_time"] = time.perf_counter() - t0
            roadmap = (prepared["psprm_roadmap"] if method == "psprm"
                       else rm.reweighted(prepared["psprm_roadmap"], 0.0))
            preprocess = prepared["psprm_time"]
            spec = sc.constraint
        elif method == "psprm-surrogate":
            scorer = _surrogate(sc, surrogate_path)
            params = replace(sc.planner, alpha=_alpha_for(sc, method))
            roadmap = rm.build(sc.env, sc.model, sc.constraint, params, scorer)
            preprocess = time.perf_counter() - t0
            spec = sc.constraint
        elif method == "rejection":
            spec = replace(sc.constraint, kind="frustum")
            params = replace(sc.planner, alpha=0.0)
            roadmap = rm.build(sc.env, sc.model, spec, params, oracle, projected=False)
            preprocess = time.perf_counter() - t0
        elif method == "post":
            roadmap = None
            preprocess = 0.0
            spec = None
        else:
            raise ValueError(f"unknown bench method {method!r}")

        successes = 0
        plan_times, lengths, scores, rates = [], [], [], []
        for prob in problems:
            t1 = time.perf_counter()
            if method == "post":
                frozen = {j: float(prob.q_start[j]) for j in sc.model.aim_joints}
                post_map = rm.build_unconstrained(sc.env, sc.model, sc.planner, frozen)
                result = rm.query(post_map, sc.env, sc.model, None, prob)
                if result is not None:
                    aimed = [aim_at(sc.model, q, sc.env.monitor_point()) for q in result.path]
                    motion = sum(config_distance(sc.model, a, b)
                                 for a, b in zip(aimed, aimed[1:]))
                    result = replace(result, path=aimed, motion_length=float(motion))
            else:
                result = rm.query(roadmap, sc.env, sc.model, spec, prob)
            plan_times.append(time.perf_counter() - t1)
            if result is None:
                continue
            successes += 1
            samples = executed_samples(sc, result, method)
            m = path_metrics(sc, samples)
            lengths.append(result.motion_length)
            scores.append(m["mean_path_score"])
            rates.append(m["detection_rate_proxy"])
        n = max(len(problems), 1)
        rows[method] = {
            "preprocess_time_s": preprocess,
            "plan_time_s": float(np.mean(plan_times)) if plan_times else 0.0,
            "total_time_s": preprocess + float(np.sum(plan_times)),
            "path_len": float(np.mean(lengths)) if lengths else 0.0,
            "success_rate": successes / n,
            "mean_path_score": float(np.mean(scores)) if scores else 0.0,
            "detection_rate_proxy": float(np.mean(rates)) if rates else 0.0,
            "problems": len(problems),
        }
    return rows


def _format_bench_table(report: dict) -> str:
    cols = ["method", "preprocess_time_s", "plan_time_s", "path_len",
            "success_rate", "mean_path_score", "detection_rate_proxy"]
    lines = ["  ".join(f"{c:>22}" for c in cols)]
    for scenario_name, methods in report.items():
        for method, row in methods.items():
            vals = [f"{scenario_name}/{method}"] + [
                f"{row[c]:.4f}" for c in cols[1:]
            ]
            lines.append("  ".join(f"{v:>22}" for v in vals))
    return "\n".join(lines)


def cmd_bench(args) -> int:
    scenario_dir = Path(args.scenario_dir)
    files = sorted(scenario_dir.glob("*.json"))
    if not files:
        print(f"no scenario files in {scenario_dir}", file=sys.stderr)
        return EXIT_IO
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    for m in methods:
        if m not in METHODS:
            print(f"unknown method {m!r}; choices: {METHODS}", file=sys.stderr)
            return EXIT_PLANNING
    report = {}
    for path in files:
        sc = load_scenario(path)
        surrogate_path = args.surrogate_model
        if "psprm-surrogate" in methods and surrogate_path is None:
            # self-contained: train a per-scenario surrogate on the fly
            out_dir = Path(args.out).parent
            out_dir.mkdir(parents=True, exist_ok=True)
            surrogate_path = out_dir / f"{path.stem}_surrogate.psrm"
            rows = pc.generate_dataset(sc.env.targets, sc.camera, sc.perception,
                                       1000, args.seed)
            model, _ = sg.train(rows, sg.TrainConfig(seed=args.seed))
            sg.save_model(model, surrogate_path)
        report[path.stem] = run_bench(sc, methods, args.problems, args.seed,
                                      surrogate_path)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(_format_bench_table(report))
    print(f"wrote {out}")
    return EXIT_OK


def cmd_score_map(args) -> int:
    sc = load_scenario(args.scenario)
    try:
        axis, value = args.slice.split("=")
        if axis.strip() != "z":
            raise ValueError
        height = float(value)
    except ValueError:
        print(f"bad --slice {args.slice!r}; expected z=<height>", file=sys.stderr)
        return EXIT_PLANNING
    xs, ys = [], []
    for box in sc.env.obstacles:
        xs += [box.min_corner[0], box.max_corner[0]]
        ys += [box.min_corner[1], box.max_corner[1]]
    for t in sc.env.targets:
        xs.append(t.centroid[0])
        ys.append(t.centroid[1])
    if not xs:
        print("scene has no extent for a score map", file=sys.stderr)
        return EXIT_PLANNING
    pad = 1.0
    x_edges = np.arange(min(xs) - pad, max(xs) + pad + args.grid_res, args.grid_res)
    y_edges = np.arange(min(ys) - pad, max(ys) + pad + args.grid_res, args.grid_res)
    if len(x_edges) < 2 or len(y_edges) < 2:
        print("degenerate score-map slice", file=sys.stderr)
        return EXIT_PLANNING
    point = sc.env.monitor_point()
    oracle = _oracle(sc)
    surrogate = _surrogate(sc, args.surrogate_model) if args.surrogate_model else None

    def cell_scores(scorer_raw):
        values = np.zeros((len(y_edges) - 1, len(x_edges) - 1))
        for iy in range(values.shape[0]):
            for ix in range(values.shape[1]):
                pos = np.array([
                    0.5 * (x_edges[ix] + x_edges[ix + 1]),
                    0.5 * (y_edges[iy] + y_edges[iy + 1]),
                    height,
                ])
                if np.linalg.norm(point - pos) < 1e-9:
                    continue
                pose = pc.camera_pose_looking_at(pos, point)
                total = 0.0
                for t in sc.env.monitored_targets():
                    occ = pc.occlusion_score(sc.env, pose, t, sc.perception)
                    if occ > sc.perception.occlusion_threshold:
                        continue
                    total += scorer_raw(pose, t)
                values[iy, ix] = total / len(sc.env.monitored)
        return values

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    values = cell_scores(oracle.raw)
    heatmap_svg(x_edges, y_edges, values, out, title=f"oracle z={height}")
    csv_path = out.with_suffix(".csv")
    _write_grid_csv(csv_path, x_edges, y_edges, values)
    if surrogate is not None:
        sv = cell_scores(surrogate.raw)
        s_out = out.with_name(out.stem + "_surrogate" + out.suffix)
        heatmap_svg(x_edges, y_edges, sv, s_out, title=f"surrogate z={height}")
        _write_grid_csv(s_out.with_suffix(".csv"), x_edges, y_edges, sv)
        diff = float(np.mean(np.abs(sv - values)))
        print(f"mean |surrogate - oracle| over grid = {diff:.4f}")
    print(f"wrote {out}")
    return EXIT_OK


def _write_grid_csv(path, x_edges, y_edges, values):
    lines = ["x,y,score"]
    for iy in range(values.shape[0]):
        for ix in range(values.shape[1]):
            x = 0.5 * (x_edges[ix] + x_edges[ix + 1])
            y = 0.5 * (y_edges[iy] + y_edges[iy + 1])
            lines.append(f"{repr(float(x))},{repr(float(y))},{repr(float(values[iy, ix]))}")
    Path(path).write_text("\n".join(lines) + "\n")


def cmd_scenario_echo(args) -> int:
    sc = load_scenario(args.scenario)
    print(json.dumps(scenario_to_dict(sc), indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="psprm",
                                     description="perception-score-guided PRM toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-dataset", help="sample scored camera transforms")
    p.add_argument("--scenario", required=True)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("train-surrogate", help="train the MLP score model")
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--batch", type=int, default=512)
    p.add_argument("--holdout", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_surrogate)

    p = sub.add_parser("plan", help="plan one problem with one method")
    p.add_argument("--scenario", required=True)
    p.add_argument("--method", choices=METHODS, default="psprm")
    p.add_argument("--surrogate-model", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("replan-sim", help="simulate execution with replanning")
    p.add_argument("--scenario", required=True)
    p.add_argument("--method", choices=("psprm", "psprm-surrogate"), default="psprm")
    p.add_argument("--surrogate-model", default=None)
    p.add_argument("--no-replan", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_replan_sim)

    p = sub.add_parser("bench", help="run seeded problems for several methods")
    p.add_argument("--scenario-dir", required=True)
    p.add_argument("--problems", type=int, default=50)
    p.add_argument("--methods", default="psprm,manifold,post")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--surrogate-model", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("score-map", help="rasterize the perception score field")
    p.add_argument("--scenario", required=True)
    p.add_argument("--slice", default="z=1.2")
    p.add_argument("--grid-res", type=float, default=0.25)
    p.add_argument("--surrogate-model", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score_map)

    p = sub.add_parser("echo-scenario", help="parse, apply defaults and print")
    p.add_argument("--scenario", required=True)
    p.set_defaults(func=cmd_scenario_echo)
    return parser


def main(argv=None) -> int:
    _threads_cap()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except FileNotFoundError as exc:
        print(f"file not found: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except rm.RoadmapBuildError as exc:
        print(f"roadmap build failed: {exc}", file=sys.stderr)
        return EXIT_PLANNING


if __name__ == "__main__":
    sys.exit(main())
