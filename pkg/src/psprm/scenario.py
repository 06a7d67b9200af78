"""Scenario JSON ingestion: schema validation, defaults, round-trip serialization."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .constraint import ConstraintSpec
from .geom import Aabb, CameraIntrinsics, RigidTransform
from .perception import PerceptionParams
from .replan import ExecutionParams, ReplanParams
from .roadmap import PlannerParams
from .robot import CollisionSphere, JointSpec, RobotModel, preset
from .world import Environment, GoalRegion, Keyframe, PlanningProblem, TargetObject


class ScenarioError(ValueError):
    """Scenario file failed schema validation or referential checks."""


_VEC3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_NUM = {"type": "number"}

SCENARIO_SCHEMA = {
    "type": "object",
    "required": ["robot", "environment", "problem"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "robot": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "preset": {"type": "string"},
                "joints": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["kind", "limits"],
                        "additionalProperties": False,
                        "properties": {
                            "kind": {"enum": ["planar_x", "planar_y", "planar_yaw",
                                              "revolute", "prismatic"]},
                            "limits": {"type": "array", "items": _NUM,
                                       "minItems": 2, "maxItems": 2},
                            "axis": _VEC3,
                            "origin_translation": _VEC3,
                            "metric_weight": {"type": "number", "exclusiveMinimum": 0},
                            "name": {"type": "string"},
                        },
                    },
                },
                "camera_mount_translation": _VEC3,
                "collision_spheres": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["frame", "center", "radius"],
                        "additionalProperties": False,
                        "properties": {
                            "frame": {"type": "integer", "minimum": 0},
                            "center": _VEC3,
                            "radius": {"type": "number", "exclusiveMinimum": 0},
                        },
                    },
                },
                "aim_joints": {"type": "array", "items": {"type": "integer"},
                               "minItems": 2, "maxItems": 2},
            },
        },
        "camera": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "fov_deg": _NUM, "width": _NUM, "height": _NUM,
                "near": _NUM, "far": _NUM,
            },
        },
        "constraint": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["line_of_sight", "frustum"]},
                "tolerance": {"type": "number", "exclusiveMinimum": 0},
                "max_iterations": {"type": "integer", "minimum": 1},
                "fd_step": {"type": "number", "exclusiveMinimum": 0},
                "damping": {"type": "number", "minimum": 0},
            },
        },
        "environment": {
            "type": "object",
            "required": ["targets"],
            "additionalProperties": False,
            "properties": {
                "obstacles": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["center", "half"],
                        "additionalProperties": False,
                        "properties": {"center": _VEC3, "half": _VEC3},
                    },
                },
                "targets": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "required": ["label", "centroid", "half"],
                        "additionalProperties": False,
                        "properties": {
                            "label": {"type": "string"},
                            "class": {"type": "integer", "minimum": 0},
                            "centroid": _VEC3,
                            "half": _VEC3,
                            "facing": _VEC3,
                            "script": {
                                "type": "array",
                                "items": {
                                    "type": "object",
                                    "required": ["t", "centroid"],
                                    "additionalProperties": False,
                                    "properties": {"t": _NUM, "centroid": _VEC3,
                                                   "facing": _VEC3},
                                },
                            },
                        },
                    },
                },
                "monitored": {"type": "array", "items": {"type": "integer", "minimum": 0}},
            },
        },
        "problem": {
            "type": "object",
            "required": ["start"],
            "additionalProperties": False,
            "properties": {
                "start": {"type": "array", "items": _NUM},
                "goal": {},
                "goals": {"type": "array"},
                "alpha": {"type": "number", "minimum": 0, "maximum": 1},
            },
        },
        "planner": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "num_nodes": {"type": "integer", "minimum": 2},
                "delta": {"type": "number", "exclusiveMinimum": 0},
                "intermediates": {"type": "integer", "minimum": 0},
                "edge_check_resolution": {"type": "number", "exclusiveMinimum": 0},
                "seed": {"type": "integer", "minimum": 0},
                "sample_attempts": {"type": "integer", "minimum": 1},
            },
        },
        "perception": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "d_opt": _NUM, "sigma_d": {"type": "number", "exclusiveMinimum": 0},
                "center_exponent": {"type": "number", "minimum": 0},
                "facing_exponent": {"type": "number", "minimum": 0},
                "occlusion_threshold": {"type": "number", "minimum": 0, "maximum": 1},
                "rays_per_check": {"type": "integer", "minimum": 1},
            },
        },
        "replan": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "score_threshold": {"type": "number", "minimum": 0, "maximum": 1},
                "move_epsilon": {"type": "number", "exclusiveMinimum": 0},
                "check_period": {"type": "number", "exclusiveMinimum": 0},
                "rebuild_batch": {"type": "integer", "minimum": 1},
                "max_rebuilds": {"type": "integer", "minimum": 0},
            },
        },
        "execution": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "speed": {"type": "number", "exclusiveMinimum": 0},
                "sample_resolution": {"type": "number", "exclusiveMinimum": 0},
            },
        },
    },
}

_GOAL_SCHEMA = {
    "oneOf": [
        {"type": "array", "items": _NUM},
        {
            "type": "object",
            "required": ["lo", "hi"],
            "additionalProperties": False,
            "properties": {
                "lo": {"type": "array", "items": _NUM},
                "hi": {"type": "array", "items": _NUM},
            },
        },
    ]
}
SCENARIO_SCHEMA["properties"]["problem"]["properties"]["goal"] = _GOAL_SCHEMA
SCENARIO_SCHEMA["properties"]["problem"]["properties"]["goals"] = {
    "type": "array", "minItems": 1, "items": _GOAL_SCHEMA,
}

CAMERA_DEFAULTS = {"fov_deg": 42.5, "width": 640, "height": 480, "near": 0.3, "far": 6.0}


@dataclass
class Scenario:
    name: str
    model: RobotModel
    camera: CameraIntrinsics
    constraint: ConstraintSpec
    env: Environment
    problem: PlanningProblem
    planner: PlannerParams
    perception: PerceptionParams
    replan: ReplanParams
    execution: ExecutionParams
    raw: dict


def _validate(doc: dict) -> None:
    validator = jsonschema.Draft202012Validator(SCENARIO_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: e.json_path)
    if errors:
        msgs = "; ".join(f"{e.json_path}: {e.message}" for e in errors[:5])
        raise ScenarioError(f"scenario schema error: {msgs}")


def _build_robot(section: dict, camera: CameraIntrinsics) -> RobotModel:
    if "preset" in section:
        return preset(section["preset"], camera)
    if "joints" not in section:
        raise ScenarioError("robot section needs either 'preset' or 'joints'")
    joints = []
    for j in section["joints"]:
        joints.append(JointSpec(
            kind=j["kind"],
            limits=tuple(j["limits"]),
            axis=tuple(j.get("axis", (0.0, 0.0, 1.0))),
            origin_offset=RigidTransform.from_translation(
                j.get("origin_translation", (0.0, 0.0, 0.0))),
            metric_weight=j.get("metric_weight", 1.0),
            name=j.get("name", ""),
        ))
    spheres = tuple(
        CollisionSphere(s["frame"], tuple(s["center"]), s["radius"])
        for s in section.get("collision_spheres", ())
    )
    return RobotModel(
        joints=tuple(joints),
        camera_mount=RigidTransform.from_translation(
            section.get("camera_mount_translation", (0.0, 0.0, 0.0))),
        camera=camera,
        collision_spheres=spheres,
        aim_joints=tuple(section.get("aim_joints", ())),
        name="custom",
    )


def _build_environment(section: dict, num_joints: int) -> Environment:
    obstacles = tuple(
        Aabb(np.array(o["center"]), np.array(o["half"]))
        for o in section.get("obstacles", ())
    )
    targets = []
    scripts = {}
    for i, t in enumerate(section["targets"]):
        targets.append(TargetObject(
            label=t["label"],
            centroid=np.array(t["centroid"]),
            box=Aabb(np.array(t["centroid"]), np.array(t["half"])),
            class_index=t.get("class", i),
            facing=np.array(t["facing"]) if "facing" in t else None,
        ))
        if "script" in t:
            scripts[i] = tuple(
                Keyframe(kf["t"], np.array(kf["centroid"]),
                         np.array(kf["facing"]) if "facing" in kf else None)
                for kf in t["script"]
            )
    monitored = tuple(section.get("monitored", (0,)))
    num_classes = max(t.class_index for t in targets) + 1
    for t in targets:
        if t.class_index >= num_classes:
            raise ScenarioError(f"target {t.label!r}: class index out of range")
    return Environment(obstacles=obstacles, targets=tuple(targets),
                       monitored=monitored, scripts=scripts)


def _parse_goal(g, k: int):
    if isinstance(g, dict):
        lo, hi = np.array(g["lo"], dtype=float), np.array(g["hi"], dtype=float)
        if len(lo) != k or len(hi) != k:
            raise ScenarioError(f"goal region must have {k} entries per bound")
        return GoalRegion(lo, hi)
    arr = np.array(g, dtype=float)
    if len(arr) != k:
        raise ScenarioError(f"goal configuration must have {k} entries")
    return arr


def load_scenario(source) -> Scenario:
    """Parse a scenario from a path, JSON string, or dict."""
    if isinstance(source, dict):
        doc = source
    else:
        text = Path(source).read_text() if not str(source).lstrip().startswith("{") \
            else str(source)
        doc = json.loads(text)
    _validate(doc)

    cam = {**CAMERA_DEFAULTS, **doc.get("camera", {})}
    camera = CameraIntrinsics(
        vertical_fov=math.radians(cam["fov_deg"]),
        aspect=cam["width"] / cam["height"],
        near=cam["near"],
        far=cam["far"],
    )
    model = _build_robot(doc["robot"], camera)
    env = _build_environment(doc["environment"], model.k)

    con = doc.get("constraint", {})
    constraint = ConstraintSpec(
        kind=con.get("kind", "line_of_sight"),
        tolerance=con.get("tolerance", 1e-4),
        max_iterations=con.get("max_iterations", 50),
        fd_step=con.get("fd_step", 1e-6),
        damping=con.get("damping", 1e-6),
    )

    prob = doc["problem"]
    start = np.array(prob["start"], dtype=float)
    if len(start) != model.k:
        raise ScenarioError(f"start configuration must have {model.k} entries")
    goals = []
    if "goal" in prob:
        goals.append(_parse_goal(prob["goal"], model.k))
    for g in prob.get("goals", ()):
        goals.append(_parse_goal(g, model.k))
    if not goals:
        raise ScenarioError("problem needs 'goal' or 'goals'")
    alpha = prob.get("alpha", 0.75)
    problem = PlanningProblem(q_start=start, goals=tuple(goals), alpha=alpha)

    pl = doc.get("planner", {})
    planner = PlannerParams(
        num_nodes=pl.get("num_nodes", 3000),
        connection_radius=pl.get("delta", 2.0),
        intermediates=pl.get("intermediates", 5),
        alpha=alpha,
        edge_check_resolution=pl.get("edge_check_resolution", 0.05),
        seed=pl.get("seed", 0),
        sample_attempts=pl.get("sample_attempts", 100),
    )
    pc = doc.get("perception", {})
    perception = PerceptionParams(
        d_opt=pc.get("d_opt", 2.0),
        sigma_d=pc.get("sigma_d", 1.0),
        center_exponent=pc.get("center_exponent", 2.0),
        facing_exponent=pc.get("facing_exponent", 1.0),
        occlusion_threshold=pc.get("occlusion_threshold", 0.5),
        rays_per_check=pc.get("rays_per_check", 9),
    )
    rp = doc.get("replan", {})
    replan = ReplanParams(
        score_threshold=rp.get("score_threshold", 0.4),
        move_epsilon=rp.get("move_epsilon", 0.05),
        check_period=rp.get("check_period", 0.5),
        rebuild_batch=rp.get("rebuild_batch", 500),
        max_rebuilds=rp.get("max_rebuilds", 3),
    )
    ex = doc.get("execution", {})
    execution = ExecutionParams(
        speed=ex.get("speed", 0.5),
        sample_resolution=ex.get("sample_resolution", 0.05),
    )
    return Scenario(
        name=doc.get("name", "scenario"),
        model=model,
        camera=camera,
        constraint=constraint,
        env=env,
        problem=problem,
        planner=planner,
        perception=perception,
        replan=replan,
        execution=execution,
        raw=doc,
    )


def scenario_to_dict(scenario: Scenario) -> dict:
    """Serialize with defaults applied; parse -> serialize -> parse is a fixed point."""
    doc = json.loads(json.dumps(scenario.raw))
    doc.setdefault("camera", {})
    for key, value in CAMERA_DEFAULTS.items():
        doc["camera"].setdefault(key, value)
    doc.setdefault("constraint", {})
    for key in ("kind", "tolerance", "max_iterations", "fd_step", "damping"):
        doc["constraint"].setdefault(key, getattr(scenario.constraint, key))
    doc["problem"].setdefault("alpha", scenario.problem.alpha)
    doc.setdefault("planner", {})
    planner = scenario.planner
    doc["planner"].setdefault("num_nodes", planner.num_nodes)
    doc["planner"].setdefault("delta", planner.connection_radius)
    doc["planner"].setdefault("intermediates", planner.intermediates)
    doc["planner"].setdefault("edge_check_resolution", planner.edge_check_resolution)
    doc["planner"].setdefault("seed", planner.seed)
    doc["planner"].setdefault("sample_attempts", planner.sample_attempts)
    doc.setdefault("perception", {})
    for key in ("d_opt", "sigma_d", "center_exponent", "facing_exponent",
                "occlusion_threshold", "rays_per_check"):
        doc["perception"].setdefault(key, getattr(scenario.perception, key))
    doc.setdefault("replan", {})
    for key in ("score_threshold", "move_epsilon", "check_period",
                "rebuild_batch", "max_rebuilds"):
        doc["replan"].setdefault(key, getattr(scenario.replan, key))
    doc.setdefault("execution", {})
    doc["execution"].setdefault("speed", scenario.execution.speed)
    doc["execution"].setdefault("sample_resolution", scenario.execution.sample_resolution)
    return doc


def bundled_scenario_path(name: str) -> Path:
    """Path of a scenario shipped with the package (e.g. 'home.json')."""
    if not name.endswith(".json"):
        name += ".json"
    path = resources.files("psprm").joinpath("scenarios", name)
    with resources.as_file(path) as p:
        return Path(p)


def list_bundled_scenarios() -> list[str]:
    folder = resources.files("psprm").joinpath("scenarios")
    return sorted(p.name for p in folder.iterdir() if p.name.endswith(".json"))
