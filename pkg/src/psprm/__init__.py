"""Perception-score-guided probabilistic roadmap planning toolkit."""

from .geom import (Aabb, CameraIntrinsics, Frustum, Ray, RigidTransform,
                   frustum_signed_distance, point_to_optical_axis_distance,
                   ray_aabb_hit)
from .robot import (JointSpec, RobotModel, aim_at, batch_fk, config_distance,
                    forward_kinematics, interpolate, preset)
from .world import (Environment, GoalRegion, Keyframe, PlanningProblem,
                    TargetObject, batch_collision, config_in_collision,
                    edge_in_collision, env_at_time)
from .constraint import (ConstraintSpec, ProjectionResult, constraint_value,
                         constrained_interpolate, project_to_manifold,
                         sample_on_manifold)
from .perception import (OracleScorer, PerceptionParams, ScoredPose,
                         combined_score, generate_dataset, occlusion_score,
                         oracle_score)
from .surrogate import (SurrogateModel, SurrogateRegressor, SurrogateScorer,
                        TrainConfig, featurize, load_model, predict,
                        save_model, train)
from .roadmap import (PlannerParams, PlanResult, Roadmap, baseline_manifold,
                      baseline_post, build, edge_perception_score, edge_weight,
                      load_roadmap, query, reweighted, save_roadmap)
from .replan import (ExecutionParams, ExecutionTrace, ReplanParams, execute,
                     partial_rebuild, revalidate_and_rescore)
from .scenario import Scenario, ScenarioError, load_scenario, scenario_to_dict

__version__ = "0.1.0"
