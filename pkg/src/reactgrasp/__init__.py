"""Reactive reach-to-grasp control: fingertip path optimization, velocity
fields and a joint-space QP tracker, with a kinematic simulator on top."""

from .controller import ControllerParams, GraspController, PathParams
from .fields import FieldParams
from .kinematics import ConfigurationError, RobotModel, forward_kinematics
from .qpsolver import QpProblem, QpSolver
from .robots import default_robot
from .sim import SimParams, evaluate_trace, load_scenario, run_episode, run_scenario
from .tracker import Tracker, TrackerParams

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError", "ControllerParams", "FieldParams", "GraspController", "PathParams", "QpProblem",
    "QpSolver", "RobotModel", "SimParams", "Tracker", "TrackerParams", "default_robot", "evaluate_trace",
    "forward_kinematics", "load_scenario", "run_episode", "run_scenario",
]
