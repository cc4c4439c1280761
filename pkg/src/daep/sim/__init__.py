from .scenario import ObstaclePath, Scenario, load_scenario, save_scenario
from .world import AgentState, DepthCamera, DepthScan, World, observe_obstacles, render_depth, step
from .worlds import get_scenario, scenario_names

__all__ = [
    "AgentState", "DepthCamera", "DepthScan", "ObstaclePath", "Scenario", "World",
    "get_scenario", "load_scenario", "observe_obstacles", "render_depth", "save_scenario",
    "scenario_names", "step",
]
