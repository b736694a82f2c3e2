from .scenario import (EgoSegment, EgoTrajectory, FollowParams, GridConfig, LidarConfig, MovingObject,
                       RadarConfig, Rect, Scenario, Segment, SegwayParams, Trajectory, follow_scenario,
                       segway_scenario)
from .sensors import DYNAMIC, FREE, STATIC, UNOBSERVED, GroundTruth, raycast, simulate_step

__all__ = [
    "EgoSegment", "EgoTrajectory", "FollowParams", "GridConfig", "LidarConfig", "MovingObject",
    "RadarConfig", "Rect", "Scenario", "Segment", "SegwayParams", "Trajectory", "follow_scenario",
    "segway_scenario", "DYNAMIC", "FREE", "STATIC", "UNOBSERVED", "GroundTruth", "raycast",
    "simulate_step",
]
