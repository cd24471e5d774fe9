"""Grouping of coplanar repeated keypoints and segmentation of scene planes.

Keypoints and regions are labeled jointly with a repeat group and a planar
surface by alternating alpha-expansion labeling with regression of vanishing
lines, pattern statistics and surface colour models.
"""
from .config import EnergyWeights, ProposalConfig, SolverConfig
from .model import JointLabeling, LabelUniverse, SceneData, SceneParams
from .solver import SolveReport, solve

__all__ = [
    "EnergyWeights",
    "JointLabeling",
    "LabelUniverse",
    "ProposalConfig",
    "SceneData",
    "SceneParams",
    "SolveReport",
    "SolverConfig",
    "solve",
]
__version__ = "0.1.0"
