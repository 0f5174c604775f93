"""Loop detection between semantic scene graphs of two sessions."""

from .descriptors import DescriptorConfig, DescriptorStore, WalkDescriptor, WalkKind, compute_descriptors
from .graph import GraphConfig, GraphError, InstanceVertex, Kind, RawNode, RawSegmentInput, SceneGraph
from .matcher import CorrespondenceSet, LoopResult, MatchConfig, ScoreMatrix, detect_loop
from .registration import Pose4DoF, RegistrationOptions, RegistrationResult, estimate_pose_4dof, fuse_graphs

__version__ = "0.1.0"

__all__ = [
    "CorrespondenceSet",
    "DescriptorConfig",
    "DescriptorStore",
    "GraphConfig",
    "GraphError",
    "InstanceVertex",
    "Kind",
    "LoopResult",
    "MatchConfig",
    "Pose4DoF",
    "RawNode",
    "RawSegmentInput",
    "RegistrationOptions",
    "RegistrationResult",
    "SceneGraph",
    "ScoreMatrix",
    "WalkDescriptor",
    "WalkKind",
    "compute_descriptors",
    "detect_loop",
    "estimate_pose_4dof",
    "fuse_graphs",
]
