"""Multi-view label fusion for 4D scan sequences.

The package assigns one semantic label per mesh vertex by rendering the
scan from a camera rig, gathering pixel-level evidence (human parser
output, optical-flow propagated labels, segmentation masks, manual
annotations) and minimizing a smoothed fusion energy with alpha-expansion
graph cuts.
"""

from .scene_io import (
    DEFAULT_REGISTRY,
    BACKGROUND,
    LabelFrame,
    LabelRegistry,
    LabelSpec,
    ManifestError,
    MeshError,
    SequenceManifest,
    TriMesh,
    ViewCamera,
    ViewRig,
    build_adjacency,
    build_rig,
    load_mesh,
    recenter,
    save_mesh,
)
from .energy import FusionWeights
from .graphcut import EnergyProblem, alpha_expansion, energy_of

__version__ = "0.1.0"

__all__ = [
    "BACKGROUND",
    "DEFAULT_REGISTRY",
    "EnergyProblem",
    "FusionWeights",
    "LabelFrame",
    "LabelRegistry",
    "LabelSpec",
    "ManifestError",
    "MeshError",
    "SequenceManifest",
    "TriMesh",
    "ViewCamera",
    "ViewRig",
    "alpha_expansion",
    "build_adjacency",
    "build_rig",
    "energy_of",
    "load_mesh",
    "recenter",
    "save_mesh",
]
