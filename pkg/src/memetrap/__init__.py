"""Community concentration of memes, baseline diffusion models and early virality prediction."""

__version__ = "0.1.0"

from ._kernels import BACKEND
from .cascade import CascadeParams, run_ensemble, simulate
from .community import Partition, detect, detect_label_propagation, detect_louvain, modularity
from .graph import InteractionLog, SocialNetwork, build_network
from .metrics import concentration, community_flow, entropy
from .predictor import cross_validate, evaluate, extract_features, label_viral
from .trace import MemeTrace

__all__ = [
    "BACKEND", "CascadeParams", "InteractionLog", "MemeTrace", "Partition", "SocialNetwork",
    "build_network", "community_flow", "concentration", "cross_validate", "detect",
    "detect_label_propagation", "detect_louvain", "entropy", "evaluate", "extract_features",
    "label_viral", "modularity", "run_ensemble", "simulate",
]
