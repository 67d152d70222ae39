"""Link prediction on text-attributed graphs with trend-aware curriculum weighting."""

__version__ = "0.1.0"

from gtnn.graph import Graph, Node, PairSample, SplitSet, load_graph, sample_negatives, split, synth_graph
from gtnn.curriculum import CurriculumConfig, CurriculumState, lambert_w0, sigma_star, trend_delta
from gtnn.model import GtnnParams, HyperParams, adam_step, bce_loss, encode, forward_pair
from gtnn.trainer import Metrics, TrainConfig, evaluate, train

__all__ = [
    "Graph", "Node", "PairSample", "SplitSet",
    "load_graph", "sample_negatives", "split", "synth_graph",
    "CurriculumConfig", "CurriculumState", "lambert_w0", "sigma_star", "trend_delta",
    "GtnnParams", "HyperParams", "adam_step", "bce_loss", "encode", "forward_pair",
    "Metrics", "TrainConfig", "evaluate", "train",
]
