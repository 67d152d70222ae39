import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gtnn.graph import PairSample, sample_negatives, sample_positive_pairs, split, synth_graph


@pytest.fixture(scope="session")
def planted_dataset():
    """The desk-scale smoke dataset: 200 nodes, 2 groups, 5:1 negatives, 80/10/10.

    p_in = 1.0 makes intra-group membership equivalent to adjacency, so the
    sampled pair set is separable from the planted features alone.
    """
    graph = synth_graph(200, 2, 1.0, 0.02, 16, 0.1, seed=7)
    positives = sample_positive_pairs(graph, 400, seed=7)
    negatives = sample_negatives(graph, positives, 5, "random", seed=7)
    samples = [PairSample(u=u, v=v, label=1, source="positive") for u, v in positives]
    samples += negatives
    return graph, split(samples, (0.8, 0.1, 0.1), seed=7)


@pytest.fixture(scope="session")
def small_dataset():
    """A fast dataset for trainer plumbing tests."""
    graph = synth_graph(60, 2, 0.9, 0.05, 8, 0.1, seed=2)
    positives = sample_positive_pairs(graph, 80, seed=2)
    negatives = sample_negatives(graph, positives, 5, "random", seed=2)
    samples = [PairSample(u=u, v=v, label=1, source="positive") for u, v in positives]
    samples += negatives
    return graph, split(samples, (0.8, 0.1, 0.1), seed=2)
