"""Per-node scalar colorings over a Mapper graph.

A coloring assigns each node the mean of a per-point indicator over its
members, so values always land in [0,1]. Accuracy and problematic-density
are the two shipped indicators; any boolean vector works.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .errors import BadParams, DimensionMismatch
from .mapper import MapperGraph


@dataclass(frozen=True)
class Coloring:
    name: str
    node_values: np.ndarray  # (n_nodes,) in [0,1], index-aligned with graph nodes
    aggregation: str = "mean"

    def __post_init__(self):
        v = np.asarray(self.node_values, dtype=np.float64)
        if v.size and (v.min() < 0.0 or v.max() > 1.0):
            raise BadParams(f"coloring {self.name!r} has values outside [0,1]")
        object.__setattr__(self, "node_values", v)


def correctness_flags(ds: Dataset, top_k: int = 1) -> np.ndarray:
    """True where the ground-truth label appears in the first top_k predictions."""
    if top_k < 1:
        raise BadParams(f"top_k must be >= 1, got {top_k}")
    flags = np.zeros(ds.n, dtype=bool)
    for i, rec in enumerate(ds.records):
        top = [label for label, _ in rec.predictions[:top_k]]
        flags[i] = rec.true_label in top
    return flags


def _mean_over_members(graph: MapperGraph, per_point: np.ndarray, name: str) -> Coloring:
    if per_point.shape[0] != graph.n_points:
        raise DimensionMismatch(
            f"{per_point.shape[0]} per-point values for a graph over {graph.n_points} points"
        )
    vec = per_point.astype(np.float64)
    values = np.array([float(vec[node.members].mean()) for node in graph.nodes])
    return Coloring(name=name, node_values=values)


def accuracy_coloring(graph: MapperGraph, flags: np.ndarray) -> Coloring:
    """Fraction of each node's members classified correctly."""
    return _mean_over_members(graph, np.asarray(flags, dtype=bool), "accuracy")


def density_coloring(graph: MapperGraph, marked: np.ndarray, name: str = "problematic_density") -> Coloring:
    """Fraction of each node's members carrying the mark."""
    return _mean_over_members(graph, np.asarray(marked, dtype=bool), name)
