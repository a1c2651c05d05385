"""Mining the colored graph: problematic labels, low-accuracy cluster
extraction, and routing of new points to extracted clusters.

A label is problematic when it occurs at least ``min_count`` times and its
accuracy falls strictly below ``max_accuracy``. Clusters are connected
components of the subgraph induced by nodes whose coloring value clears a
threshold; routing gates a query on distance to each cluster's centroid
relative to the cluster's own radius.
"""

from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass

import numpy as np

from .coloring import Coloring
from .dataset import Dataset
from .errors import BadParams, DimensionMismatch
from .geometry import ColumnStats, vne_distance
from .mapper import MapperGraph


@dataclass(frozen=True)
class ProblematicRule:
    min_count: int = 3
    max_accuracy: float = 0.40  # strict upper bound

    def __post_init__(self):
        if self.min_count < 1:
            raise BadParams(f"min_count must be >= 1, got {self.min_count}")
        if not 0.0 <= self.max_accuracy <= 1.0:
            raise BadParams(f"max_accuracy must lie in [0,1], got {self.max_accuracy}")


@dataclass(frozen=True)
class ClusterReport:
    cluster_id: int
    node_ids: tuple[int, ...]
    point_ids: tuple[int, ...]  # deduplicated member union
    mean_coloring_value: float
    dominant_true_labels: tuple[tuple[str, int], ...] = ()


@dataclass(frozen=True)
class RoutingModel:
    cluster_ids: tuple[int, ...]
    centroids: np.ndarray  # (n_clusters, d)
    radii: np.ndarray      # (n_clusters,)
    stats: ColumnStats
    default_route: str = "default"


def problematic_labels(
    ds: Dataset, rule: ProblematicRule | None = None, top_k: int = 1
) -> tuple[set[str], np.ndarray]:
    """Labels failing the count/accuracy rule, plus per-point membership marks."""
    rule = rule or ProblematicRule()
    counts: Counter[str] = Counter()
    correct: Counter[str] = Counter()
    for rec in ds.records:
        counts[rec.true_label] += 1
        top = [label for label, _ in rec.predictions[:top_k]]
        if rec.true_label in top:
            correct[rec.true_label] += 1
    bad = {
        label
        for label, c in counts.items()
        if c >= rule.min_count and correct[label] / c < rule.max_accuracy
    }
    marks = np.array([rec.true_label in bad for rec in ds.records], dtype=bool)
    return bad, marks


def _ranked_labels(point_ids, ds: Dataset, limit: int | None = None):
    counts = Counter(ds.records[p].true_label for p in point_ids)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return tuple(ranked[:limit] if limit else ranked)


def extract_problem_clusters(
    graph: MapperGraph,
    coloring: Coloring,
    threshold: float,
    min_nodes: int = 2,
    ds: Dataset | None = None,
) -> list[ClusterReport]:
    """Connected components of the nodes at or above the coloring threshold.

    Components smaller than min_nodes are dropped. Reports are sorted by
    point count descending, ties broken by smallest node id. Dominant label
    rankings are filled when a dataset is supplied.
    """
    if not 0.0 <= threshold <= 1.0:
        raise BadParams(f"threshold must lie in [0,1], got {threshold}")
    if min_nodes < 1:
        raise BadParams(f"min_nodes must be >= 1, got {min_nodes}")
    if coloring.node_values.shape[0] != len(graph.nodes):
        raise DimensionMismatch("coloring is not aligned with graph nodes")

    above = {n.node_id for n in graph.nodes if coloring.node_values[n.node_id] >= threshold}
    adj: dict[int, list[int]] = {n: [] for n in above}
    for a, b, _ in graph.edges:
        if a in above and b in above:
            adj[a].append(b)
            adj[b].append(a)

    components: list[list[int]] = []
    seen: set[int] = set()
    for start in sorted(above):
        if start in seen:
            continue
        comp = []
        queue = deque([start])
        seen.add(start)
        while queue:
            u = queue.popleft()
            comp.append(u)
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        if len(comp) >= min_nodes:
            components.append(sorted(comp))

    drafts = []
    for comp in components:
        points = sorted({int(p) for nid in comp for p in graph.nodes[nid].members})
        mean_val = float(np.mean([coloring.node_values[nid] for nid in comp]))
        drafts.append((comp, points, mean_val))
    drafts.sort(key=lambda d: (-len(d[1]), d[0][0]))

    return [
        ClusterReport(
            cluster_id=i,
            node_ids=tuple(comp),
            point_ids=tuple(points),
            mean_coloring_value=mean_val,
            dominant_true_labels=_ranked_labels(points, ds) if ds is not None else (),
        )
        for i, (comp, points, mean_val) in enumerate(drafts)
    ]


def build_routing(ds: Dataset, reports: list[ClusterReport], stats: ColumnStats) -> RoutingModel:
    """Centroid plus max-member-distance radius for each extracted cluster."""
    if not reports:
        return RoutingModel(
            cluster_ids=(),
            centroids=np.zeros((0, ds.matrix.n_cols)),
            radii=np.zeros(0),
            stats=stats,
        )
    centroids = np.empty((len(reports), ds.matrix.n_cols))
    radii = np.empty(len(reports))
    for i, rep in enumerate(reports):
        rows = ds.matrix.values[list(rep.point_ids)].astype(np.float64)
        centroids[i] = rows.mean(axis=0)
        radii[i] = max(vne_distance(centroids[i], row, stats) for row in rows)
    return RoutingModel(
        cluster_ids=tuple(r.cluster_id for r in reports),
        centroids=centroids,
        radii=radii,
        stats=stats,
    )


def route_distances(x, model: RoutingModel) -> np.ndarray:
    xv = np.asarray(x, dtype=np.float64).reshape(-1)
    if xv.shape[0] != model.stats.n_cols:
        raise DimensionMismatch(
            f"query has {xv.shape[0]} dims, model expects {model.stats.n_cols}"
        )
    return np.array([vne_distance(xv, c, model.stats) for c in model.centroids])


def route_point(x, model: RoutingModel, slack: float = 1.0) -> int | None:
    """Nearest cluster id if the query lands within slack * radius, else None.

    Distance ties break toward the smallest cluster id.
    """
    if not slack >= 1.0:
        raise BadParams(f"slack must be >= 1, got {slack}")
    dists = route_distances(x, model)
    if dists.size == 0:
        return None
    best = int(np.argmin(dists))  # first minimum = smallest cluster_id
    if dists[best] <= slack * model.radii[best]:
        return model.cluster_ids[best]
    return None


def cluster_summary(reports: list[ClusterReport], ds: Dataset) -> list[dict]:
    """Per-cluster size, accuracy, and dominant true/confused labels."""
    out = []
    for rep in reports:
        points = list(rep.point_ids)
        correct = sum(
            1 for p in points if ds.records[p].top1 == ds.records[p].true_label
        )
        mispredicted = Counter(
            ds.records[p].top1 for p in points if ds.records[p].top1 != ds.records[p].true_label
        )
        ranked_pred = sorted(mispredicted.items(), key=lambda kv: (-kv[1], kv[0]))[:5]
        out.append(
            {
                "cluster_id": rep.cluster_id,
                "size": len(points),
                "mean_accuracy": correct / len(points),
                "top_true_labels": [[label, c] for label, c in _ranked_labels(points, ds, limit=5)],
                "top_predicted_misclassified": [[label, c] for label, c in ranked_pred],
            }
        )
    return out
