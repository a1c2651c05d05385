"""The Mapper construction: cover, per-cell clustering, and the nerve graph.

Cover semantics: each lens axis with range [lo, hi] is split into
``resolution`` base bins of width w; cell i spans the closed interval
[lo + i*w - (gain-1)*w/2, lo + (i+1)*w + (gain-1)*w/2], i.e. width gain*w
centered on base bin i. At gain exactly 1 the bins are disjoint and boundary
points resolve to the lower-index cell so nothing is dropped. Multi-axis
cells are Cartesian products; empty cells are dropped.

Per-cell clustering is single linkage cut by the merge-distance histogram
heuristic: histogram the merge distances plus the cell diameter over
equal-width bins spanning [0, diameter]; the cut threshold is the left edge
of the first empty bin that follows a populated one (a gap in the merge
spectrum). No gap means one cluster. Merges strictly below the threshold are
applied.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.cluster.hierarchy import linkage

from .dataset import Dataset, FeatureMatrix
from .errors import BadParams, DimensionMismatch
from .geometry import ColumnStats, LensValues, column_stats, pairwise_distances

DEFAULT_RESOLUTION = 50
DEFAULT_GAIN = 3.0
DEFAULT_HISTOGRAM_BINS = 10


@dataclass(frozen=True)
class CoverSpec:
    resolution: int = DEFAULT_RESOLUTION
    gain: float = DEFAULT_GAIN
    ranges: tuple[tuple[float, float], ...] | None = None  # None: take lens min/max

    def __post_init__(self):
        if self.resolution < 1:
            raise BadParams(f"resolution must be >= 1, got {self.resolution}")
        if not self.gain >= 1.0:
            raise BadParams(f"gain must be >= 1, got {self.gain}")
        if self.ranges is not None and any(lo > hi for lo, hi in self.ranges):
            raise BadParams("axis range must satisfy min <= max")


@dataclass(frozen=True)
class CoverCell:
    axis_indices: tuple[int, ...]
    bounds: tuple[tuple[float, float], ...]
    member_points: np.ndarray  # sorted row indices


@dataclass(frozen=True)
class MapperNode:
    node_id: int
    cell: tuple[int, ...]
    members: np.ndarray  # sorted row indices, non-empty


@dataclass(frozen=True)
class MapperGraph:
    nodes: tuple[MapperNode, ...]
    edges: tuple[tuple[int, int, int], ...]  # (node_a, node_b, shared_count), a < b
    params: dict
    n_points: int


def _axis_intervals(lo: float, hi: float, resolution: int, gain: float) -> list[tuple[float, float]]:
    if hi == lo:
        return [(lo, hi)]  # degenerate axis: one interval holding everything
    w = (hi - lo) / resolution
    half = (gain - 1.0) * w / 2.0
    return [(lo + i * w - half, lo + (i + 1) * w + half) for i in range(resolution)]


def _axis_memberships(
    column: np.ndarray, lo: float, hi: float, resolution: int, gain: float
) -> tuple[list[tuple[float, float]], list[list[int]]]:
    """Per-point lists of interval indices containing the value (closed bounds)."""
    intervals = _axis_intervals(lo, hi, resolution, gain)
    n = column.shape[0]
    if hi == lo:
        return intervals, [[0] if lo <= v <= hi else [] for v in column]
    w = (hi - lo) / resolution
    if gain == 1.0:
        # disjoint base bins; boundary values go to the lower-index cell
        out: list[list[int]] = []
        for v in column:
            if v < lo or v > hi:
                out.append([])
                continue
            t = (v - lo) / w
            out.append([min(max(math.ceil(t) - 1, 0), resolution - 1)])
        return intervals, out
    los = np.array([b[0] for b in intervals])
    his = np.array([b[1] for b in intervals])
    inside = (column[:, None] >= los[None, :]) & (column[:, None] <= his[None, :])
    return intervals, [np.nonzero(inside[i])[0].tolist() for i in range(n)]


def build_cover(
    lens: LensValues,
    resolution: int,
    gain: float,
    ranges: tuple[tuple[float, float], ...] | None = None,
) -> list[CoverCell]:
    """Overlapping rectangular cells over lens space, empty cells dropped."""
    spec = CoverSpec(resolution=resolution, gain=gain, ranges=ranges)
    k = lens.k
    if ranges is not None and len(ranges) != k:
        raise DimensionMismatch(f"{len(ranges)} ranges for a {k}-axis lens")

    axis_bounds: list[list[tuple[float, float]]] = []
    axis_members: list[list[list[int]]] = []
    for a in range(k):
        col = lens.values[:, a]
        lo, hi = ranges[a] if ranges is not None else (float(col.min()), float(col.max()))
        bounds, members = _axis_memberships(col, lo, hi, spec.resolution, spec.gain)
        axis_bounds.append(bounds)
        axis_members.append(members)

    cells: dict[tuple[int, ...], list[int]] = {}
    for p in range(lens.n_rows):
        idx_lists = [axis_members[a][p] for a in range(k)]
        if any(not lst for lst in idx_lists):
            continue
        stack = [()]
        for lst in idx_lists:
            stack = [key + (i,) for key in stack for i in lst]
        for key in stack:
            cells.setdefault(key, []).append(p)

    out = []
    for key in sorted(cells):
        out.append(
            CoverCell(
                axis_indices=key,
                bounds=tuple(axis_bounds[a][key[a]] for a in range(k)),
                member_points=np.array(sorted(cells[key]), dtype=np.intp),
            )
        )
    return out


def _histogram_gap_threshold(merges: np.ndarray, diameter: float, bins: int) -> float | None:
    """Left edge of the first empty histogram bin after a populated one.

    The histogram covers [0, diameter] with equal-width bins and counts the
    merge distances plus the diameter itself (right edge lands in the last
    bin). Returns None when the spectrum has no gap.
    """
    counts = [0] * bins
    for v in list(merges) + [diameter]:
        b = min(int((v * bins) / diameter), bins - 1)
        counts[b] += 1
    seen_mass = False
    for b in range(bins):
        if counts[b] > 0:
            seen_mass = True
        elif seen_mass:
            return (b * diameter) / bins
    return None


def _cut_single_linkage(z: np.ndarray, n: int, threshold: float) -> list[list[int]]:
    """Apply merges with distance strictly below threshold; group the leaves."""
    parent = list(range(n + z.shape[0]))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for r in range(z.shape[0]):
        if z[r, 2] >= threshold:
            break  # single-linkage merge heights are non-decreasing
        ra, rb = find(int(z[r, 0])), find(int(z[r, 1]))
        parent[ra] = parent[rb] = n + r
    groups: dict[int, list[int]] = {}
    for leaf in range(n):
        groups.setdefault(find(leaf), []).append(leaf)
    return list(groups.values())


def cluster_cell(
    cell: CoverCell,
    m: FeatureMatrix,
    stats: ColumnStats,
    bins: int = DEFAULT_HISTOGRAM_BINS,
) -> list[np.ndarray]:
    """Partition a cell's members by single linkage under the vne metric."""
    if bins < 2:
        raise BadParams(f"bins must be >= 2, got {bins}")
    members = cell.member_points
    if members.shape[0] == 1:
        return [members.copy()]
    condensed = pairwise_distances(members, m, stats)
    diameter = float(condensed.max())
    if diameter <= 0.0:
        return [members.copy()]
    z = linkage(condensed, method="single")
    threshold = _histogram_gap_threshold(z[:, 2], diameter, bins)
    if threshold is None:
        return [members.copy()]
    local = _cut_single_linkage(z, members.shape[0], threshold)
    parts = [members[sorted(g)] for g in local]
    parts.sort(key=lambda p: (-p.shape[0], int(p[0])))
    return parts


def build_mapper(
    ds: Dataset,
    lens: LensValues,
    spec: CoverSpec,
    stats: ColumnStats | None = None,
    bins: int = DEFAULT_HISTOGRAM_BINS,
    workers: int | None = None,
) -> MapperGraph:
    """Assemble the nerve graph: one node per cell cluster, edges on shared points.

    Node ids follow (cell lexicographic, cluster size descending, smallest
    member ascending) order so exports are byte-stable. Cells are clustered
    independently (optionally in parallel); the merge is a deterministic
    sequential pass, so results do not depend on worker count.
    """
    if lens.n_rows != ds.n:
        raise DimensionMismatch(f"lens has {lens.n_rows} rows, dataset has {ds.n}")
    if stats is None:
        stats = column_stats(ds.matrix)

    cells = build_cover(lens, spec.resolution, spec.gain, ranges=spec.ranges)
    if workers is not None and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partitions = list(pool.map(lambda c: cluster_cell(c, ds.matrix, stats, bins), cells))
    else:
        partitions = [cluster_cell(c, ds.matrix, stats, bins) for c in cells]

    nodes: list[MapperNode] = []
    for cell, parts in zip(cells, partitions):
        for part in parts:
            nodes.append(MapperNode(node_id=len(nodes), cell=cell.axis_indices, members=part))

    point_nodes: dict[int, list[int]] = {}
    for node in nodes:
        for p in node.members:
            point_nodes.setdefault(int(p), []).append(node.node_id)
    shared: dict[tuple[int, int], int] = {}
    for ids in point_nodes.values():
        for i in range(len(ids)):
            for j in range(i + 1, len(ids)):
                shared[(ids[i], ids[j])] = shared.get((ids[i], ids[j]), 0) + 1
    edges = tuple((a, b, c) for (a, b), c in sorted(shared.items()))

    ranges = spec.ranges
    if ranges is None:
        ranges = tuple(
            (float(lens.values[:, a].min()), float(lens.values[:, a].max())) for a in range(lens.k)
        )
    params = {
        "resolution": spec.resolution,
        "gain": spec.gain,
        "metric": "vne",
        "lens": "pca",
        "lens_k": lens.k,
        "bins": bins,
        "ranges": [[lo, hi] for lo, hi in ranges],
    }
    return MapperGraph(nodes=tuple(nodes), edges=edges, params=params, n_points=ds.n)


def graph_from_json(obj: dict, n_points: int | None = None) -> MapperGraph:
    """Rebuild a graph from the exported wire format.

    Cell indices are not part of the export, so reconstructed nodes carry an
    empty cell key; analysis over members and edges is unaffected.
    """
    nodes = tuple(
        MapperNode(
            node_id=n["id"],
            cell=(),
            members=np.array(sorted(n["members"]), dtype=np.intp),
        )
        for n in obj["nodes"]
    )
    if n_points is None:
        n_points = 1 + max(int(n.members.max()) for n in nodes) if nodes else 0
    edges = tuple((e["a"], e["b"], e["shared"]) for e in obj["edges"])
    return MapperGraph(nodes=nodes, edges=edges, params=dict(obj.get("params", {})), n_points=n_points)


def graph_to_json(graph: MapperGraph, colorings: dict[str, list[float]] | None = None) -> dict:
    """Exported wire format; key order and schema are part of the contract."""
    colorings = colorings or {}
    for name, vals in colorings.items():
        if len(vals) != len(graph.nodes):
            raise DimensionMismatch(f"coloring {name!r} has {len(vals)} values for {len(graph.nodes)} nodes")
    return {
        "params": graph.params,
        "nodes": [
            {"id": n.node_id, "members": [int(p) for p in n.members], "size": int(n.members.shape[0])}
            for n in graph.nodes
        ],
        "edges": [{"a": a, "b": b, "shared": c} for a, b, c in graph.edges],
        "colorings": {name: [float(v) for v in vals] for name, vals in colorings.items()},
    }
