"""Straight-line reference Mapper used as the test oracle.

Everything here is deliberately naive pure-Python: distances by explicit
loops, single linkage by Kruskal over all sorted pairs with a union-find,
histogram binning by hand, cover membership by scanning every cell with
direct closed-interval comparisons, and nerve edges by testing every node
pair for intersection. No scipy, no vectorization — a different code path
from the production implementation in every step.

Column variances are taken as an input (they feed both implementations);
their own correctness is checked against a two-pass brute-force oracle in
the geometry tests.
"""

from __future__ import annotations

import math
from itertools import combinations


def ref_vne(x, y, variances) -> float:
    acc = 0.0
    for j in range(len(variances)):
        if variances[j] > 0.0:
            d = float(x[j]) - float(y[j])
            acc += d * d / variances[j]
    return math.sqrt(acc)


def ref_single_linkage_merges(members, dist):
    """Merge distances (ascending) via Kruskal's MST over all pairs."""
    pairs = sorted(
        ((dist(a, b), a, b) for a, b in combinations(members, 2)), key=lambda t: t[0]
    )
    parent = {m: m for m in members}

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    merges = []
    for d, a, b in pairs:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
            merges.append(d)
        if len(merges) == len(members) - 1:
            break
    return merges


def ref_gap_threshold(merges, diameter, bins):
    counts = [0] * bins
    for v in list(merges) + [diameter]:
        b = min(int((v * bins) / diameter), bins - 1)
        counts[b] += 1
    seen = False
    for b in range(bins):
        if counts[b] > 0:
            seen = True
        elif seen:
            return (b * diameter) / bins
    return None


def ref_cluster_cell(members, dist, bins=10):
    """Partition of members as a list of frozensets."""
    members = list(members)
    if len(members) == 1:
        return [frozenset(members)]
    diameter = max(dist(a, b) for a, b in combinations(members, 2))
    if diameter <= 0.0:
        return [frozenset(members)]
    merges = ref_single_linkage_merges(members, dist)
    threshold = ref_gap_threshold(merges, diameter, bins)
    if threshold is None:
        return [frozenset(members)]
    # components of the graph with edges strictly below the threshold
    parent = {m: m for m in members}

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for a, b in combinations(members, 2):
        if dist(a, b) < threshold:
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[ra] = rb
    groups = {}
    for m in members:
        groups.setdefault(find(m), []).append(m)
    return [frozenset(g) for g in groups.values()]


def ref_axis_membership(value, lo, hi, resolution, gain):
    """Indices of the closed intervals containing value on one axis."""
    if hi == lo:
        return [0] if lo <= value <= hi else []
    w = (hi - lo) / resolution
    half = (gain - 1.0) * w / 2.0
    hits = [
        i
        for i in range(resolution)
        if lo + i * w - half <= value <= lo + (i + 1) * w + half
    ]
    if gain == 1.0 and len(hits) > 1:
        hits = hits[:1]  # boundary points resolve to the lower-index cell
    return hits


def ref_mapper(matrix, lens_values, resolution, gain, variances, bins=10):
    """Full reference construction.

    Returns (nodes, edges) where nodes is a list of (cell_key, frozenset of
    members) sorted by (cell lexicographic, size descending, smallest member)
    and edges maps (i, j) node positions (i < j) to shared point counts.
    """
    n = len(lens_values)
    k = len(lens_values[0])
    axis_ranges = []
    for a in range(k):
        col = [lens_values[p][a] for p in range(n)]
        axis_ranges.append((min(col), max(col)))

    cells = {}
    for p in range(n):
        per_axis = [
            ref_axis_membership(lens_values[p][a], *axis_ranges[a], resolution, gain)
            for a in range(k)
        ]
        if any(not hits for hits in per_axis):
            continue
        keys = [()]
        for hits in per_axis:
            keys = [key + (i,) for key in keys for i in hits]
        for key in keys:
            cells.setdefault(key, []).append(p)

    def dist(a, b):
        return ref_vne(matrix[a], matrix[b], variances)

    nodes = []
    for key in sorted(cells):
        clusters = ref_cluster_cell(cells[key], dist, bins)
        clusters.sort(key=lambda c: (-len(c), min(c)))
        for c in clusters:
            nodes.append((key, c))

    edges = {}
    for i in range(len(nodes)):
        for j in range(i + 1, len(nodes)):
            shared = len(nodes[i][1] & nodes[j][1])
            if shared >= 1:
                edges[(i, j)] = shared
    return nodes, edges
