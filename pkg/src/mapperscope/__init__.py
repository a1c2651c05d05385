"""Mapper-graph models of image-classifier behavior."""

from .analysis import (
    ClusterReport,
    ProblematicRule,
    RoutingModel,
    build_routing,
    cluster_summary,
    extract_problem_clusters,
    problematic_labels,
    route_point,
)
from .coloring import Coloring, accuracy_coloring, correctness_flags, density_coloring
from .dataset import (
    Dataset,
    FeatureMatrix,
    ImageRecord,
    SpatialActivation,
    load_dataset,
    load_feature_matrix,
    load_metadata,
    load_spatial_activation,
    synth_dataset,
    write_feature_matrix,
    write_metadata,
    write_spatial_activation,
)
from .geometry import ColumnStats, LensValues, column_stats, pairwise_distances, pca_lens, vne_distance
from .heatmap import (
    HeatField,
    aggregate_channels,
    compute_heat_field,
    normalize_field,
    render_overlay,
    upsample_bilinear,
)
from .mapper import (
    CoverCell,
    CoverSpec,
    MapperGraph,
    MapperNode,
    build_cover,
    build_mapper,
    cluster_cell,
    graph_from_json,
    graph_to_json,
)

__version__ = "0.1.0"
