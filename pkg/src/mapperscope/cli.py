"""Command-line pipeline: synth, build, analyze, heatmap, serve.

Failures exit with status 1 and a machine-readable JSON error on stderr:
{"error": "<Code>", "detail": "..."}.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import analysis, coloring, dataset, geometry, heatmap, mapper, service
from .errors import MapperscopeError


def _fail(code: str, detail: str):
    click.echo(json.dumps({"error": code, "detail": detail}), err=True)
    sys.exit(1)


def _require(path, code: str) -> Path:
    p = Path(path)
    if not p.is_file():
        _fail(code, f"{p} does not exist")
    return p


def _json_bytes(obj) -> bytes:
    return json.dumps(obj, separators=(",", ":")).encode("utf-8")


@click.group()
def main():
    """Mapper-graph models of classifier behavior."""


@main.command()
@click.option("--per-cluster", type=int, required=True, help="Points per cluster.")
@click.option("--clusters", "n_clusters", type=int, required=True, help="Number of clusters.")
@click.option("--dims", type=int, required=True, help="Feature dimensions.")
@click.option("--separation", type=float, required=True, help="Minimum center separation.")
@click.option("--error-rates", required=True, help="Comma-separated per-cluster error rates.")
@click.option("--seed", type=int, required=True)
@click.option("--out-prefix", required=True, help="Writes <prefix>.amf and <prefix>.jsonl.")
def synth(per_cluster, n_clusters, dims, separation, error_rates, seed, out_prefix):
    """Generate a synthetic dataset with planted misclassification clusters."""
    try:
        rates = [float(r) for r in error_rates.split(",") if r.strip() != ""]
    except ValueError:
        _fail("BadParams", f"could not parse --error-rates {error_rates!r}")
    try:
        ds = dataset.synth_dataset(per_cluster, n_clusters, dims, separation, rates, seed)
        dataset.write_feature_matrix(ds.matrix, f"{out_prefix}.amf")
        dataset.write_metadata(ds.records, f"{out_prefix}.jsonl")
    except MapperscopeError as exc:
        _fail(exc.code, str(exc))
    click.echo(f"wrote {out_prefix}.amf and {out_prefix}.jsonl ({ds.n} records, {dims} dims)")


@main.command()
@click.option("--matrix", "matrix_path", required=True)
@click.option("--metadata", "metadata_path", required=True)
@click.option("--resolution", type=int, default=mapper.DEFAULT_RESOLUTION, show_default=True)
@click.option("--gain", type=float, default=mapper.DEFAULT_GAIN, show_default=True)
@click.option("--lens-dim", type=int, default=2, show_default=True)
@click.option("--bins", type=int, default=mapper.DEFAULT_HISTOGRAM_BINS, show_default=True,
              help="Histogram bins for the clustering cut heuristic.")
@click.option("--top-k", type=int, default=1, show_default=True,
              help="Predictions counted as correct for the accuracy coloring.")
@click.option("--min-count", type=int, default=3, show_default=True)
@click.option("--max-accuracy", type=float, default=0.40, show_default=True)
@click.option("--workers", type=int, default=None, help="Parallel cell clustering workers.")
@click.option("--out", "out_path", required=True)
def build(matrix_path, metadata_path, resolution, gain, lens_dim, bins, top_k,
          min_count, max_accuracy, workers, out_path):
    """Build the full model: stats, lens, cover, graph, colorings."""
    _require(matrix_path, "MatrixMissing")
    _require(metadata_path, "MetadataMissing")
    try:
        ds = dataset.load_dataset(matrix_path, metadata_path)
        stats = geometry.column_stats(ds.matrix)
        lens = geometry.pca_lens(ds.matrix, k=lens_dim)
        spec = mapper.CoverSpec(resolution=resolution, gain=gain)
        graph = mapper.build_mapper(ds, lens, spec, stats=stats, bins=bins, workers=workers)

        flags = coloring.correctness_flags(ds, top_k=top_k)
        accuracy = coloring.accuracy_coloring(graph, flags)
        rule = analysis.ProblematicRule(min_count=min_count, max_accuracy=max_accuracy)
        _, marks = analysis.problematic_labels(ds, rule)
        density = coloring.density_coloring(graph, marks)

        export = mapper.graph_to_json(
            graph,
            colorings={
                accuracy.name: list(accuracy.node_values),
                density.name: list(density.node_values),
            },
        )
        Path(out_path).write_bytes(_json_bytes(export))
    except MapperscopeError as exc:
        _fail(exc.code, str(exc))
    click.echo(f"wrote {out_path} ({len(export['nodes'])} nodes, {len(export['edges'])} edges)")


@main.command()
@click.option("--model", "model_path", required=True)
@click.option("--dataset", "dataset_prefix", required=True,
              help="Prefix P for P.amf and P.jsonl.")
@click.option("--min-count", type=int, default=3, show_default=True)
@click.option("--max-accuracy", type=float, default=0.40, show_default=True)
@click.option("--threshold", type=float, default=0.5, show_default=True)
@click.option("--min-nodes", type=int, default=2, show_default=True)
@click.option("--top-k", type=int, default=1, show_default=True)
@click.option("--out", "out_path", required=True)
def analyze(model_path, dataset_prefix, min_count, max_accuracy, threshold, min_nodes,
            top_k, out_path):
    """Extract problem clusters from a built model."""
    _require(model_path, "ModelMissing")
    _require(f"{dataset_prefix}.amf", "MatrixMissing")
    _require(f"{dataset_prefix}.jsonl", "MetadataMissing")
    try:
        ds = dataset.load_dataset(f"{dataset_prefix}.amf", f"{dataset_prefix}.jsonl")
        graph = mapper.graph_from_json(
            json.loads(Path(model_path).read_text(encoding="utf-8")), n_points=ds.n
        )
        rule = analysis.ProblematicRule(min_count=min_count, max_accuracy=max_accuracy)
        _, marks = analysis.problematic_labels(ds, rule, top_k=top_k)
        density = coloring.density_coloring(graph, marks)
        reports = analysis.extract_problem_clusters(
            graph, density, threshold=threshold, min_nodes=min_nodes, ds=ds
        )
        payload = {
            "rule": {"min_count": min_count, "max_accuracy": max_accuracy,
                     "threshold": threshold, "min_nodes": min_nodes, "top_k": top_k},
            "clusters": [
                {
                    "cluster_id": r.cluster_id,
                    "node_ids": list(r.node_ids),
                    "point_ids": list(r.point_ids),
                    "mean_coloring_value": r.mean_coloring_value,
                    "dominant_true_labels": [[label, c] for label, c in r.dominant_true_labels],
                }
                for r in reports
            ],
            "summary": analysis.cluster_summary(reports, ds),
        }
        Path(out_path).write_bytes(_json_bytes(payload))
    except MapperscopeError as exc:
        _fail(exc.code, str(exc))
    click.echo(f"wrote {out_path} ({len(payload['clusters'])} clusters)")


@main.command("heatmap")
@click.option("--tensor", "tensor_path", required=True)
@click.option("--image", "image_path", required=True)
@click.option("--mode", type=click.Choice(heatmap.AGGREGATION_MODES), default="l2", show_default=True)
@click.option("--alpha", type=float, default=0.6, show_default=True)
@click.option("--out", "out_path", required=True)
def heatmap_cmd(tensor_path, image_path, mode, alpha, out_path):
    """Render a heat-map overlay PNG for one image."""
    from PIL import Image

    _require(tensor_path, "TensorMissing")
    _require(image_path, "ImageMissing")
    try:
        tensor = dataset.load_spatial_activation(tensor_path)
        with Image.open(image_path) as img:
            base = img.convert("RGBA")
        f = heatmap.compute_heat_field(tensor, mode=mode, out_h=base.height, out_w=base.width)
        heatmap.render_overlay(f, base, alpha).save(out_path, format="PNG")
    except MapperscopeError as exc:
        _fail(exc.code, str(exc))
    click.echo(f"wrote {out_path}")


@main.command()
@click.option("--model", "model_path", required=True, envvar="MAPPERSCOPE_MODEL")
@click.option("--metadata", "metadata_path", required=True, envvar="MAPPERSCOPE_METADATA")
@click.option("--images-root", default=None, envvar="MAPPERSCOPE_IMAGES_ROOT")
@click.option("--tensors", "tensors_dir", default=None, envvar="MAPPERSCOPE_TENSORS")
@click.option("--clusters", "clusters_path", default=None, envvar="MAPPERSCOPE_CLUSTERS")
@click.option("--static", "static_dir", default=None, envvar="MAPPERSCOPE_STATIC",
              help="Directory of dashboard assets served at /.")
@click.option("--routing/--no-routing", default=False,
              help="Build the routing model (loads the feature matrix once).")
@click.option("--matrix", "matrix_path", default=None,
              help="Feature matrix, required with --routing.")
@click.option("--slack", type=float, default=1.0, show_default=True, envvar="MAPPERSCOPE_SLACK")
@click.option("--host", default="127.0.0.1", show_default=True, envvar="MAPPERSCOPE_HOST")
@click.option("--port", type=int, default=8600, show_default=True, envvar="MAPPERSCOPE_PORT")
def serve(model_path, metadata_path, images_root, tensors_dir, clusters_path, static_dir,
          routing, matrix_path, slack, host, port):
    """Serve the built model to the dashboard."""
    import uvicorn

    _require(model_path, "ModelMissing")
    _require(metadata_path, "MetadataMissing")
    if routing and clusters_path is None:
        _fail("BadParams", "--routing requires --clusters")
    if routing and matrix_path is None:
        _fail("BadParams", "--routing requires --matrix")
    try:
        routing_model = None
        if routing:
            _require(matrix_path, "MatrixMissing")
            _require(clusters_path, "ClustersMissing")
            ds = dataset.load_dataset(matrix_path, metadata_path)
            stats = geometry.column_stats(ds.matrix)
            clusters = json.loads(Path(clusters_path).read_text(encoding="utf-8"))
            reports = [
                analysis.ClusterReport(
                    cluster_id=c["cluster_id"],
                    node_ids=tuple(c["node_ids"]),
                    point_ids=tuple(c["point_ids"]),
                    mean_coloring_value=c["mean_coloring_value"],
                )
                for c in clusters["clusters"]
            ]
            # only centroids, radii, and stats survive; the matrix is dropped
            routing_model = analysis.build_routing(ds, reports, stats)
        bundle = service.load_bundle(
            model_path,
            metadata_path,
            images_root=images_root,
            tensors_dir=tensors_dir,
            clusters_path=clusters_path,
            routing=routing_model,
            routing_slack=slack,
        )
    except MapperscopeError as exc:
        _fail(exc.code, str(exc))
    app = service.create_app(bundle, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
