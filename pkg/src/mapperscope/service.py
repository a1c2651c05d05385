"""HTTP service over an immutable built model.

The bundle is assembled once at startup and never mutated; every endpoint is
a pure read, so concurrent requests are safe by construction. /api/graph
returns the model file's exact bytes — what the build wrote is what clients
see.
"""

from __future__ import annotations

import io
import json
import mimetypes
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import FileResponse, Response
from fastapi.staticfiles import StaticFiles

from . import analysis, heatmap
from .dataset import ImageRecord, load_metadata, load_spatial_activation
from .errors import BadParams, DimensionMismatch, MapperscopeError
from .heatmap import AGGREGATION_MODES


class MalformedModel(MapperscopeError):
    pass


@dataclass
class ModelBundle:
    graph_bytes: bytes
    graph: dict
    records: tuple[ImageRecord, ...]
    correct_top1: np.ndarray
    images_root: Path | None = None
    tensors_dir: Path | None = None
    clusters: dict | None = None
    routing: analysis.RoutingModel | None = None
    routing_slack: float = 1.0
    _record_index: dict = field(default_factory=dict)
    _heat_cache: dict = field(default_factory=dict)
    _heat_lock: threading.Lock = field(default_factory=threading.Lock)

    def __post_init__(self):
        self._record_index = {r.image_id: i for i, r in enumerate(self.records)}

    def record_for(self, image_id: str) -> ImageRecord | None:
        i = self._record_index.get(image_id)
        return self.records[i] if i is not None else None

    def heat_field(self, image_id: str, mode: str, out_h: int, out_w: int) -> heatmap.HeatField:
        key = (image_id, mode, out_h, out_w)
        with self._heat_lock:
            cached = self._heat_cache.get(key)
        if cached is not None:
            return cached
        tensor = load_spatial_activation(self.tensors_dir / f"{image_id}.amf3", image_id=image_id)
        f = heatmap.compute_heat_field(tensor, mode=mode, out_h=out_h, out_w=out_w)
        with self._heat_lock:
            self._heat_cache[key] = f
        return f


def _validate_graph(graph: dict, n_records: int) -> None:
    for key in ("params", "nodes", "edges", "colorings"):
        if key not in graph:
            raise MalformedModel(f"model is missing {key!r}")
    nodes = graph["nodes"]
    if not isinstance(nodes, list) or not nodes:
        raise MalformedModel("model has no nodes")
    for i, node in enumerate(nodes):
        if node.get("id") != i:
            raise MalformedModel(f"node ids must be sequential, found {node.get('id')} at {i}")
        members = node.get("members")
        if not isinstance(members, list) or not members:
            raise MalformedModel(f"node {i} has no members")
        if node.get("size") != len(members):
            raise MalformedModel(f"node {i} size disagrees with its member list")
        if any(not isinstance(p, int) or p < 0 or p >= n_records for p in members):
            raise MalformedModel(f"node {i} references points outside the metadata range")
    for e in graph["edges"]:
        a, b = e.get("a"), e.get("b")
        if not (isinstance(a, int) and isinstance(b, int) and 0 <= a < b < len(nodes)):
            raise MalformedModel(f"bad edge {e!r}")
        if not isinstance(e.get("shared"), int) or e["shared"] < 1:
            raise MalformedModel(f"edge {e!r} must share at least one point")
    for name, vals in graph["colorings"].items():
        if len(vals) != len(nodes):
            raise MalformedModel(f"coloring {name!r} is not aligned with nodes")


def load_bundle(
    model_path,
    metadata_path,
    images_root=None,
    tensors_dir=None,
    clusters_path=None,
    routing: analysis.RoutingModel | None = None,
    routing_slack: float = 1.0,
) -> ModelBundle:
    graph_bytes = Path(model_path).read_bytes()
    try:
        graph = json.loads(graph_bytes)
    except json.JSONDecodeError as exc:
        raise MalformedModel(f"model is not valid JSON: {exc.msg}") from exc
    records = tuple(load_metadata(metadata_path))
    _validate_graph(graph, len(records))
    clusters = None
    if clusters_path is not None:
        clusters = json.loads(Path(clusters_path).read_text(encoding="utf-8"))
    correct = np.array([r.top1 == r.true_label for r in records], dtype=bool)
    return ModelBundle(
        graph_bytes=graph_bytes,
        graph=graph,
        records=records,
        correct_top1=correct,
        images_root=Path(images_root) if images_root else None,
        tensors_dir=Path(tensors_dir) if tensors_dir else None,
        clusters=clusters,
        routing=routing,
        routing_slack=routing_slack,
    )


def _member_payload(bundle: ModelBundle, point: int) -> dict:
    rec = bundle.records[point]
    return {
        "image_id": rec.image_id,
        "image_path": rec.image_path,
        "true_label": rec.true_label,
        "predictions": [[label, conf] for label, conf in rec.predictions],
        "correct_top1": bool(bundle.correct_top1[point]),
    }


def _resolve_image(bundle: ModelBundle, image_id: str) -> Path:
    rec = bundle.record_for(image_id)
    if rec is None or not rec.image_path or bundle.images_root is None:
        raise HTTPException(status_code=404, detail=f"no image for {image_id!r}")
    root = bundle.images_root.resolve()
    path = (root / rec.image_path).resolve()
    if root not in path.parents and path != root:
        raise HTTPException(status_code=404, detail="image path escapes images root")
    if not path.is_file():
        raise HTTPException(status_code=404, detail=f"image file missing for {image_id!r}")
    return path


def create_app(bundle: ModelBundle, static_dir=None) -> FastAPI:
    app = FastAPI(title="mapperscope", docs_url=None, redoc_url=None)

    @app.get("/api/graph")
    def get_graph():
        return Response(content=bundle.graph_bytes, media_type="application/json")

    @app.get("/api/nodes/{node_id}")
    def get_node(node_id: int):
        nodes = bundle.graph["nodes"]
        if node_id < 0 or node_id >= len(nodes):
            raise HTTPException(status_code=404, detail=f"no node {node_id}")
        members = nodes[node_id]["members"]
        return {"id": node_id, "members": [_member_payload(bundle, p) for p in members]}

    @app.get("/api/clusters")
    def get_clusters():
        if bundle.clusters is None:
            raise HTTPException(status_code=404, detail="no cluster report loaded")
        return bundle.clusters

    @app.get("/api/images/{image_id}")
    def get_image(image_id: str):
        path = _resolve_image(bundle, image_id)
        media, _ = mimetypes.guess_type(path.name)
        return FileResponse(path, media_type=media or "application/octet-stream")

    @app.get("/api/images/{image_id}/heatmap")
    def get_heatmap(image_id: str, mode: str = "l2", alpha: float = 0.6):
        if mode not in AGGREGATION_MODES:
            raise HTTPException(status_code=400, detail=f"mode must be one of {AGGREGATION_MODES}")
        if not 0.0 <= alpha <= 1.0:
            raise HTTPException(status_code=400, detail="alpha must lie in [0,1]")
        if bundle.tensors_dir is None or not (bundle.tensors_dir / f"{image_id}.amf3").is_file():
            raise HTTPException(status_code=404, detail=f"no activation tensor for {image_id!r}")
        path = _resolve_image(bundle, image_id)
        from PIL import Image

        with Image.open(path) as img:
            base = img.convert("RGBA")
        f = bundle.heat_field(image_id, mode, base.height, base.width)
        overlay = heatmap.render_overlay(f, base, alpha)
        buf = io.BytesIO()
        overlay.save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.post("/api/route")
    async def post_route(request: Request):
        if bundle.routing is None:
            raise HTTPException(status_code=404, detail="routing not enabled")
        try:
            body = await request.json()
        except json.JSONDecodeError:
            raise HTTPException(status_code=400, detail="body must be a JSON array")
        if isinstance(body, dict):
            body = body.get("vector")
        if not isinstance(body, list) or not all(isinstance(v, (int, float)) for v in body):
            raise HTTPException(status_code=400, detail="body must be a JSON array of numbers")
        try:
            dists = analysis.route_distances(body, bundle.routing)
            chosen = analysis.route_point(body, bundle.routing, slack=bundle.routing_slack)
        except (DimensionMismatch, BadParams) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        payload = {
            "route": "default" if chosen is None else "cluster",
            "cluster_id": chosen,
            "slack": bundle.routing_slack,
            "distances": {
                str(cid): float(d) for cid, d in zip(bundle.routing.cluster_ids, dists)
            },
        }
        if dists.size:
            best = int(np.argmin(dists))
            payload["nearest_cluster_id"] = bundle.routing.cluster_ids[best]
            payload["nearest_distance"] = float(dists[best])
            payload["nearest_radius"] = float(bundle.routing.radii[best])
        return payload

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="dashboard")

    return app
