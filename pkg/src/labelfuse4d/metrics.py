"""Evaluation: parsing accuracy, Chamfer distances, stretching energy,
and the combined simulation loss.

Distance metrics are unit-agnostic; the `eval` command applies the
convention of scaling vertex positions by 100 so reports are in
centimeters (squared centimeters for d_CD and E_str).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .scene_io import TriMesh


def _flatten_labels(arr) -> np.ndarray:
    from .scene_io import LabelFrame

    if isinstance(arr, LabelFrame):
        arr = arr.labels
    return np.asarray(arr, dtype=np.int64).ravel()


def parsing_metrics(pred, gt) -> tuple[float, float]:
    """(mAcc, mIoU): unweighted means over the labels present in gt.

    gt entries of -1 are ignored; per label, accuracy is recall
    (correct / gt count) and IoU is intersection over union within the
    evaluated region.
    """
    report = parsing_report(pred, gt)
    return report["mAcc"], report["mIoU"]


def parsing_report(pred, gt) -> dict:
    """Full parsing report: per-label acc/IoU plus mAcc, mIoU, pixelAcc."""
    p = _flatten_labels(pred)
    g = _flatten_labels(gt)
    if p.shape != g.shape:
        raise ValueError(f"pred shape {p.shape} != gt shape {g.shape}")
    valid = g >= 0
    p = p[valid]
    g = g[valid]
    if g.size == 0:
        raise ValueError("ground truth has no labeled entries")
    classes = np.unique(g)
    per_label = {}
    acc_sum = iou_sum = 0.0
    for cls in classes:
        in_g = g == cls
        in_p = p == cls
        inter = int(np.count_nonzero(in_g & in_p))
        union = int(np.count_nonzero(in_g | in_p))
        acc = inter / int(np.count_nonzero(in_g))
        iou = inter / union if union else 0.0
        per_label[int(cls)] = {"acc": acc, "iou": iou}
        acc_sum += acc
        iou_sum += iou
    return {
        "per_label": per_label,
        "mAcc": acc_sum / len(classes),
        "mIoU": iou_sum / len(classes),
        "pixelAcc": float(np.count_nonzero(p == g)) / g.size,
    }


def sample_surface(mesh: TriMesh, n: int, seed: int = 0) -> np.ndarray:
    """Area-weighted uniform surface samples, deterministic for a given seed."""
    if n < 1:
        raise ValueError(f"sample count must be >= 1, got {n}")
    v = mesh.vertices
    tri = v[mesh.faces]  # (M, 3, 3)
    cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    areas = 0.5 * np.linalg.norm(cross, axis=1)
    total = areas.sum()
    if total <= 0:
        raise ValueError("mesh has zero surface area")
    rng = np.random.default_rng(seed)
    fidx = rng.choice(mesh.n_faces, size=n, p=areas / total)
    # square-root warp gives uniform barycentrics
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    b0 = 1.0 - r1
    b1 = r1 * (1.0 - r2)
    b2 = r1 * r2
    t = tri[fidx]
    return b0[:, None] * t[:, 0] + b1[:, None] * t[:, 1] + b2[:, None] * t[:, 2]


def _nearest_sq(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    d, _ = cKDTree(y).query(x, k=1, workers=-1)
    return d ** 2


def chamfer_squared(x, y) -> float:
    """Symmetric mean squared nearest-neighbor distance between two clouds."""
    x = np.asarray(x, dtype=np.float64).reshape(-1, 3)
    y = np.asarray(y, dtype=np.float64).reshape(-1, 3)
    if x.shape[0] == 0 or y.shape[0] == 0:
        raise ValueError("point clouds must be non-empty")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ValueError("point clouds contain non-finite coordinates")
    return float(_nearest_sq(x, y).mean() + _nearest_sq(y, x).mean())


@dataclass(frozen=True)
class EdgeLengths:
    """Deformed vs. rest edge lengths, aligned by shared topology."""

    current: np.ndarray
    template: np.ndarray

    def __post_init__(self):
        cur = np.asarray(self.current, dtype=np.float64).ravel()
        tmp = np.asarray(self.template, dtype=np.float64).ravel()
        if cur.shape != tmp.shape:
            raise ValueError(f"edge counts differ: {cur.shape} vs {tmp.shape}")
        if cur.size == 0:
            raise ValueError("no edges")
        if (cur <= 0).any() or (tmp <= 0).any():
            raise ValueError("edge lengths must be positive")
        object.__setattr__(self, "current", cur)
        object.__setattr__(self, "template", tmp)

    @property
    def n_edges(self) -> int:
        return self.current.size


def edge_lengths(deformed: TriMesh, template: TriMesh) -> EdgeLengths:
    """Per-edge lengths of two same-topology meshes, in matching order."""
    if deformed.n_vertices != template.n_vertices or not np.array_equal(
            deformed.faces, template.faces):
        raise ValueError("deformed and template meshes must share topology")
    from .scene_io import build_adjacency

    edges = build_adjacency(template).edges
    cur = np.linalg.norm(
        deformed.vertices[edges[:, 0]] - deformed.vertices[edges[:, 1]], axis=1)
    tmp = np.linalg.norm(
        template.vertices[edges[:, 0]] - template.vertices[edges[:, 1]], axis=1)
    return EdgeLengths(cur, tmp)


def stretching_energy(edges: EdgeLengths) -> float:
    """Mean squared deviation of edge lengths from their rest lengths."""
    return float(np.mean((edges.current - edges.template) ** 2))


def simulation_loss(sim: TriMesh, gt: TriMesh, template: TriMesh,
                    w: float = 1.0) -> float:
    """Vertex-wise Chamfer against gt plus w times stretching vs. template."""
    if w < 0 or not np.isfinite(w):
        raise ValueError(f"w must be finite and >= 0, got {w}")
    cd = chamfer_squared(sim.vertices, gt.vertices)
    if w == 0:
        return cd
    return cd + w * stretching_energy(edge_lengths(sim, template))
