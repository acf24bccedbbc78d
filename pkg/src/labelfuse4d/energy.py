"""Unary energy assembly: project per-pixel votes onto mesh vertices.

For vertex i, label l and view n the per-source energy is
``E_X,n(i, l) = sum over pixels p of vertex i of -w_X * f_X,n(p, l)``
where the pixel weight w is the vertex's barycentric coordinate for the
PAR and OPT sources, 1 for SAM, and the constant manual weight for MAN.
The raw table averages ``lambda_p*E_par + lambda_o*E_opt +
lambda_s*E_sam + E_man`` over the rig's views, and is then min-max
normalized per vertex so unary magnitudes stay commensurate with the
Potts smoothing weight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .evidence import SOURCE_MAN, SOURCE_OPT, SOURCE_PAR, SOURCE_SAM, VoteImage
from .rasterizer import RasterMap
from .scene_io import TriMesh, ViewRig


@dataclass(frozen=True)
class FusionWeights:
    """Source mixing weights; defaults follow the reference configuration."""

    lambda_par: float = 0.5
    lambda_opt: float = 0.5
    lambda_po: float = 1.5
    lambda_sam: float = 1.0
    lambda_b: float = 1.0
    w_man: float = 10.0

    def __post_init__(self):
        for name in ("lambda_par", "lambda_opt", "lambda_po", "lambda_sam", "lambda_b"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        if not np.isfinite(self.w_man) or self.w_man <= 0:
            raise ValueError(f"w_man must be finite and > 0, got {self.w_man}")

    def replace(self, **kw) -> "FusionWeights":
        vals = {f: getattr(self, f) for f in self.__dataclass_fields__}
        vals.update(kw)
        return FusionWeights(**vals)


def _scatter_hard(table: np.ndarray, corners: np.ndarray, weights: np.ndarray,
                  labels: np.ndarray, coeff: float) -> None:
    """table[corner, label] -= coeff * weight for every (pixel, corner) pair."""
    valid = labels >= 0
    if not valid.any():
        return
    n_labels = table.shape[1]
    idx = corners[valid] * n_labels + labels[valid, None]   # (P, 3)
    w = np.broadcast_to(weights[valid] if weights.ndim == 2 else
                        weights[valid, None], idx.shape)
    table -= coeff * np.bincount(
        idx.ravel(), weights=w.ravel(), minlength=table.size
    ).reshape(table.shape)


def _scatter_soft(table: np.ndarray, corners: np.ndarray, scores: np.ndarray,
                  coeff: float) -> None:
    """table[corner, :] -= coeff * scores for every (pixel, corner) pair."""
    n_vert, n_labels = table.shape
    for l in range(n_labels):
        col = scores[:, l]
        if not col.any():
            continue
        mass = np.bincount(corners.ravel(),
                           weights=np.repeat(col, 3), minlength=n_vert)
        table[:, l] -= coeff * mass


def accumulate_unary(mesh: TriMesh, rig: ViewRig, raster_maps, votes: dict,
                     weights: FusionWeights, n_labels: int) -> np.ndarray:
    """Raw (N_vert, n_labels) unary table from all views and sources.

    ``votes`` maps source name -> per-view sequence of VoteImage (None
    entries and missing sources contribute nothing).  Vote mass enters
    negatively: more agreement means lower energy.
    """
    n_views = len(rig)
    if len(raster_maps) != n_views:
        raise ValueError(f"{len(raster_maps)} raster maps for a {n_views}-view rig")
    for source, per_view in votes.items():
        if source not in (SOURCE_PAR, SOURCE_OPT, SOURCE_SAM, SOURCE_MAN):
            raise ValueError(f"unknown vote source {source!r}")
        if len(per_view) != n_views:
            raise ValueError(f"{source}: {len(per_view)} vote images for {n_views} views")

    table = np.zeros((mesh.n_vertices, n_labels), dtype=np.float64)
    coeffs = {SOURCE_PAR: weights.lambda_par, SOURCE_OPT: weights.lambda_opt,
              SOURCE_SAM: weights.lambda_sam, SOURCE_MAN: 1.0}

    for n in range(n_views):
        rmap: RasterMap = raster_maps[n]
        cov = rmap.covered
        if not cov.any():
            continue
        fidx = rmap.face[cov]
        corners = mesh.faces[fidx].astype(np.int64)          # (P, 3)
        bary = rmap.bary[cov].astype(np.float64)             # (P, 3)
        for source, per_view in votes.items():
            vote: VoteImage | None = per_view[n]
            if vote is None:
                continue
            if vote.shape != (rmap.height, rmap.width):
                raise ValueError(
                    f"view {n} {source}: votes {vote.shape} vs raster "
                    f"{(rmap.height, rmap.width)}")
            coeff = coeffs[source] / n_views
            if source == SOURCE_SAM:
                sc = vote.scores[cov].astype(np.float64)
                if sc.shape[1] != n_labels:
                    raise ValueError(
                        f"view {n}: SAM scores carry {sc.shape[1]} labels, "
                        f"expected {n_labels}")
                _scatter_soft(table, corners, sc, coeff)
            else:
                lab = vote.labels[cov]
                if lab.max(initial=-1) >= n_labels:
                    raise ValueError(
                        f"view {n} {source}: label {int(lab.max())} outside "
                        f"0..{n_labels - 1}")
                if source == SOURCE_MAN:
                    w = np.full(lab.shape, weights.w_man)
                else:
                    w = bary  # (P, 3): per-corner barycentric weight
                _scatter_hard(table, corners, w, lab.astype(np.int64), coeff)
    return table


def normalize_unary(raw: np.ndarray) -> np.ndarray:
    """Min-max normalize each vertex row to [0, 1]; constant rows become 0.

    Keeps every row's argmin, so smoothing-free solutions are unchanged.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if not np.isfinite(raw).all():
        raise ValueError("unary table contains non-finite entries")
    lo = raw.min(axis=1, keepdims=True)
    span = raw.max(axis=1, keepdims=True) - lo
    out = np.zeros_like(raw)
    np.divide(raw - lo, span, out=out, where=span > 0)
    return out
