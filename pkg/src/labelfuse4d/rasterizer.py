"""Software rasterizer: per-pixel face/barycentric/depth coverage maps.

Pixel centers sit at (x + 0.5, y + 0.5).  Attributes use screen-space
barycentrics; depth is interpolated harmonically (1/z linear in screen
space), which equals the exact ray/triangle-plane intersection depth, so
z-buffer ordering matches ray casting.  No backface culling: scan
garments are open surfaces and the z-buffer alone resolves visibility.
Depth ties go to the lower face index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .scene_io import BACKGROUND, LabelFrame, TriMesh, ViewCamera

_Z_EPS = 1e-9


@dataclass(frozen=True)
class RasterMap:
    """Coverage of one view: face id (-1 empty), barycentrics, depth.

    Barycentric and depth values are only meaningful where ``face >= 0``.
    """

    face: np.ndarray   # (H, W) int32
    bary: np.ndarray   # (H, W, 3) float32
    depth: np.ndarray  # (H, W) float32, +inf where empty

    @property
    def height(self) -> int:
        return self.face.shape[0]

    @property
    def width(self) -> int:
        return self.face.shape[1]

    @property
    def covered(self) -> np.ndarray:
        return self.face >= 0


@njit(cache=True)
def _raster_kernel(px, py, pz, faces, width, height):  # pragma: no cover - jitted
    face_out = np.full((height, width), -1, dtype=np.int32)
    bary_out = np.zeros((height, width, 3), dtype=np.float32)
    depth_out = np.full((height, width), np.inf, dtype=np.float32)
    for f in range(faces.shape[0]):
        i0, i1, i2 = faces[f, 0], faces[f, 1], faces[f, 2]
        z0, z1, z2 = pz[i0], pz[i1], pz[i2]
        if z0 <= _Z_EPS or z1 <= _Z_EPS or z2 <= _Z_EPS:
            continue  # no near-plane clipping: drop faces touching the camera plane
        x0, y0 = px[i0], py[i0]
        x1, y1 = px[i1], py[i1]
        x2, y2 = px[i2], py[i2]
        area = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        if area == 0.0:
            continue
        xmin = min(x0, min(x1, x2))
        xmax = max(x0, max(x1, x2))
        ymin = min(y0, min(y1, y2))
        ymax = max(y0, max(y1, y2))
        ix0 = int(np.ceil(xmin - 0.5))
        ix1 = int(np.floor(xmax - 0.5))
        iy0 = int(np.ceil(ymin - 0.5))
        iy1 = int(np.floor(ymax - 0.5))
        if ix0 < 0:
            ix0 = 0
        if iy0 < 0:
            iy0 = 0
        if ix1 > width - 1:
            ix1 = width - 1
        if iy1 > height - 1:
            iy1 = height - 1
        for iy in range(iy0, iy1 + 1):
            pyc = iy + 0.5
            for ix in range(ix0, ix1 + 1):
                pxc = ix + 0.5
                w0 = (x2 - x1) * (pyc - y1) - (y2 - y1) * (pxc - x1)
                w1 = (x0 - x2) * (pyc - y2) - (y0 - y2) * (pxc - x2)
                w2 = (x1 - x0) * (pyc - y0) - (y1 - y0) * (pxc - x0)
                b0 = w0 / area
                b1 = w1 / area
                b2 = w2 / area
                if b0 >= 0.0 and b1 >= 0.0 and b2 >= 0.0:
                    zinv = b0 / z0 + b1 / z1 + b2 / z2
                    z = np.float32(1.0 / zinv)
                    # strict < keeps the first (lowest-index) face on ties
                    if z < depth_out[iy, ix]:
                        face_out[iy, ix] = f
                        bary_out[iy, ix, 0] = b0
                        bary_out[iy, ix, 1] = b1
                        bary_out[iy, ix, 2] = b2
                        depth_out[iy, ix] = z
    return face_out, bary_out, depth_out


def rasterize(mesh: TriMesh, camera: ViewCamera) -> RasterMap:
    """Z-buffered coverage of ``mesh`` seen from ``camera``."""
    pix, z = camera.project(mesh.vertices)
    # park behind-camera vertices at a harmless coordinate; the kernel
    # rejects their faces on depth alone
    bad = ~np.isfinite(pix).all(axis=1)
    if bad.any():
        pix = pix.copy()
        pix[bad] = 0.0
    face, bary, depth = _raster_kernel(
        np.ascontiguousarray(pix[:, 0]), np.ascontiguousarray(pix[:, 1]),
        np.ascontiguousarray(z), mesh.faces, camera.width, camera.height)
    return RasterMap(face, bary, depth)


def render_labels(rmap: RasterMap, mesh: TriMesh, labels) -> np.ndarray:
    """Project per-vertex labels into a label image.

    Each covered pixel takes the label of the face vertex with the
    largest barycentric coordinate; background pixels are -1.
    """
    lab = labels.labels if isinstance(labels, LabelFrame) else np.asarray(labels, np.int16)
    if lab.size != mesh.n_vertices:
        raise ValueError(f"{lab.size} labels for {mesh.n_vertices} vertices")
    out = np.full(rmap.face.shape, BACKGROUND, dtype=np.int16)
    cov = rmap.covered
    if cov.any():
        fidx = rmap.face[cov]
        corner = np.argmax(rmap.bary[cov], axis=1)  # first max -> deterministic
        verts = mesh.faces[fidx, corner]
        out[cov] = lab[verts]
    return out


def render_color(rmap: RasterMap, mesh: TriMesh) -> np.ndarray:
    """Barycentric interpolation of vertex colors; background black; float in [0,1]."""
    if mesh.colors is None:
        raise ValueError("mesh has no per-vertex colors")
    out = np.zeros((rmap.height, rmap.width, 3), dtype=np.float32)
    cov = rmap.covered
    if cov.any():
        fidx = rmap.face[cov]
        b = rmap.bary[cov].astype(np.float64)
        cols = mesh.colors[mesh.faces[fidx]]  # (P, 3 corners, 3 rgb)
        out[cov] = np.clip(np.einsum("pc,pcr->pr", b, cols), 0.0, 1.0)
    return out


def pixels_of_vertex(rmap: RasterMap, mesh: TriMesh, vertex: int
                     ) -> tuple[np.ndarray, np.ndarray]:
    """All covered pixels whose stored face contains ``vertex``.

    Returns an (K, 2) array of integer (x, y) pixels and the (K,) vertex
    barycentric weight at each.  Empty when the vertex is occluded
    everywhere in this view.
    """
    if not 0 <= vertex < mesh.n_vertices:
        raise ValueError(f"vertex {vertex} out of range 0..{mesh.n_vertices - 1}")
    ys, xs = np.nonzero(rmap.covered)
    if ys.size == 0:
        return np.empty((0, 2), np.int32), np.empty(0, np.float32)
    corners = mesh.faces[rmap.face[ys, xs]]        # (P, 3)
    hit = corners == vertex                        # at most one true per row
    rows = hit.any(axis=1)
    if not rows.any():
        return np.empty((0, 2), np.int32), np.empty(0, np.float32)
    which = np.argmax(hit[rows], axis=1)
    weights = rmap.bary[ys[rows], xs[rows], which]
    pixels = np.stack([xs[rows], ys[rows]], axis=1).astype(np.int32)
    return pixels, weights.astype(np.float32)
