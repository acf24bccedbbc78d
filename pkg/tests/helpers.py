"""Shared fixture builders: meshes, label images, evidence trees."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from labelfuse4d.scene_io import (
    DEFAULT_REGISTRY,
    SequenceManifest,
    TriMesh,
    ViewRig,
    build_rig,
    load_mesh,
    recenter,
    save_mesh,
)
from labelfuse4d.evidence import FlowField, MaskSet, save_label_png, write_flo, write_masks
from labelfuse4d.rasterizer import rasterize, render_labels


def _subdivide_sphere(base, faces, level: int, radius: float) -> TriMesh:
    """Midpoint-subdivide a closed triangulation, projecting onto the sphere."""
    verts = [tuple(v) for v in base]
    for _ in range(level):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(i: int, j: int) -> int:
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = np.asarray(verts[i]) + np.asarray(verts[j])
                m /= np.linalg.norm(m)
                cache[key] = len(verts)
                verts.append(tuple(m))
            return cache[key]

        nxt = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            nxt += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = nxt
    v = np.asarray(verts, dtype=np.float64) * radius
    f = np.asarray(faces, dtype=np.int32)
    return TriMesh(v, f)


def icosphere(level: int = 2, radius: float = 1.0) -> TriMesh:
    """Unit icosahedron subdivided `level` times, vertices pushed to the sphere."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    base = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=np.float64)
    base /= np.linalg.norm(base, axis=1, keepdims=True)
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    return _subdivide_sphere(base, faces, level, radius)


def octasphere(level: int = 2, radius: float = 1.0) -> TriMesh:
    """Subdivided octahedron.

    Unlike the icosphere, this sphere has exact edge rings in all three
    coordinate planes, so a hemisphere split by vertex sign follows mesh
    edges -- the natural ground truth for label-recovery scenes.
    """
    base = np.array([
        [1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1],
    ], dtype=np.float64)
    faces = [
        (0, 2, 4), (2, 1, 4), (1, 3, 4), (3, 0, 4),
        (2, 0, 5), (1, 2, 5), (3, 1, 5), (0, 3, 5),
    ]
    return _subdivide_sphere(base, faces, level, radius)


def axis_rig(dist: float, size: int = 16, n_views: int = 4) -> ViewRig:
    """Tiny hand-built rig: cameras on -z, +z, +x, -x looking at the origin.

    Rotations are exact axis permutations/flips, so these cameras are
    handy for small worked examples at any image size.
    """
    from labelfuse4d.scene_io import ViewCamera

    rs = [
        np.eye(3),                                              # from -z
        np.array([[-1.0, 0, 0], [0, 1, 0], [0, 0, -1]]),        # from +z
        np.array([[0.0, 0, 1], [0, 1, 0], [-1, 0, 0]]),         # from +x
        np.array([[0.0, 0, -1], [0, 1, 0], [1, 0, 0]]),         # from -x
    ]
    half = size / 2.0
    cams = [ViewCamera(r, np.array([0.0, 0.0, dist]), float(size), float(size),
                       half, half, size, size) for r in rs[:n_views]]
    return ViewRig(tuple(cams), float(dist), 0.0, np.zeros(3))


def hemisphere_labels(mesh: TriMesh, upper: int = 3, lower: int = 4
                      ) -> np.ndarray:
    """Split labels by the sign of y (measured from the vertex centroid)."""
    y = mesh.vertices[:, 1] - mesh.vertices[:, 1].mean()
    return np.where(y >= 0, upper, lower).astype(np.int16)


def random_blob_mesh(rng: np.random.Generator, n_points: int = 24) -> TriMesh:
    """Convex hull of random points: a closed random mesh, no degenerate faces."""
    from scipy.spatial import ConvexHull

    pts = rng.normal(size=(n_points, 3))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    pts *= rng.uniform(0.6, 1.0, size=(n_points, 1))
    hull = ConvexHull(pts)
    verts = pts[hull.vertices]
    remap = {old: new for new, old in enumerate(hull.vertices)}
    faces = np.array([[remap[i] for i in s] for s in hull.simplices],
                     dtype=np.int32)
    return TriMesh(verts, faces)


def corrupt_labels(img: np.ndarray, frac: float, rng: np.random.Generator,
                   n_labels: int = 6) -> np.ndarray:
    """Replace a fraction of foreground pixels with a different random label."""
    out = img.copy()
    ys, xs = np.nonzero(img >= 0)
    n_bad = int(round(frac * len(ys)))
    if n_bad == 0:
        return out
    pick = rng.choice(len(ys), size=n_bad, replace=False)
    for idx in pick:
        y, x = ys[idx], xs[idx]
        choices = [l for l in range(n_labels) if l != img[y, x]]
        out[y, x] = rng.choice(choices)
    return out


def static_sequence(root, n_frames: int = 2, *, level: int = 3,
                    noise: float = 0.0, with_flow: bool = True,
                    with_masks: bool = False, colors: bool = False,
                    seed: int = 0):
    """Hemisphere-labeled octasphere repeated over identical frames.

    The octasphere's edge-ring equator makes the hemisphere split a
    stable energy minimum, so clean evidence recovers it exactly.
    Returns (manifest, per-vertex truth).
    """
    mesh = octasphere(level=level)
    if colors:
        rgb = (mesh.vertices + 1.0) / 2.0
        mesh = TriMesh(mesh.vertices, mesh.faces, rgb)
    truth = hemisphere_labels(mesh)
    path = build_sequence_fixture(root, [mesh] * n_frames, [truth] * n_frames,
                                  noise=noise, seed=seed, with_flow=with_flow,
                                  with_masks=with_masks)
    return SequenceManifest.load(path), truth


def paint_region(manifest, truth, old_label: int, new_label: int,
                 views=(0, 6), frame: int = 1) -> int:
    """Brush every pixel rendered as old_label in the given views.

    Writes overlay files under manual/{frame}/ and returns the vertex
    with the strongest painted coverage -- guaranteed to sit well inside
    the corrected region.
    """
    from labelfuse4d.evidence import RectificationOverlay, save_overlay
    from labelfuse4d.pipeline import FrameContext
    from labelfuse4d.rasterizer import pixels_of_vertex

    rig = fixture_rig(manifest)
    mesh, _ = recenter(load_mesh(manifest.mesh_path(frame)))
    ctx = FrameContext.build(mesh, rig)
    weight = np.zeros(mesh.n_vertices)
    for n in views:
        img = render_truth(ctx.mesh, truth, rig, n)
        ys, xs = np.nonzero(img == old_label)
        entries = np.stack([xs, ys, np.full_like(xs, new_label)], axis=1)
        save_overlay(RectificationOverlay(entries),
                     manifest.manual_path(frame, n))
        painted = set(zip(xs.tolist(), ys.tolist()))
        for v in np.nonzero(truth == old_label)[0]:
            pixels, w = pixels_of_vertex(ctx.maps[n], mesh, int(v))
            for (x, y), u in zip(pixels, w):
                if (int(x), int(y)) in painted:
                    weight[v] += float(u)
    return int(np.argmax(weight))


def rotate_y(mesh: TriMesh, degrees: float) -> TriMesh:
    a = np.deg2rad(degrees)
    rot = np.array([[np.cos(a), 0, np.sin(a)],
                    [0, 1, 0],
                    [-np.sin(a), 0, np.cos(a)]])
    return TriMesh(mesh.vertices @ rot.T, mesh.faces, mesh.colors)


def exact_flow(prev_mesh: TriMesh, next_mesh: TriMesh, rig: ViewRig,
               view: int) -> np.ndarray:
    """Ground-truth flow for deforming geometry, from the previous frame's raster."""
    cam = rig.cameras[view]
    rmap = rasterize(prev_mesh, cam)
    flow = np.zeros((cam.height, cam.width, 2), dtype=np.float32)
    ys, xs = np.nonzero(rmap.face >= 0)
    if len(ys):
        corners = prev_mesh.faces[rmap.face[ys, xs]]
        bary = rmap.bary[ys, xs]
        moved = np.einsum("pc,pcx->px", bary, next_mesh.vertices[corners])
        proj, _ = cam.project(moved)
        flow[ys, xs, 0] = proj[:, 0] - (xs + 0.5)
        flow[ys, xs, 1] = proj[:, 1] - (ys + 0.5)
    return flow


def render_truth(mesh: TriMesh, labels: np.ndarray, rig: ViewRig,
                 view: int) -> np.ndarray:
    return render_labels(rasterize(mesh, rig.cameras[view]), mesh, labels)


def write_manifest(root: Path, n_frames: int, *, image_size: int = 64,
                   extra: dict | None = None) -> Path:
    doc = {
        "sequence": "fixture",
        "frames": [{"index": k, "mesh": f"meshes/{k}.ply"}
                   for k in range(1, n_frames + 1)],
        "evidence_root": "evidence",
        "output_root": "out",
        "rig": {"image_size": image_size, "elevation_deg": 35.0,
                "focal": float(image_size), "fill": 0.9, "radius": "auto"},
    }
    if extra:
        doc["rig"].update(extra.pop("rig", {}))
        doc.update(extra)
    path = root / "manifest.json"
    path.write_text(json.dumps(doc, indent=2))
    return path


def fixture_rig(manifest: SequenceManifest) -> ViewRig:
    """The rig the pipeline itself would build: from frame 1, centered at 0."""
    first, _ = recenter(load_mesh(manifest.mesh_path(1)))
    return build_rig(np.zeros(3), manifest.rig_radius(first.bounding_radius()),
                     elevation_deg=manifest.elevation_deg,
                     image_size=manifest.image_size, focal=manifest.focal)


def build_sequence_fixture(root: Path, meshes: list[TriMesh],
                           truth: list[np.ndarray], *,
                           image_size: int = 64,
                           noise: float = 0.0,
                           seed: int = 0,
                           with_flow: bool = False,
                           with_masks: bool = False) -> Path:
    """Write a full evidence tree for a mesh sequence with painted truth labels.

    Parser images are rendered ground truth (optionally corrupted), flow
    is exact correspondence flow, masks are the true per-label regions.
    Returns the manifest path.
    """
    rng = np.random.default_rng(seed)
    n_frames = len(meshes)
    (root / "meshes").mkdir(parents=True, exist_ok=True)
    for k, mesh in enumerate(meshes, start=1):
        save_mesh(mesh, root / "meshes" / f"{k}.ply")
    manifest_path = write_manifest(root, n_frames, image_size=image_size)
    manifest = SequenceManifest.load(manifest_path)

    centered = [recenter(m)[0] for m in meshes]
    rig = build_rig(np.zeros(3),
                    manifest.rig_radius(centered[0].bounding_radius()),
                    elevation_deg=manifest.elevation_deg,
                    image_size=manifest.image_size, focal=manifest.focal)
    for k in range(1, n_frames + 1):
        mesh = centered[k - 1]
        par_dir = root / "evidence" / "par" / str(k)
        par_dir.mkdir(parents=True, exist_ok=True)
        for n in range(len(rig)):
            img = render_truth(mesh, truth[k - 1], rig, n)
            if noise > 0:
                img = corrupt_labels(img, noise, rng)
            save_label_png(img, par_dir / f"{n}.png", DEFAULT_REGISTRY)
        if with_flow and k >= 2:
            for n in range(len(rig)):
                fl = exact_flow(centered[k - 2], mesh, rig, n)
                write_flo(FlowField(fl),
                          root / "evidence" / "flow" / str(k) / f"{n}.flo")
        if with_masks:
            for n in range(len(rig)):
                img = render_truth(mesh, truth[k - 1], rig, n)
                layers = [img == lab for lab in np.unique(img) if lab >= 0]
                stack = (np.stack(layers) if layers
                         else np.zeros((0,) + img.shape, bool))
                write_masks(MaskSet(stack),
                            root / "evidence" / "masks" / str(k) / f"{n}.json")
    return manifest_path
