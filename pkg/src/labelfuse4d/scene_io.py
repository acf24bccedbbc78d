"""Scene I/O: meshes, per-vertex label frames, the 24-view camera rig, and
sequence manifests.

Meshes arrive as PLY (binary or ASCII) or OBJ with optional per-vertex
colors.  Label frames are stored as a small binary format (magic ``L4DL``,
u32 count, int16 little-endian payload) or as newline-separated decimal
text; the loader auto-detects.  The manifest is a JSON document tying a
frame sequence to its evidence and output trees.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

BACKGROUND = -1

L4DL_MAGIC = b"L4DL"

DEFAULT_ELEVATION_DEG = 35.0
DEFAULT_IMAGE_SIZE = 512
DEFAULT_FILL = 0.9


class MeshError(ValueError):
    """Unreadable or structurally invalid mesh / label-frame data."""


class ManifestError(ValueError):
    """Missing, malformed, or inconsistent sequence manifest."""


# ---------------------------------------------------------------------------
# label registry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LabelSpec:
    """One optimizable label: contiguous id, display name, palette color."""

    id: int
    name: str
    color: tuple[int, int, int]


class LabelRegistry:
    """Ordered label set with contiguous ids 0..L-1.

    Id -1 is the implicit background/"other" bucket: it never appears as
    an optimization target and renders as palette index 255.
    """

    def __init__(self, labels):
        labels = [l if isinstance(l, LabelSpec) else LabelSpec(*l) for l in labels]
        if not labels:
            raise ManifestError("label registry is empty")
        ids = [s.id for s in labels]
        if ids != list(range(len(labels))):
            raise ManifestError(f"label ids must be contiguous from 0, got {ids}")
        names = [s.name for s in labels]
        if len(set(names)) != len(names):
            raise ManifestError(f"duplicate label names: {sorted(names)}")
        self.labels = labels

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)

    def __eq__(self, other) -> bool:
        return isinstance(other, LabelRegistry) and self.labels == other.labels

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.labels]

    def name_of(self, label_id: int) -> str:
        if label_id == BACKGROUND:
            return "other"
        return self.labels[label_id].name

    def palette(self) -> np.ndarray:
        """256x3 uint8 palette for indexed PNGs; index 255 is background."""
        pal = np.zeros((256, 3), dtype=np.uint8)
        for spec in self.labels:
            pal[spec.id] = spec.color
        pal[255] = (255, 255, 255)
        return pal

    def to_json(self):
        return [{"id": s.id, "name": s.name, "color": list(s.color)} for s in self.labels]

    @classmethod
    def from_json(cls, obj) -> "LabelRegistry":
        try:
            specs = [LabelSpec(int(e["id"]), str(e["name"]), tuple(int(c) for c in e["color"]))
                     for e in obj]
        except (KeyError, TypeError, ValueError) as exc:
            raise ManifestError(f"bad label registry entry: {exc}") from exc
        return cls(specs)


DEFAULT_REGISTRY = LabelRegistry([
    LabelSpec(0, "skin", (247, 195, 156)),
    LabelSpec(1, "hair", (90, 55, 25)),
    LabelSpec(2, "shoe", (50, 50, 200)),
    LabelSpec(3, "upper", (220, 60, 60)),
    LabelSpec(4, "lower", (60, 170, 80)),
    LabelSpec(5, "outer", (240, 200, 60)),
])


# ---------------------------------------------------------------------------
# triangle mesh
# ---------------------------------------------------------------------------

@dataclass
class TriMesh:
    """Triangle mesh with optional per-vertex RGB colors in [0, 1]."""

    vertices: np.ndarray
    faces: np.ndarray
    colors: np.ndarray | None = None

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64))
        f = np.ascontiguousarray(np.asarray(self.faces, dtype=np.int32))
        if v.ndim != 2 or v.shape[1] != 3 or v.shape[0] == 0:
            raise MeshError(f"vertices must be a non-empty (N, 3) array, got shape {v.shape}")
        if f.ndim != 2 or f.shape[1] != 3 or f.shape[0] == 0:
            raise MeshError(f"faces must be a non-empty (M, 3) array, got shape {f.shape}")
        if not np.isfinite(v).all():
            raise MeshError("mesh has non-finite vertex coordinates")
        if f.min() < 0 or f.max() >= v.shape[0]:
            raise MeshError(
                f"face index out of range: valid ids are 0..{v.shape[0] - 1}, "
                f"found {f.min()}..{f.max()}")
        degen = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
        if degen.any():
            raise MeshError(f"face {int(np.nonzero(degen)[0][0])} repeats a vertex")
        self.vertices = v
        self.faces = f
        if self.colors is not None:
            c = np.ascontiguousarray(np.asarray(self.colors, dtype=np.float64))
            if c.shape != (v.shape[0], 3):
                raise MeshError(f"colors must be (N, 3), got {c.shape}")
            if not np.isfinite(c).all() or c.min() < -1e-9 or c.max() > 1 + 1e-9:
                raise MeshError("vertex colors must be finite and in [0, 1]")
            self.colors = np.clip(c, 0.0, 1.0)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_faces(self) -> int:
        return self.faces.shape[0]

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def bounding_radius(self) -> float:
        """Radius of the bounding sphere centered at the bbox center."""
        lo, hi = self.bbox()
        center = 0.5 * (lo + hi)
        return float(np.linalg.norm(self.vertices - center, axis=1).max())


def recenter(mesh: TriMesh) -> tuple[TriMesh, np.ndarray]:
    """Translate so the axis-aligned bbox center sits at the origin.

    Returns the shifted mesh and the offset that restores the original
    coordinates (``shifted.vertices + offset == mesh.vertices``).
    """
    lo, hi = mesh.bbox()
    offset = 0.5 * (lo + hi)
    return TriMesh(mesh.vertices - offset, mesh.faces, mesh.colors), offset


# ---------------------------------------------------------------------------
# adjacency
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AdjacencyGraph:
    """Unique unordered mesh edges, rows (i, j) with i < j, lexicographically sorted."""

    n_vertices: int
    edges: np.ndarray

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    def has_edge(self, i: int, j: int) -> bool:
        if i == j:
            return False
        a, b = (i, j) if i < j else (j, i)
        key = a * self.n_vertices + b
        keys = self.edges[:, 0].astype(np.int64) * self.n_vertices + self.edges[:, 1]
        pos = np.searchsorted(keys, key)
        return bool(pos < keys.size and keys[pos] == key)


def build_adjacency(mesh: TriMesh) -> AdjacencyGraph:
    """One edge per unique unordered vertex pair sharing a face edge."""
    f = mesh.faces.astype(np.int64)
    pairs = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    pairs.sort(axis=1)
    keys = np.unique(pairs[:, 0] * mesh.n_vertices + pairs[:, 1])
    edges = np.stack([keys // mesh.n_vertices, keys % mesh.n_vertices], axis=1)
    return AdjacencyGraph(mesh.n_vertices, edges.astype(np.int32))


# ---------------------------------------------------------------------------
# label frames
# ---------------------------------------------------------------------------

@dataclass
class LabelFrame:
    """Per-vertex label assignment for one frame of the sequence."""

    labels: np.ndarray
    frame_index: int = 0

    def __post_init__(self):
        lab = np.ascontiguousarray(np.asarray(self.labels, dtype=np.int16))
        if lab.ndim != 1 or lab.size == 0:
            raise MeshError(f"labels must be a non-empty 1-D array, got shape {lab.shape}")
        if lab.min() < BACKGROUND:
            raise MeshError(f"label id {int(lab.min())} below the background id -1")
        self.labels = lab

    def __len__(self) -> int:
        return self.labels.size


def save_label_frame(frame, path) -> None:
    labels = frame.labels if isinstance(frame, LabelFrame) else np.asarray(frame, np.int16)
    labels = labels.astype("<i2")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(L4DL_MAGIC)
        fh.write(struct.pack("<I", labels.size))
        fh.write(labels.tobytes())


def load_label_frame(path, expected_count: int | None = None,
                     frame_index: int = 0) -> LabelFrame:
    """Read a label frame, auto-detecting binary vs. decimal-text form."""
    path = Path(path)
    if not path.is_file():
        raise MeshError(f"label file not found: {path}")
    data = path.read_bytes()
    if data[:4] == L4DL_MAGIC:
        if len(data) < 8:
            raise MeshError(f"{path}: truncated header")
        (count,) = struct.unpack("<I", data[4:8])
        payload = data[8:]
        if len(payload) != 2 * count:
            raise MeshError(
                f"{path}: header declares {count} labels but payload holds "
                f"{len(payload) // 2}")
        labels = np.frombuffer(payload, dtype="<i2").astype(np.int16)
    else:
        try:
            tokens = data.decode("utf-8").split()
            labels = np.array([int(t) for t in tokens], dtype=np.int16)
        except (UnicodeDecodeError, ValueError) as exc:
            raise MeshError(f"{path}: not a label file ({exc})") from exc
    if labels.size == 0:
        raise MeshError(f"{path}: empty label file")
    if expected_count is not None and labels.size != expected_count:
        raise MeshError(
            f"{path}: {labels.size} labels for a mesh with {expected_count} vertices")
    return LabelFrame(labels, frame_index)


# ---------------------------------------------------------------------------
# PLY
# ---------------------------------------------------------------------------

_PLY_SCALARS = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}

_STRUCT_CODES = {"i1": "b", "u1": "B", "i2": "h", "u2": "H",
                 "i4": "i", "u4": "I", "f4": "f", "f8": "d"}


def _parse_ply_header(raw: bytes):
    if not raw.startswith(b"ply"):
        raise MeshError("missing 'ply' magic")
    end = raw.find(b"end_header")
    if end < 0:
        raise MeshError("missing end_header")
    body_start = raw.index(b"\n", end) + 1
    lines = raw[:end].decode("ascii", "replace").splitlines()
    fmt = None
    elements = []  # [name, count, [(prop_name, dtype_str | ("list", cdt, idt))]]
    for line in lines[1:]:
        parts = line.split()
        if not parts or parts[0] in ("comment", "obj_info"):
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            elements.append([parts[1], int(parts[2]), []])
        elif parts[0] == "property":
            if not elements:
                raise MeshError("property before any element")
            try:
                if parts[1] == "list":
                    elements[-1][2].append(
                        (parts[4], ("list", _PLY_SCALARS[parts[2]], _PLY_SCALARS[parts[3]])))
                else:
                    elements[-1][2].append((parts[2], _PLY_SCALARS[parts[1]]))
            except KeyError as exc:
                raise MeshError(f"unknown property type in {line!r}") from exc
    if fmt not in ("ascii", "binary_little_endian", "binary_big_endian"):
        raise MeshError(f"unsupported format {fmt!r}")
    return fmt, elements, body_start


def _read_binary_records(buf: bytes, offset: int, count: int, props, endian: str):
    """Generic record walker for binary elements containing list properties."""
    out = []
    for _ in range(count):
        rec = {}
        for name, kind in props:
            if isinstance(kind, tuple):
                _, cdt, idt = kind
                (n,) = struct.unpack_from(endian + _STRUCT_CODES[cdt], buf, offset)
                offset += struct.calcsize(_STRUCT_CODES[cdt])
                vals = struct.unpack_from(endian + str(int(n)) + _STRUCT_CODES[idt], buf, offset)
                offset += n * struct.calcsize(_STRUCT_CODES[idt])
                rec[name] = vals
            else:
                (v,) = struct.unpack_from(endian + _STRUCT_CODES[kind], buf, offset)
                offset += struct.calcsize(_STRUCT_CODES[kind])
                rec[name] = v
        out.append(rec)
    return out, offset


def _triangulate(polys) -> np.ndarray:
    """Fan-triangulate polygon index lists into an (M, 3) face array."""
    tris = []
    for poly in polys:
        if len(poly) < 3:
            raise MeshError(f"face with {len(poly)} indices")
        for i in range(1, len(poly) - 1):
            tris.append((poly[0], poly[i], poly[i + 1]))
    return np.asarray(tris, dtype=np.int64)


def _extract_vertex_arrays(names, columns):
    try:
        v = np.stack([columns[names.index(ax)] for ax in "xyz"], axis=1).astype(np.float64)
    except ValueError as exc:
        raise MeshError("vertex element lacks x/y/z") from exc
    colors = None
    if all(ch in names for ch in ("red", "green", "blue")):
        c = np.stack([columns[names.index(ch)] for ch in ("red", "green", "blue")], axis=1)
        c = c.astype(np.float64)
        if c.max(initial=0.0) > 1.0 + 1e-9:  # uchar-coded
            c = c / 255.0
        colors = c
    return v, colors


def _load_ply(path: Path) -> TriMesh:
    raw = path.read_bytes()
    fmt, elements, offset = _parse_ply_header(raw)
    vertices = colors = None
    polys = None

    if fmt == "ascii":
        tokens = raw[offset:].decode("ascii", "replace").split()
        pos = 0
        for name, count, props in elements:
            scalar_only = all(not isinstance(k, tuple) for _, k in props)
            if name == "vertex":
                if not scalar_only:
                    raise MeshError("list-typed vertex properties are not supported")
                w = len(props)
                try:
                    block = np.array(tokens[pos:pos + count * w], dtype=np.float64)
                except ValueError as exc:
                    raise MeshError(f"bad vertex data: {exc}") from exc
                if block.size != count * w:
                    raise MeshError("vertex element shorter than declared")
                block = block.reshape(count, w)
                vertices, colors = _extract_vertex_arrays(
                    [n for n, _ in props], [block[:, i] for i in range(w)])
                pos += count * w
            else:
                rows = []
                for _ in range(count):
                    rec = {}
                    for pname, kind in props:
                        if isinstance(kind, tuple):
                            n = int(float(tokens[pos])); pos += 1
                            rec[pname] = [int(float(t)) for t in tokens[pos:pos + n]]
                            if len(rec[pname]) != n:
                                raise MeshError("face element shorter than declared")
                            pos += n
                        else:
                            rec[pname] = float(tokens[pos]); pos += 1
                    rows.append(rec)
                if name == "face":
                    polys = [r.get("vertex_indices", r.get("vertex_index"))
                             for r in rows]
    else:
        endian = "<" if fmt == "binary_little_endian" else ">"
        buf = raw
        for name, count, props in elements:
            scalar_only = all(not isinstance(k, tuple) for _, k in props)
            if scalar_only:
                dtype = np.dtype([(pn, endian + k) for pn, k in props])
                if len(buf) - offset < dtype.itemsize * count:
                    raise MeshError(f"element {name!r} truncated")
                arr = np.frombuffer(buf, dtype=dtype, count=count, offset=offset)
                offset += dtype.itemsize * count
                if name == "vertex":
                    vertices, colors = _extract_vertex_arrays(
                        [pn for pn, _ in props],
                        [arr[pn].astype(np.float64) for pn, _ in props])
            elif name == "face" and len(props) == 1:
                # fast path: a single list property with (almost always) 3 indices
                pname, (_, cdt, idt) = props[0]
                head = np.frombuffer(buf, dtype=endian + cdt, count=1, offset=offset)
                n0 = int(head[0])
                rec = np.dtype([("n", endian + cdt), ("v", endian + idt, (n0,))])
                if len(buf) - offset >= rec.itemsize * count:
                    arr = np.frombuffer(buf, dtype=rec, count=count, offset=offset)
                    if (arr["n"] == n0).all():
                        offset += rec.itemsize * count
                        polys = arr["v"].astype(np.int64)
                        continue
                rows, offset = _read_binary_records(buf, offset, count, props, endian)
                polys = [r[pname] for r in rows]
            else:
                rows, offset = _read_binary_records(buf, offset, count, props, endian)
                if name == "face":
                    polys = [r.get("vertex_indices", r.get("vertex_index")) for r in rows]

    if vertices is None:
        raise MeshError("no vertex element")
    if polys is None or len(polys) == 0:
        raise MeshError("no face element")
    if isinstance(polys, np.ndarray) and polys.ndim == 2 and polys.shape[1] == 3:
        faces = polys
    else:
        faces = _triangulate(polys)
    return TriMesh(vertices, faces, colors)


def _save_ply(mesh: TriMesh, path: Path, text: bool) -> None:
    has_color = mesh.colors is not None
    with open(path, "wb") as fh:
        fh.write(b"ply\n")
        fh.write(b"format ascii 1.0\n" if text else b"format binary_little_endian 1.0\n")
        fh.write(f"element vertex {mesh.n_vertices}\n".encode())
        kind = b"float" if text else b"double"
        for ax in (b"x", b"y", b"z"):
            fh.write(b"property " + kind + b" " + ax + b"\n")
        if has_color:
            for ch in (b"red", b"green", b"blue"):
                fh.write(b"property uchar " + ch + b"\n")
        fh.write(f"element face {mesh.n_faces}\n".encode())
        fh.write(b"property list uchar int vertex_indices\n")
        fh.write(b"end_header\n")
        if text:
            cols = (np.rint(mesh.colors * 255).astype(np.uint8)
                    if has_color else None)
            lines = []
            for i, v in enumerate(mesh.vertices):
                row = f"{v[0]:.9g} {v[1]:.9g} {v[2]:.9g}"
                if cols is not None:
                    row += f" {cols[i, 0]} {cols[i, 1]} {cols[i, 2]}"
                lines.append(row)
            for f in mesh.faces:
                lines.append(f"3 {f[0]} {f[1]} {f[2]}")
            fh.write(("\n".join(lines) + "\n").encode())
        else:
            if has_color:
                vdt = np.dtype([("x", "<f8"), ("y", "<f8"), ("z", "<f8"),
                                ("r", "u1"), ("g", "u1"), ("b", "u1")])
                varr = np.empty(mesh.n_vertices, dtype=vdt)
                cols = np.rint(mesh.colors * 255).astype(np.uint8)
                varr["r"], varr["g"], varr["b"] = cols[:, 0], cols[:, 1], cols[:, 2]
            else:
                vdt = np.dtype([("x", "<f8"), ("y", "<f8"), ("z", "<f8")])
                varr = np.empty(mesh.n_vertices, dtype=vdt)
            varr["x"], varr["y"], varr["z"] = (mesh.vertices[:, 0],
                                               mesh.vertices[:, 1],
                                               mesh.vertices[:, 2])
            fh.write(varr.tobytes())
            fdt = np.dtype([("n", "u1"), ("v", "<i4", (3,))])
            farr = np.empty(mesh.n_faces, dtype=fdt)
            farr["n"] = 3
            farr["v"] = mesh.faces
            fh.write(farr.tobytes())


# ---------------------------------------------------------------------------
# OBJ
# ---------------------------------------------------------------------------

def _load_obj(path: Path) -> TriMesh:
    verts: list[tuple] = []
    colors: list[tuple] = []
    polys: list[list[int]] = []
    for ln, line in enumerate(path.read_text().splitlines(), 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "v":
            try:
                nums = [float(t) for t in parts[1:]]
            except ValueError as exc:
                raise MeshError(f"{path}:{ln}: bad vertex line") from exc
            if len(nums) < 3:
                raise MeshError(f"{path}:{ln}: vertex needs 3 coordinates")
            verts.append(tuple(nums[:3]))
            if len(nums) >= 6:
                colors.append(tuple(nums[3:6]))
        elif parts[0] == "f":
            idx = []
            for ref in parts[1:]:
                tok = ref.split("/")[0]
                try:
                    i = int(tok)
                except ValueError as exc:
                    raise MeshError(f"{path}:{ln}: bad face index {tok!r}") from exc
                if i == 0:
                    raise MeshError(f"{path}:{ln}: OBJ indices are 1-based, got 0")
                idx.append(i - 1 if i > 0 else len(verts) + i)
            polys.append(idx)
    if not verts:
        raise MeshError(f"{path}: no vertices")
    if not polys:
        raise MeshError(f"{path}: no faces")
    col = np.asarray(colors) if len(colors) == len(verts) else None
    return TriMesh(np.asarray(verts), _triangulate(polys), col)


def _save_obj(mesh: TriMesh, path: Path) -> None:
    lines = []
    if mesh.colors is not None:
        for v, c in zip(mesh.vertices, mesh.colors):
            lines.append(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g} "
                         f"{c[0]:.9g} {c[1]:.9g} {c[2]:.9g}")
    else:
        for v in mesh.vertices:
            lines.append(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}")
    for f in mesh.faces:
        lines.append(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}")
    path.write_text("\n".join(lines) + "\n")


def load_mesh(path) -> TriMesh:
    """Load a PLY or OBJ file into a validated TriMesh."""
    path = Path(path)
    if not path.is_file():
        raise MeshError(f"mesh file not found: {path}")
    suffix = path.suffix.lower()
    try:
        if suffix == ".obj":
            return _load_obj(path)
        if suffix == ".ply" or path.open("rb").read(3) == b"ply":
            return _load_ply(path)
    except MeshError as exc:
        raise MeshError(f"{path}: {exc}") from exc
    except (struct.error, ValueError, IndexError) as exc:
        raise MeshError(f"{path}: parse failure: {exc}") from exc
    raise MeshError(f"{path}: unrecognized mesh format")


def save_mesh(mesh: TriMesh, path, *, text: bool = False) -> None:
    """Write PLY (binary by default, ASCII with ``text=True``) or OBJ."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix.lower() == ".obj":
        _save_obj(mesh, path)
    else:
        _save_ply(mesh, path, text)


# ---------------------------------------------------------------------------
# camera rig
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ViewCamera:
    """Pinhole camera: x right, y down, z forward; X_cam = R @ X_world + t."""

    rotation: np.ndarray
    translation: np.ndarray
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if np.abs(R @ R.T - np.eye(3)).max() > 1e-6:
            raise ValueError("camera rotation is not orthonormal")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("image size must be positive")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @property
    def position(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.rotation.T @ self.translation

    @property
    def forward(self) -> np.ndarray:
        """World-space optical axis (unit)."""
        return self.rotation[2]

    def project(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Project world points; returns pixel coordinates and camera-frame depth.

        Points at or behind the camera plane get non-finite pixel values;
        callers must gate on the returned depth.
        """
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        cam = pts @ self.rotation.T + self.translation
        z = cam[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            px = self.fx * cam[:, 0] / z + self.cx
            py = self.fy * cam[:, 1] / z + self.cy
        return np.stack([px, py], axis=1), z


@dataclass(frozen=True)
class ViewRig:
    """Ordered camera list: 12 horizontal, 6 upper, 6 lower."""

    cameras: tuple
    radius: float
    elevation_deg: float
    center: np.ndarray

    def __len__(self) -> int:
        return len(self.cameras)

    def __iter__(self):
        return iter(self.cameras)

    def __getitem__(self, n: int) -> ViewCamera:
        return self.cameras[n]

    @property
    def image_size(self) -> int:
        return self.cameras[0].width


def _look_at(eye: np.ndarray, target: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    fwd = target - eye
    fwd = fwd / np.linalg.norm(fwd)
    up = np.array([0.0, 1.0, 0.0])
    if abs(fwd @ up) > 1.0 - 1e-8:
        up = np.array([0.0, 0.0, 1.0])
    right = np.cross(fwd, up)
    right = right / np.linalg.norm(right)
    down = np.cross(fwd, right)
    R = np.stack([right, down, fwd])
    return R, -R @ eye


def fit_radius(bounding_radius: float, *, focal: float, image_size: int,
               fill: float = DEFAULT_FILL) -> float:
    """Camera distance at which a bounding sphere spans ``fill`` of the image height."""
    if bounding_radius <= 0:
        raise ValueError("bounding radius must be positive (degenerate mesh?)")
    return float(bounding_radius * np.sqrt(1.0 + (2.0 * focal / (fill * image_size)) ** 2))


def build_rig(center, radius: float, *, elevation_deg: float = DEFAULT_ELEVATION_DEG,
              image_size: int = DEFAULT_IMAGE_SIZE, focal: float | None = None) -> ViewRig:
    """Build the canonical 24-camera rig on a sphere around ``center``.

    12 cameras on the equator every 30 deg, 6 at +elevation every 60 deg,
    and 6 at -elevation every 60 deg (staggered 30 deg against the upper
    ring).  All cameras look at ``center``.
    """
    if radius <= 0:
        raise ValueError(f"rig radius must be positive, got {radius}")
    if image_size < 64:
        raise ValueError(f"image size must be >= 64, got {image_size}")
    if focal is None:
        focal = float(image_size)
    if focal <= 0:
        raise ValueError(f"focal must be positive, got {focal}")
    center = np.asarray(center, dtype=np.float64).reshape(3)
    rings = (
        [(az, 0.0) for az in np.arange(12) * 30.0]
        + [(az, elevation_deg) for az in np.arange(6) * 60.0]
        + [(az + 30.0, -elevation_deg) for az in np.arange(6) * 60.0]
    )
    half = image_size / 2.0
    cams = []
    for az_deg, el_deg in rings:
        az, el = np.radians(az_deg), np.radians(el_deg)
        direction = np.array([np.sin(az) * np.cos(el), np.sin(el), np.cos(az) * np.cos(el)])
        eye = center + radius * direction
        R, t = _look_at(eye, center)
        cams.append(ViewCamera(R, t, focal, focal, half, half, image_size, image_size))
    return ViewRig(tuple(cams), float(radius), float(elevation_deg), center)


# ---------------------------------------------------------------------------
# sequence manifest
# ---------------------------------------------------------------------------

@dataclass
class FrameEntry:
    index: int
    mesh: Path


@dataclass
class SequenceManifest:
    """Frame list plus registry, rig parameters, and evidence/output roots.

    Evidence files are discovered lazily per frame/view; mesh paths are
    checked at load time.
    """

    root: Path
    frames: list[FrameEntry]
    registry: LabelRegistry
    rig: dict = field(default_factory=dict)
    evidence_root: Path = Path("evidence")
    output_root: Path = Path("output")

    @classmethod
    def load(cls, path, *, require_meshes: bool = True) -> "SequenceManifest":
        path = Path(path)
        if not path.is_file():
            raise ManifestError(f"manifest not found: {path}")
        try:
            doc = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ManifestError(f"{path}: unreadable manifest: {exc}") from exc
        if not isinstance(doc, dict):
            raise ManifestError(f"{path}: manifest must be a JSON object")
        root = path.parent.resolve()

        raw_frames = doc.get("frames")
        if not isinstance(raw_frames, list) or not raw_frames:
            raise ManifestError(f"{path}: manifest has no frames")
        frames = []
        for rec in raw_frames:
            try:
                frames.append(FrameEntry(int(rec["index"]), Path(rec["mesh"])))
            except (KeyError, TypeError, ValueError) as exc:
                raise ManifestError(f"{path}: bad frame record {rec!r}") from exc
        indices = [f.index for f in frames]
        if indices != list(range(1, len(frames) + 1)):
            raise ManifestError(
                f"{path}: frame indices must be consecutive from 1, got {indices}")

        registry = (LabelRegistry.from_json(doc["labels"])
                    if "labels" in doc else DEFAULT_REGISTRY)
        rig = dict(doc.get("rig", {}))
        manifest = cls(
            root=root,
            frames=frames,
            registry=registry,
            rig=rig,
            evidence_root=root / doc.get("evidence_root", "evidence"),
            output_root=root / doc.get("output_root", "output"),
        )
        if require_meshes:
            for f in manifest.frames:
                p = manifest.mesh_path(f.index)
                if not p.is_file():
                    raise ManifestError(f"{path}: frame {f.index} mesh missing: {p}")
        return manifest

    def save(self, path) -> None:
        doc = {
            "frames": [{"index": f.index, "mesh": str(f.mesh)} for f in self.frames],
            "labels": self.registry.to_json(),
            "rig": self.rig,
            "evidence_root": str(self.evidence_root.relative_to(self.root)
                                 if self.evidence_root.is_relative_to(self.root)
                                 else self.evidence_root),
            "output_root": str(self.output_root.relative_to(self.root)
                               if self.output_root.is_relative_to(self.root)
                               else self.output_root),
        }
        Path(path).write_text(json.dumps(doc, indent=2) + "\n")

    # -- frames -------------------------------------------------------------

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    def frame_indices(self) -> list[int]:
        return [f.index for f in self.frames]

    def mesh_path(self, k: int) -> Path:
        for f in self.frames:
            if f.index == k:
                p = f.mesh
                return p if p.is_absolute() else self.root / p
        raise ManifestError(f"frame {k} not in manifest (1..{self.n_frames})")

    # -- rig parameters -----------------------------------------------------

    @property
    def image_size(self) -> int:
        return int(self.rig.get("image_size", DEFAULT_IMAGE_SIZE))

    @property
    def elevation_deg(self) -> float:
        return float(self.rig.get("elevation_deg", DEFAULT_ELEVATION_DEG))

    @property
    def focal(self) -> float:
        return float(self.rig.get("focal", self.image_size))

    @property
    def fill(self) -> float:
        return float(self.rig.get("fill", DEFAULT_FILL))

    def rig_radius(self, bounding_radius: float) -> float:
        """Configured radius, or the auto-fit distance for ``bounding_radius``."""
        raw = self.rig.get("radius", "auto")
        if raw == "auto":
            return fit_radius(bounding_radius, focal=self.focal,
                              image_size=self.image_size, fill=self.fill)
        return float(raw)

    # -- evidence tree ------------------------------------------------------

    def par_path(self, k: int, n: int) -> Path:
        return self.evidence_root / "par" / str(k) / f"{n}.png"

    def flow_path(self, k: int, n: int) -> Path:
        return self.evidence_root / "flow" / str(k) / f"{n}.flo"

    def masks_path(self, k: int, n: int) -> Path:
        return self.evidence_root / "masks" / str(k) / f"{n}.json"

    def manual_path(self, k: int, n: int) -> Path:
        return self.evidence_root / "manual" / str(k) / f"{n}.json"

    # -- output tree ----------------------------------------------------------

    def labels_path(self, k: int, *, round2: bool = False) -> Path:
        name = f"{k}_r2.l4dl" if round2 else f"{k}.l4dl"
        return self.output_root / "labels" / name

    def render_dir(self, k: int) -> Path:
        return self.output_root / "renders" / str(k)

    def rgb_path(self, k: int, n: int) -> Path:
        return self.render_dir(k) / f"{n}_rgb.png"

    def label_png_path(self, k: int, n: int, *, round2: bool = False) -> Path:
        name = f"{n}_label_r2.png" if round2 else f"{n}_label.png"
        return self.render_dir(k) / name

    def trace_path(self, k: int) -> Path:
        return self.output_root / "trace" / f"{k}.csv"

    def garments_dir(self, k: int) -> Path:
        return self.output_root / "garments" / str(k)

    def state_path(self) -> Path:
        return self.output_root / "state.json"
