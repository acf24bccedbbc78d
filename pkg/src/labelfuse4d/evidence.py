"""Per-pixel vote sources: parser labels, flow-warped labels, mask votes,
and manual corrections, plus their file formats.

Formats: label images are 8-bit indexed PNGs (palette index = label id,
255 = background), flow fields are Middlebury ``.flo``, mask sets are
JSON lists of uncompressed column-major RLE, and manual overlays are
sparse JSON ``[[x, y, label], ...]`` lists.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .rasterizer import RasterMap
from .scene_io import BACKGROUND, LabelRegistry

# sources, in the order unary terms are summed
SOURCE_PAR = "par"
SOURCE_OPT = "opt"
SOURCE_SAM = "sam"
SOURCE_MAN = "man"

# mask filter defaults (fractions of mask / foreground area, pixels)
TAU_BG = 0.05
TAU_FULL = 0.90
MIN_AREA = 100

FLO_MAGIC = 202021.25

# Graphonomy-style 20-class human parsing taxonomy -> canonical 6-label
# registry.  Face, arms and legs fold into skin; all unmapped classes
# (glove, sunglasses, dress, jumpsuit, scarf, ...) fall back to -1.
LIP_CLASS_MAP = {
    0: -1,    # background
    1: 1,     # hat -> hair
    2: 1,     # hair
    3: -1,    # glove
    4: -1,    # sunglasses
    5: 3,     # upper-clothes -> upper
    6: -1,    # dress
    7: 5,     # coat -> outer
    8: -1,    # socks
    9: 4,     # pants -> lower
    10: 3,    # torso-skin (jumpsuits render as upper)
    11: -1,   # scarf
    12: 4,    # skirt -> lower
    13: 0,    # face -> skin
    14: 0,    # left-arm -> skin
    15: 0,    # right-arm -> skin
    16: 0,    # left-leg -> skin
    17: 0,    # right-leg -> skin
    18: 2,    # left-shoe -> shoe
    19: 2,    # right-shoe -> shoe
}


class EvidenceError(ValueError):
    """Missing or corrupt evidence file, or votes inconsistent with the registry."""


# ---------------------------------------------------------------------------
# vote containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VoteImage:
    """Per-pixel votes from one source in one view.

    Hard sources (PAR/OPT/MAN) carry a label grid where -1 votes zero for
    every label; the SAM source carries a per-label score grid instead.
    """

    source: str
    labels: np.ndarray | None = None   # (H, W) int16
    scores: np.ndarray | None = None   # (H, W, L) float32

    def __post_init__(self):
        if (self.labels is None) == (self.scores is None):
            raise ValueError("exactly one of labels/scores must be set")
        if self.scores is not None and self.source != SOURCE_SAM:
            raise ValueError(f"soft votes are only valid for SAM, got {self.source!r}")

    @property
    def shape(self) -> tuple[int, int]:
        grid = self.labels if self.labels is not None else self.scores
        return grid.shape[0], grid.shape[1]


@dataclass(frozen=True)
class FlowField:
    """Dense pixel displacement (dx right, dy down) from frame k-1 to k."""

    flow: np.ndarray  # (H, W, 2) float32

    def __post_init__(self):
        fl = np.asarray(self.flow, dtype=np.float32)
        if fl.ndim != 3 or fl.shape[2] != 2:
            raise EvidenceError(f"flow must be (H, W, 2), got {fl.shape}")
        if not np.isfinite(fl).all():
            raise EvidenceError("flow contains non-finite values")
        object.__setattr__(self, "flow", fl)

    @property
    def shape(self) -> tuple[int, int]:
        return self.flow.shape[0], self.flow.shape[1]


@dataclass(frozen=True)
class MaskSet:
    """Binary masks of one view, possibly overlapping; K may be zero."""

    masks: np.ndarray  # (K, H, W) bool

    def __post_init__(self):
        m = np.asarray(self.masks)
        if m.ndim != 3:
            raise EvidenceError(f"mask set must be (K, H, W), got shape {m.shape}")
        object.__setattr__(self, "masks", m.astype(bool))

    def __len__(self) -> int:
        return self.masks.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.masks.shape[1], self.masks.shape[2]


@dataclass(frozen=True)
class RectificationOverlay:
    """Sparse manual corrections for one view: rows of (x, y, label).

    Label -1 marks "erase to background": it votes zero everywhere, which
    still removes the pixel from every positive label's support.
    """

    entries: np.ndarray  # (K, 3) int32

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=np.int32).reshape(-1, 3)
        object.__setattr__(self, "entries", e)

    def __len__(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def from_json_obj(cls, obj) -> "RectificationOverlay":
        if not isinstance(obj, list):
            raise EvidenceError("overlay must be a JSON list of [x, y, label]")
        rows = []
        for item in obj:
            if (not isinstance(item, list) or len(item) != 3
                    or not all(isinstance(v, int) for v in item)):
                raise EvidenceError(f"bad overlay entry {item!r}")
            rows.append(item)
        return cls(np.asarray(rows, np.int32).reshape(-1, 3))

    def to_json_obj(self) -> list:
        return [[int(x), int(y), int(l)] for x, y, l in self.entries]


def load_overlay(path) -> RectificationOverlay:
    path = Path(path)
    if not path.is_file():
        raise EvidenceError(f"overlay not found: {path}")
    try:
        return RectificationOverlay.from_json_obj(json.loads(path.read_text()))
    except json.JSONDecodeError as exc:
        raise EvidenceError(f"{path}: bad overlay JSON: {exc}") from exc


def save_overlay(overlay: RectificationOverlay, path) -> None:
    """Write the canonical compact form (no whitespace) shared with the UI."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(overlay.to_json_obj(), separators=(",", ":")))


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def read_flo(path) -> FlowField:
    path = Path(path)
    if not path.is_file():
        raise EvidenceError(f"flow file not found: {path}")
    data = path.read_bytes()
    if len(data) < 12:
        raise EvidenceError(f"{path}: truncated .flo header")
    magic, w, h = struct.unpack("<fii", data[:12])
    if abs(magic - FLO_MAGIC) > 1e-3:
        raise EvidenceError(f"{path}: bad .flo magic {magic!r}")
    need = w * h * 2 * 4
    if len(data) - 12 != need:
        raise EvidenceError(f"{path}: payload is {len(data) - 12} bytes, expected {need}")
    fl = np.frombuffer(data, dtype="<f4", count=w * h * 2, offset=12)
    return FlowField(fl.reshape(h, w, 2).copy())


def write_flo(flow: FlowField, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    h, w = flow.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<fii", FLO_MAGIC, w, h))
        fh.write(flow.flow.astype("<f4").tobytes())


def encode_rle(mask: np.ndarray) -> dict:
    """Uncompressed column-major RLE: counts alternate 0-runs and 1-runs."""
    mask = np.asarray(mask, dtype=bool)
    flat = mask.ravel(order="F").astype(np.int8)
    # run boundaries
    change = np.nonzero(np.diff(flat))[0] + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    counts = np.diff(bounds).tolist()
    if flat.size and flat[0] == 1:
        counts = [0] + counts
    return {"size": [int(mask.shape[0]), int(mask.shape[1])], "counts": counts}


def decode_rle(obj: dict) -> np.ndarray:
    try:
        h, w = (int(v) for v in obj["size"])
        counts = [int(c) for c in obj["counts"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise EvidenceError(f"bad RLE object: {exc}") from exc
    if sum(counts) != h * w:
        raise EvidenceError(f"RLE counts sum to {sum(counts)}, expected {h * w}")
    vals = np.zeros(len(counts), dtype=np.uint8)
    vals[1::2] = 1
    flat = np.repeat(vals, counts)
    return flat.reshape((h, w), order="F").astype(bool)


def read_masks(path) -> MaskSet:
    path = Path(path)
    if not path.is_file():
        raise EvidenceError(f"mask file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise EvidenceError(f"{path}: bad mask JSON: {exc}") from exc
    if not isinstance(doc, list):
        raise EvidenceError(f"{path}: mask file must be a JSON list")
    if not doc:
        return MaskSet(np.zeros((0, 0, 0), bool))
    masks = [decode_rle(entry) for entry in doc]
    shapes = {m.shape for m in masks}
    if len(shapes) > 1:
        raise EvidenceError(f"{path}: masks disagree on size: {sorted(shapes)}")
    return MaskSet(np.stack(masks))


def write_masks(masks: MaskSet, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps([encode_rle(m) for m in masks.masks]))


def save_label_png(labels: np.ndarray, path, registry: LabelRegistry) -> None:
    """Store a label image as an 8-bit indexed PNG (-1 <-> index 255)."""
    lab = np.asarray(labels, dtype=np.int16)
    idx = np.where(lab < 0, 255, lab).astype(np.uint8)
    img = Image.fromarray(idx, mode="P")
    img.putpalette(registry.palette().ravel().tolist())
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    img.save(path)


def load_label_png(path) -> np.ndarray:
    """Raw palette indices of an indexed (or grayscale) PNG as int16, 255 -> -1."""
    path = Path(path)
    if not path.is_file():
        raise EvidenceError(f"label image not found: {path}")
    img = Image.open(path)
    if img.mode not in ("P", "L"):
        raise EvidenceError(f"{path}: expected an indexed PNG, got mode {img.mode}")
    idx = np.array(img, dtype=np.int16)
    idx[idx == 255] = BACKGROUND
    return idx


# ---------------------------------------------------------------------------
# vote sources
# ---------------------------------------------------------------------------

def load_parser_votes(path, class_map: dict | None = None,
                      n_labels: int | None = None) -> VoteImage:
    """Read a human-parser label PNG as hard PAR votes.

    ``class_map`` converts an external taxonomy (e.g. the 20-class set in
    LIP_CLASS_MAP) into registry ids; without it, indices are taken as
    registry ids directly.  Unknown indices raise, naming the offender.
    """
    idx = load_label_png(path)
    if class_map is not None:
        lut = np.full(256, np.iinfo(np.int16).min, dtype=np.int16)
        for src, dst in class_map.items():
            lut[int(src)] = int(dst)
        lut[255] = BACKGROUND
        mapped = lut[np.where(idx < 0, 255, idx)]
        if (mapped == np.iinfo(np.int16).min).any():
            bad = sorted(np.unique(idx[mapped == np.iinfo(np.int16).min]).tolist())
            raise EvidenceError(f"{path}: palette indices {bad} missing from the class map")
        idx = mapped
    if n_labels is not None and idx.max(initial=-1) >= n_labels:
        raise EvidenceError(
            f"{path}: label {int(idx.max())} outside the registry (0..{n_labels - 1})")
    return VoteImage(SOURCE_PAR, labels=idx.astype(np.int16))


def load_class_map(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
        return {int(k): int(v) for k, v in doc.items()}
    except (OSError, ValueError, AttributeError) as exc:
        raise EvidenceError(f"{path}: bad class map: {exc}") from exc


def warp_labels(prev_labels: np.ndarray, flow: FlowField) -> VoteImage:
    """Forward-warp a label image along a flow field (OPT votes).

    Every labeled source pixel deposits its label at round(p + v); each
    target keeps the majority deposit (ties -> smallest label id) and
    untouched targets are -1.  Out-of-bounds deposits are dropped.
    """
    prev = np.asarray(prev_labels, dtype=np.int16)
    h, w = prev.shape
    if flow.shape != (h, w):
        raise EvidenceError(f"flow {flow.shape} does not match labels {(h, w)}")
    ys, xs = np.nonzero(prev != BACKGROUND)
    out = np.full((h, w), BACKGROUND, dtype=np.int16)
    if ys.size == 0:
        return VoteImage(SOURCE_OPT, labels=out)
    tx = np.floor(xs + flow.flow[ys, xs, 0] + 0.5).astype(np.int64)
    ty = np.floor(ys + flow.flow[ys, xs, 1] + 0.5).astype(np.int64)
    keep = (tx >= 0) & (tx < w) & (ty >= 0) & (ty < h)
    if not keep.any():
        return VoteImage(SOURCE_OPT, labels=out)
    tx, ty = tx[keep], ty[keep]
    lab = prev[ys[keep], xs[keep]].astype(np.int64)
    n_lab = int(lab.max()) + 1
    votes = np.bincount((ty * w + tx) * n_lab + lab,
                        minlength=h * w * n_lab).reshape(h * w, n_lab)
    total = votes.sum(axis=1)
    winner = np.argmax(votes, axis=1).astype(np.int16)  # first max = smallest id
    out.ravel()[total > 0] = winner[total > 0]
    return VoteImage(SOURCE_OPT, labels=out)


def filter_masks(raw: MaskSet, coverage: RasterMap, *, tau_bg: float = TAU_BG,
                 tau_full: float = TAU_FULL, min_area: int = MIN_AREA) -> MaskSet:
    """Drop background-leaking, whole-foreground, and tiny masks.

    Keeps masks whose overlap with uncovered pixels is <= tau_bg of the
    mask, that cover <= tau_full of the foreground, and that span at
    least min_area pixels.
    """
    if len(raw) == 0:
        return raw
    if raw.shape != (coverage.height, coverage.width):
        raise EvidenceError(
            f"masks {raw.shape} do not match the view {(coverage.height, coverage.width)}")
    fg = coverage.covered
    fg_area = max(int(fg.sum()), 1)
    keep = []
    for m in raw.masks:
        area = int(m.sum())
        if area < min_area:
            continue
        if int((m & ~fg).sum()) > tau_bg * area:
            continue
        if int((m & fg).sum()) > tau_full * fg_area:
            continue
        keep.append(m)
    if not keep:
        return MaskSet(np.zeros((0,) + raw.shape, bool))
    return MaskSet(np.stack(keep))


def _hard_vote_counts(vote: VoteImage | None, mask: np.ndarray, n_labels: int
                      ) -> np.ndarray:
    """Per-label count of one-hot votes inside ``mask`` (absent source -> zeros)."""
    if vote is None:
        return np.zeros(n_labels, dtype=np.float64)
    lab = vote.labels[mask]
    lab = lab[lab >= 0]
    return np.bincount(lab, minlength=n_labels).astype(np.float64)


def mask_score(label: int, mask: np.ndarray, par: VoteImage | None,
               opt: VoteImage | None, lambda_po: float, *,
               n_labels: int | None = None) -> float:
    """Agreement of PAR/OPT votes with ``label`` inside a mask, in [0, 1].

    Score = sum over mask pixels of (f_par + lambda_po * f_opt), divided
    by (1 + lambda_po) * mask area.
    """
    mask = np.asarray(mask, dtype=bool)
    area = int(mask.sum())
    if area == 0:
        raise EvidenceError("mask_score on an empty mask")
    L = n_labels if n_labels is not None else label + 1
    num = (_hard_vote_counts(par, mask, L)[label]
           + lambda_po * _hard_vote_counts(opt, mask, L)[label])
    return float(num / ((1.0 + lambda_po) * area))


def sam_votes(masks: MaskSet, par: VoteImage | None, opt: VoteImage | None,
              lambda_po: float, n_labels: int) -> VoteImage:
    """Soft mask votes: each pixel sums the scores of every mask containing it."""
    if len(masks) == 0:
        h, w = (par or opt).shape if (par or opt) else (0, 0)
        return VoteImage(SOURCE_SAM, scores=np.zeros((h, w, n_labels), np.float32))
    h, w = masks.shape
    scores = np.zeros((h, w, n_labels), dtype=np.float64)
    for m in masks.masks:
        area = int(m.sum())
        if area == 0:
            continue
        s = (_hard_vote_counts(par, m, n_labels)
             + lambda_po * _hard_vote_counts(opt, m, n_labels))
        s /= (1.0 + lambda_po) * area
        scores[m] += s
    return VoteImage(SOURCE_SAM, scores=scores.astype(np.float32))


def manual_votes(overlay: RectificationOverlay, width: int, height: int,
                 n_labels: int) -> VoteImage:
    """Hard MAN votes from a sparse overlay; untouched pixels vote nothing."""
    out = np.full((height, width), BACKGROUND, dtype=np.int16)
    if len(overlay):
        x, y, lab = overlay.entries.T
        if ((x < 0) | (x >= width) | (y < 0) | (y >= height)).any():
            bad = overlay.entries[(x < 0) | (x >= width) | (y < 0) | (y >= height)][0]
            raise EvidenceError(
                f"overlay pixel ({bad[0]}, {bad[1]}) outside a {width}x{height} image")
        if ((lab < BACKGROUND) | (lab >= n_labels)).any():
            bad_lab = int(lab[(lab < BACKGROUND) | (lab >= n_labels)][0])
            raise EvidenceError(f"overlay label {bad_lab} not in the registry")
        out[y, x] = lab  # later duplicates win, matching annotation order
    return VoteImage(SOURCE_MAN, labels=out)
