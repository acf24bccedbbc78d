"""Per-sequence orchestration: render, gather votes, optimize, propagate
across time, apply manual rectification rounds, and extract garments.

Frame 1 is fused from parser votes (plus any manual overlays already on
disk); later frames add flow-warped previous labels and mask votes, with
alpha-expansion warm-started from the warped labels.  Results land in
the manifest's output tree (`labels/`, `renders/`, `trace/`, `garments/`,
`state.json`) after every frame so long sequences survive interruption.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from . import evidence as ev
from .energy import FusionWeights, accumulate_unary, normalize_unary
from .graphcut import (EnergyProblem, ExpansionResult, alpha_expansion,
                       write_trace_csv)
from .rasterizer import RasterMap, rasterize, render_color, render_labels
from .scene_io import (BACKGROUND, LabelFrame, LabelRegistry, SequenceManifest,
                       TriMesh, ViewRig, build_adjacency, build_rig, load_label_frame,
                       load_mesh, recenter, save_label_frame)


@dataclass(frozen=True)
class SourceToggles:
    """Which automatic sources participate (manual votes are orthogonal)."""

    par: bool = True
    opt: bool = True
    sam: bool = True

    @classmethod
    def from_string(cls, spec: str) -> "SourceToggles":
        """Parse a CLI list like ``par,opt``; unknown names raise."""
        wanted = {tok.strip().lower() for tok in spec.split(",") if tok.strip()}
        known = {"par", "opt", "sam"}
        bad = wanted - known
        if bad:
            raise ValueError(f"unknown sources {sorted(bad)}; valid: par, opt, sam")
        return cls(par="par" in wanted, opt="opt" in wanted, sam="sam" in wanted)


@dataclass
class FrameContext:
    """Geometry bundle for one frame: recentered mesh + rig + coverage maps."""

    mesh: TriMesh
    rig: ViewRig
    maps: list

    @classmethod
    def build(cls, mesh: TriMesh, rig: ViewRig) -> "FrameContext":
        return cls(mesh, rig, [rasterize(mesh, cam) for cam in rig])


@dataclass
class FrameEvidence:
    """Loaded evidence of one frame, lists indexed by view (None = absent)."""

    par: list = field(default_factory=list)
    flow: list = field(default_factory=list)
    masks: list = field(default_factory=list)
    manual: list = field(default_factory=list)


@dataclass
class FrameResult:
    frame_index: int
    labels: LabelFrame                  # round 1
    labels_r2: LabelFrame | None = None
    energy: float | None = None
    moved: int = 0
    trace: tuple = ()
    rectified: bool = False
    cached: bool = False

    @property
    def final_labels(self) -> LabelFrame:
        return self.labels_r2 if self.labels_r2 is not None else self.labels


@dataclass(frozen=True)
class GarmentMesh:
    """Per-label submesh with the injective map back to source vertex ids."""

    label_id: int
    mesh: TriMesh
    vertex_map: np.ndarray


# ---------------------------------------------------------------------------
# evidence discovery
# ---------------------------------------------------------------------------

def load_frame_evidence(manifest: SequenceManifest, k: int, n_views: int,
                        toggles: SourceToggles, *, class_map: dict | None = None,
                        with_manual: bool = False) -> FrameEvidence:
    """Load every enabled source for frame k, erroring on missing files.

    Disabled sources are never read from disk.  Manual overlays are
    optional: absent files simply yield None entries.
    """
    out = FrameEvidence()
    n_labels = None  # validated later against the registry by the energy step
    for n in range(n_views):
        if toggles.par:
            p = manifest.par_path(k, n)
            if not p.is_file():
                raise ev.EvidenceError(f"frame {k} view {n} source par: missing {p}")
            out.par.append(ev.load_parser_votes(p, class_map, n_labels))
        else:
            out.par.append(None)
        if toggles.opt and k >= 2:
            p = manifest.flow_path(k, n)
            if not p.is_file():
                raise ev.EvidenceError(f"frame {k} view {n} source opt: missing {p}")
            out.flow.append(ev.read_flo(p))
        else:
            out.flow.append(None)
        if toggles.sam:
            p = manifest.masks_path(k, n)
            if not p.is_file():
                raise ev.EvidenceError(f"frame {k} view {n} source sam: missing {p}")
            out.masks.append(ev.read_masks(p))
        else:
            out.masks.append(None)
        if with_manual:
            p = manifest.manual_path(k, n)
            out.manual.append(ev.load_overlay(p) if p.is_file() else None)
        else:
            out.manual.append(None)
    return out


def _manual_vote_list(overlays, width: int, height: int, n_labels: int):
    votes = []
    for ov in overlays:
        if ov is None or len(ov) == 0:
            votes.append(None)
        else:
            votes.append(ev.manual_votes(ov, width, height, n_labels))
    return votes


# ---------------------------------------------------------------------------
# single-frame fusion
# ---------------------------------------------------------------------------

def fuse_frame(ctx: FrameContext, votes: dict, weights: FusionWeights,
               n_labels: int, init=None) -> ExpansionResult:
    """Accumulate + normalize the unary table and run alpha-expansion."""
    raw = accumulate_unary(ctx.mesh, ctx.rig, ctx.maps, votes, weights, n_labels)
    problem = EnergyProblem(normalize_unary(raw), build_adjacency(ctx.mesh),
                            weights.lambda_b)
    return alpha_expansion(problem, init)


def init_first_frame(ctx: FrameContext, par_votes, manual_overlays,
                     weights: FusionWeights, n_labels: int) -> ExpansionResult:
    """First-frame labels from parser + manual votes only (no OPT/SAM)."""
    size = ctx.rig.image_size
    votes = {ev.SOURCE_PAR: list(par_votes)}
    man = _manual_vote_list(manual_overlays or [None] * len(ctx.rig), size, size,
                            n_labels)
    if any(v is not None for v in man):
        votes[ev.SOURCE_MAN] = man
    return fuse_frame(ctx, votes, weights, n_labels)


def opt_votes_for_frame(prev_ctx: FrameContext, prev_labels: LabelFrame,
                        flows) -> list:
    """OPT votes for the current frame: render previous labels, warp by flow."""
    votes = []
    for n, flow in enumerate(flows):
        if flow is None:
            votes.append(None)
            continue
        prev_img = render_labels(prev_ctx.maps[n], prev_ctx.mesh, prev_labels)
        votes.append(ev.warp_labels(prev_img, flow))
    return votes


def warped_seed(ctx: FrameContext, opt_votes, weights: FusionWeights,
                n_labels: int) -> np.ndarray | None:
    """Per-vertex warm start from OPT votes; -1 where a vertex got none."""
    if not any(v is not None for v in opt_votes):
        return None
    raw = accumulate_unary(ctx.mesh, ctx.rig, ctx.maps,
                           {ev.SOURCE_OPT: list(opt_votes)},
                           weights.replace(lambda_opt=1.0), n_labels)
    seed = np.argmin(raw, axis=1).astype(np.int16)
    seed[raw.min(axis=1) >= 0] = BACKGROUND  # no vote mass anywhere
    return seed


def process_frame(ctx: FrameContext, prev_ctx: FrameContext,
                  prev_labels: LabelFrame, evidence_: FrameEvidence,
                  weights: FusionWeights, toggles: SourceToggles,
                  n_labels: int) -> ExpansionResult:
    """Fuse one non-initial frame from the enabled sources.

    OPT votes warp the previous frame's optimized labels through the
    supplied flow; SAM votes score mask agreement against the PAR/OPT
    votes of this frame; expansion warm-starts from the warped labels.
    """
    votes: dict = {}
    if toggles.par:
        votes[ev.SOURCE_PAR] = evidence_.par
    opt = None
    if toggles.opt:
        opt = opt_votes_for_frame(prev_ctx, prev_labels, evidence_.flow)
        votes[ev.SOURCE_OPT] = opt
    if toggles.sam:
        sams = []
        for n, masks in enumerate(evidence_.masks):
            if masks is None:
                sams.append(None)
                continue
            kept = ev.filter_masks(masks, ctx.maps[n])
            par_n = evidence_.par[n] if toggles.par else None
            opt_n = opt[n] if opt is not None else None
            sams.append(ev.sam_votes(kept, par_n, opt_n, weights.lambda_po,
                                     n_labels))
        votes[ev.SOURCE_SAM] = sams
    init = warped_seed(ctx, opt, weights, n_labels) if opt is not None else None
    return fuse_frame(ctx, votes, weights, n_labels, init=init)


def rectify_frame(ctx: FrameContext, base_votes: dict, overlays,
                  round1: LabelFrame, weights: FusionWeights,
                  n_labels: int) -> ExpansionResult:
    """Second optimization round with manual votes stacked on the base unary.

    An all-empty overlay set short-circuits: round 2 is round 1.
    """
    size = ctx.rig.image_size
    man = _manual_vote_list(overlays, size, size, n_labels)
    if not any(v is not None for v in man):
        return ExpansionResult(round1, float("nan"), (), 0)
    votes = dict(base_votes)
    votes[ev.SOURCE_MAN] = man
    return fuse_frame(ctx, votes, weights, n_labels, init=round1)


# ---------------------------------------------------------------------------
# garment extraction
# ---------------------------------------------------------------------------

def extract_garments(mesh: TriMesh, labels) -> list[GarmentMesh]:
    """Split the mesh into per-label submeshes.

    A face takes the majority label of its three vertices; a three-way
    disagreement falls back to the label of the smallest vertex index.
    Every face lands in exactly one garment.
    """
    lab = labels.labels if isinstance(labels, LabelFrame) else np.asarray(labels, np.int16)
    if lab.size != mesh.n_vertices:
        raise ValueError(f"{lab.size} labels for {mesh.n_vertices} vertices")
    if (lab < 0).any():
        raise ValueError("garment extraction needs optimized labels (no -1)")
    f = mesh.faces
    a, b, c = lab[f[:, 0]], lab[f[:, 1]], lab[f[:, 2]]
    tie = lab[f.min(axis=1)]
    face_label = np.where(a == b, a, np.where(b == c, b, np.where(a == c, a, tie)))
    garments = []
    for lid in np.unique(face_label):
        fsel = f[face_label == lid]
        vids = np.unique(fsel)
        remap = np.zeros(mesh.n_vertices, dtype=np.int64)
        remap[vids] = np.arange(vids.size)
        colors = mesh.colors[vids] if mesh.colors is not None else None
        sub = TriMesh(mesh.vertices[vids], remap[fsel], colors)
        garments.append(GarmentMesh(int(lid), sub, vids))
    return garments


# ---------------------------------------------------------------------------
# output tree
# ---------------------------------------------------------------------------

def _save_rgb_png(rgb: np.ndarray, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.clip(rgb * 255.0 + 0.5, 0, 255).astype(np.uint8),
                    mode="RGB").save(path)


def write_frame_outputs(manifest: SequenceManifest, ctx: FrameContext, k: int,
                        labels: LabelFrame, trace, *, round2: bool = False,
                        rgb: bool = True) -> None:
    save_label_frame(labels, manifest.labels_path(k, round2=round2))
    for n in range(len(ctx.rig)):
        img = render_labels(ctx.maps[n], ctx.mesh, labels)
        ev.save_label_png(img, manifest.label_png_path(k, n, round2=round2),
                          manifest.registry)
        if rgb and not round2 and ctx.mesh.colors is not None:
            _save_rgb_png(render_color(ctx.maps[n], ctx.mesh),
                          manifest.rgb_path(k, n))
    trace_path = manifest.trace_path(k)
    if round2:
        trace_path = trace_path.with_name(f"{k}_r2.csv")
    write_trace_csv(trace, trace_path)


def _publish_state(manifest: SequenceManifest, last_completed: int) -> None:
    """Write-then-rename so concurrent readers never see a torn cursor."""
    path = manifest.state_path()
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".json.tmp")
    tmp.write_text(json.dumps({"last_completed": last_completed}))
    tmp.replace(path)


def read_state(manifest: SequenceManifest) -> int:
    path = manifest.state_path()
    if not path.is_file():
        return 0
    try:
        return int(json.loads(path.read_text()).get("last_completed", 0))
    except (json.JSONDecodeError, ValueError, AttributeError):
        return 0


# ---------------------------------------------------------------------------
# sequence driver
# ---------------------------------------------------------------------------

def _frame_context(manifest: SequenceManifest, k: int, rig: ViewRig | None
                   ) -> tuple[FrameContext, ViewRig]:
    mesh, _ = recenter(load_mesh(manifest.mesh_path(k)))
    if rig is None:
        rig = build_rig(
            np.zeros(3), manifest.rig_radius(mesh.bounding_radius()),
            elevation_deg=manifest.elevation_deg,
            image_size=manifest.image_size, focal=manifest.focal)
    return FrameContext.build(mesh, rig), rig


def _load_class_map(manifest: SequenceManifest) -> dict | None:
    rel = manifest.rig.get("par_class_map")  # stored beside rig options
    if not rel:
        return None
    return ev.load_class_map(manifest.root / rel)


def run_sequence(manifest: SequenceManifest, weights: FusionWeights | None = None,
                 toggles: SourceToggles | None = None, *, resume: bool = False,
                 progress=None) -> list[FrameResult]:
    """Process every frame in order; see the module docstring for the flow.

    With ``resume``, frames at or below the stored cursor whose label
    files exist are reloaded instead of recomputed.
    """
    weights = weights or FusionWeights()
    toggles = toggles or SourceToggles()
    class_map = _load_class_map(manifest)
    n_labels = len(manifest.registry)
    cursor = read_state(manifest) if resume else 0

    results: list[FrameResult] = []
    rig: ViewRig | None = None
    prev_ctx: FrameContext | None = None
    prev_labels: LabelFrame | None = None

    for k in manifest.frame_indices():
        ctx, rig = _frame_context(manifest, k, rig)
        r1_path = manifest.labels_path(k)
        if resume and k <= cursor and r1_path.is_file():
            labels = load_label_frame(r1_path, ctx.mesh.n_vertices, k)
            r2_path = manifest.labels_path(k, round2=True)
            labels_r2 = (load_label_frame(r2_path, ctx.mesh.n_vertices, k)
                         if r2_path.is_file() else None)
            result = FrameResult(k, labels, labels_r2,
                                 rectified=labels_r2 is not None, cached=True)
        else:
            if k == 1:
                evd = load_frame_evidence(
                    manifest, k, len(rig),
                    SourceToggles(par=toggles.par, opt=False, sam=False),
                    class_map=class_map, with_manual=True)
                res = init_first_frame(ctx, evd.par, evd.manual, weights, n_labels)
            else:
                evd = load_frame_evidence(manifest, k, len(rig), toggles,
                                          class_map=class_map)
                res = process_frame(ctx, prev_ctx, prev_labels, evd, weights,
                                    toggles, n_labels)
            res.labels.frame_index = k
            write_frame_outputs(manifest, ctx, k, res.labels, res.trace)
            _publish_state(manifest, k)
            result = FrameResult(k, res.labels, energy=res.energy,
                                 moved=res.moved, trace=res.trace)
        results.append(result)
        if progress is not None:
            progress(result)
        prev_ctx, prev_labels = ctx, result.final_labels
    return results


def rectify_sequence_frame(manifest: SequenceManifest, k: int,
                           weights: FusionWeights | None = None,
                           toggles: SourceToggles | None = None, *,
                           propagate: bool = False,
                           progress=None) -> list[FrameResult]:
    """Apply the manual overlays of frame k as a second optimization round.

    Re-derives the frame's round-1 unary from disk state (previous
    frame's current final labels feed OPT), stacks the manual votes, and
    re-optimizes from the stored round-1 labels.  With ``propagate``,
    frames k+1..N are reprocessed so the corrected labels flow forward;
    their stale round-2 outputs (if any) are removed.
    """
    weights = weights or FusionWeights()
    toggles = toggles or SourceToggles()
    class_map = _load_class_map(manifest)
    n_labels = len(manifest.registry)
    if k not in manifest.frame_indices():
        raise ev.EvidenceError(f"frame {k} not in manifest")

    manual_dir = manifest.evidence_root / "manual" / str(k)
    by_view: dict[int, ev.RectificationOverlay] = {}
    if manual_dir.is_dir():
        for p in manual_dir.glob("*.json"):
            if p.stem.isdigit():
                by_view[int(p.stem)] = ev.load_overlay(p)
    if not any(len(ov) for ov in by_view.values()):
        # nothing to apply: round 2 is not created (round-1 stays authoritative)
        mesh, _ = recenter(load_mesh(manifest.mesh_path(k)))
        r1 = load_label_frame(manifest.labels_path(k), mesh.n_vertices, k)
        result = FrameResult(k, r1, None, rectified=False, cached=True)
        if progress is not None:
            progress(result)
        return [result]

    rig: ViewRig | None = None
    prev_ctx = prev_labels = None
    if k >= 2 and toggles.opt:
        prev_ctx, rig = _frame_context(manifest, k - 1, rig)
        prev_path = manifest.labels_path(k - 1, round2=True)
        if not prev_path.is_file():
            prev_path = manifest.labels_path(k - 1)
        prev_labels = load_label_frame(prev_path, prev_ctx.mesh.n_vertices, k - 1)
    ctx, rig = _frame_context(manifest, k, rig)

    r1 = load_label_frame(manifest.labels_path(k), ctx.mesh.n_vertices, k)
    overlays = [by_view.get(n) for n in range(len(rig))]

    if k == 1:
        evd = load_frame_evidence(manifest, k, len(rig),
                                  SourceToggles(toggles.par, False, False),
                                  class_map=class_map)
    else:
        evd = load_frame_evidence(manifest, k, len(rig), toggles,
                                  class_map=class_map)
    base: dict = {}
    if toggles.par:
        base[ev.SOURCE_PAR] = evd.par
    opt = None
    if k >= 2 and toggles.opt:
        opt = opt_votes_for_frame(prev_ctx, prev_labels, evd.flow)
        base[ev.SOURCE_OPT] = opt
    if k >= 2 and toggles.sam:
        sams = []
        for n, masks in enumerate(evd.masks):
            kept = ev.filter_masks(masks, ctx.maps[n])
            sams.append(ev.sam_votes(kept, evd.par[n] if toggles.par else None,
                                     opt[n] if opt is not None else None,
                                     weights.lambda_po, n_labels))
        base[ev.SOURCE_SAM] = sams

    res = rectify_frame(ctx, base, overlays, r1, weights, n_labels)
    res.labels.frame_index = k
    write_frame_outputs(manifest, ctx, k, res.labels, res.trace, round2=True)
    results = [FrameResult(k, r1, res.labels, energy=res.energy,
                           moved=res.moved, trace=res.trace, rectified=True)]
    if progress is not None:
        progress(results[0])

    if propagate and k < manifest.n_frames:
        prev_ctx, prev_labels = ctx, res.labels
        for j in range(k + 1, manifest.n_frames + 1):
            jctx, rig = _frame_context(manifest, j, rig)
            evd = load_frame_evidence(manifest, j, len(rig), toggles,
                                      class_map=class_map)
            jres = process_frame(jctx, prev_ctx, prev_labels, evd, weights,
                                 toggles, n_labels)
            jres.labels.frame_index = j
            write_frame_outputs(manifest, jctx, j, jres.labels, jres.trace)
            stale = manifest.labels_path(j, round2=True)
            if stale.is_file():
                stale.unlink()
            result = FrameResult(j, jres.labels, energy=jres.energy,
                                 moved=jres.moved, trace=jres.trace)
            results.append(result)
            if progress is not None:
                progress(result)
            prev_ctx, prev_labels = jctx, jres.labels
    return results


def extract_sequence_garments(manifest: SequenceManifest, frames=None,
                              progress=None) -> None:
    """Write per-label garment PLYs for the given frames (default: all)."""
    for k in frames or manifest.frame_indices():
        mesh, _ = recenter(load_mesh(manifest.mesh_path(k)))
        path = manifest.labels_path(k, round2=True)
        if not path.is_file():
            path = manifest.labels_path(k)
        labels = load_label_frame(path, mesh.n_vertices, k)
        out_dir = manifest.garments_dir(k)
        from .scene_io import save_mesh

        for garment in extract_garments(mesh, labels):
            name = manifest.registry.name_of(garment.label_id)
            save_mesh(garment.mesh, out_dir / f"{name}.ply")
        if progress is not None:
            progress(k)
