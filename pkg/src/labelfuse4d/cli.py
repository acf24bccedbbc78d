"""Command-line interface.

Exit codes: 0 success, 2 bad arguments or manifest problems, 3 missing
or corrupt evidence, 4 mesh/label shape errors, 5 internal failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .energy import FusionWeights
from .evidence import EvidenceError
from .metrics import (chamfer_squared, edge_lengths, parsing_report,
                      sample_surface, simulation_loss, stretching_energy)
from .pipeline import (SourceToggles, extract_sequence_garments,
                       rectify_sequence_frame, run_sequence)
from .scene_io import (ManifestError, MeshError, SequenceManifest,
                       load_label_frame, load_mesh)

DEFAULT_PORT = 7464
CM_PER_UNIT = 100.0  # vertex positions are meters; reports use centimeters

_WEIGHT_ALIASES = {
    "p": "lambda_par", "par": "lambda_par", "lambda_par": "lambda_par",
    "o": "lambda_opt", "opt": "lambda_opt", "lambda_opt": "lambda_opt",
    "po": "lambda_po", "lambda_po": "lambda_po",
    "s": "lambda_sam", "sam": "lambda_sam", "lambda_sam": "lambda_sam",
    "b": "lambda_b", "lambda_b": "lambda_b",
    "man": "w_man", "w_man": "w_man",
}


def _parse_weights(pairs) -> FusionWeights:
    overrides = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ManifestError(f"--weights expects k=v, got {pair!r}")
        key, _, val = pair.partition("=")
        field = _WEIGHT_ALIASES.get(key.strip().lower())
        if field is None:
            raise ManifestError(
                f"unknown weight {key!r}; valid: {sorted(set(_WEIGHT_ALIASES))}")
        try:
            overrides[field] = float(val)
        except ValueError as exc:
            raise ManifestError(f"--weights {pair!r}: not a number") from exc
    try:
        return FusionWeights(**overrides)
    except ValueError as exc:
        raise ManifestError(str(exc)) from exc


def _parse_range(spec: str | None, upper: int, *, base: int) -> list[int]:
    """Parse '2', '1-5', or '0,3,7-9' into indices within [base, upper]."""
    if not spec:
        return list(range(base, upper + 1))
    out = []
    for part in spec.split(","):
        part = part.strip()
        try:
            if "-" in part:
                lo, hi = part.split("-", 1)
                out.extend(range(int(lo), int(hi) + 1))
            else:
                out.append(int(part))
        except ValueError as exc:
            raise ManifestError(f"bad range {spec!r}") from exc
    bad = [i for i in out if i < base or i > upper]
    if bad:
        raise ManifestError(f"indices {bad} outside {base}..{upper}")
    return out


def _load_manifest(args) -> SequenceManifest:
    manifest = SequenceManifest.load(args.manifest)
    if getattr(args, "out", None):
        manifest.output_root = Path(args.out).resolve()
    return manifest


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_render(args) -> int:
    from .pipeline import _frame_context, _save_rgb_png
    from .rasterizer import render_color

    manifest = _load_manifest(args)
    frames = _parse_range(args.frames, manifest.n_frames, base=1)
    rig = None
    total = 0
    for k in frames:
        ctx, rig = _frame_context(manifest, k, rig)
        views = _parse_range(args.views, len(rig) - 1, base=0)
        if ctx.mesh.colors is None:
            print(f"frame {k}: no vertex colors, nothing to render")
            continue
        for n in views:
            _save_rgb_png(render_color(ctx.maps[n], ctx.mesh),
                          manifest.rgb_path(k, n))
            total += 1
    if rig is not None:
        print(f"rig: {len(rig)} views, radius {rig.radius:.4g} m, "
              f"elevation +/-{rig.elevation_deg:g} deg, "
              f"{rig.image_size}x{rig.image_size} px, focal {rig[0].fx:g} px")
    print(f"wrote {total} images under {manifest.output_root}")
    return 0


def cmd_run(args) -> int:
    manifest = _load_manifest(args)
    weights = _parse_weights(args.weights)
    toggles = (SourceToggles.from_string(args.toggle)
               if args.toggle else SourceToggles())

    def progress(result):
        if result.cached:
            print(f"frame {result.frame_index}: cached")
        else:
            print(f"frame {result.frame_index}: energy={result.energy:.6f} "
                  f"moved={result.moved}")

    results = run_sequence(manifest, weights, toggles, resume=args.resume,
                           progress=progress)
    print(f"done: {len(results)} frames -> {manifest.output_root}")
    return 0


def cmd_rectify(args) -> int:
    manifest = _load_manifest(args)
    weights = _parse_weights(args.weights)
    toggles = (SourceToggles.from_string(args.toggle)
               if args.toggle else SourceToggles())

    def progress(result):
        tag = "round 2" if result.rectified else "reprocessed"
        if result.cached:
            print(f"frame {result.frame_index}: no corrections, nothing to do")
        else:
            print(f"frame {result.frame_index}: {tag} moved={result.moved}")

    rectify_sequence_frame(manifest, args.frame, weights, toggles,
                           propagate=args.propagate, progress=progress)
    return 0


def _scaled_vertices(path) -> np.ndarray:
    return load_mesh(path).vertices * CM_PER_UNIT


def _eval_labels(args):
    pred, gt = Path(args.pred), Path(args.gt)
    if pred.is_dir() != gt.is_dir():
        raise MeshError("--pred and --gt must both be files or both directories")
    if pred.is_dir():
        names = sorted(p.name for p in pred.glob("*.l4dl"))
        if not names:
            raise MeshError(f"no .l4dl files under {pred}")
        rows = ["frame,mAcc,mIoU,pixelAcc"]
        for name in names:
            g = gt / name
            if not g.is_file():
                raise MeshError(f"missing ground-truth file {g}")
            rep = parsing_report(load_label_frame(pred / name),
                                 load_label_frame(g))
            rows.append(f"{name.split('.')[0]},{rep['mAcc']:.6f},"
                        f"{rep['mIoU']:.6f},{rep['pixelAcc']:.6f}")
        return "\n".join(rows) + "\n"
    rep = parsing_report(load_label_frame(pred), load_label_frame(gt))
    rep["per_label"] = {str(k): v for k, v in rep["per_label"].items()}
    return json.dumps(rep, indent=2) + "\n"


def _eval_chamfer(args):
    x = sample_surface(load_mesh(args.pred), args.samples, args.seed) * CM_PER_UNIT
    y = sample_surface(load_mesh(args.gt), args.samples, args.seed + 1) * CM_PER_UNIT
    report = {"d_CD": chamfer_squared(x, y), "samples": args.samples,
              "seed": args.seed, "unit": "cm^2"}
    return json.dumps(report, indent=2) + "\n"


def _eval_sim(args):
    from .scene_io import TriMesh

    sim = load_mesh(args.sim)
    gt = load_mesh(args.gt)
    template = load_mesh(args.template)
    scale = lambda m: TriMesh(m.vertices * CM_PER_UNIT, m.faces, m.colors)
    sim_s, gt_s, tmpl_s = scale(sim), scale(gt), scale(template)
    cd = chamfer_squared(sim_s.vertices, gt_s.vertices)
    e_str = stretching_energy(edge_lengths(sim_s, tmpl_s))
    report = {"L_CD": cd, "E_str": e_str,
              "L": simulation_loss(sim_s, gt_s, tmpl_s, args.w),
              "w": args.w, "unit": "cm^2"}
    return json.dumps(report, indent=2) + "\n"


def cmd_eval(args) -> int:
    needed = {"labels": ("pred", "gt"), "chamfer": ("pred", "gt"),
              "sim": ("sim", "gt", "template")}[args.kind]
    missing = [f"--{n}" for n in needed if getattr(args, n) is None]
    if missing:
        raise ManifestError(f"kind={args.kind} requires {' '.join(missing)}")
    if args.kind == "labels":
        text = _eval_labels(args)
    elif args.kind == "chamfer":
        text = _eval_chamfer(args)
    else:
        text = _eval_sim(args)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_extract(args) -> int:
    manifest = _load_manifest(args)
    frames = _parse_range(args.frames, manifest.n_frames, base=1)
    extract_sequence_garments(manifest, frames,
                              progress=lambda k: print(f"frame {k}: garments written"))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    manifest = _load_manifest(args)
    port = args.port or int(os.environ.get("LF4D_PORT", DEFAULT_PORT))
    if not 1024 <= port <= 65535:
        raise ManifestError(f"port {port} outside 1024..65535")
    app = create_app(manifest, weights=_parse_weights(args.weights),
                     toggles=(SourceToggles.from_string(args.toggle)
                              if args.toggle else SourceToggles()),
                     ui_dir=args.ui)
    print(f"serving {args.manifest} on http://127.0.0.1:{port}")
    uvicorn.run(app, host="127.0.0.1", port=port, log_level="warning")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="labelfuse4d",
        description="Multi-view label fusion for 4D scan sequences")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, *, weights=True):
        p.add_argument("--manifest", required=True, help="sequence manifest JSON")
        p.add_argument("--out", help="override the manifest output root")
        if weights:
            p.add_argument("--weights", action="append", metavar="K=V",
                           help="override a fusion weight "
                                "(p, o, po, s, b, man), repeatable")
            p.add_argument("--toggle", metavar="SRC[,SRC]",
                           help="enable only these sources (par, opt, sam)")

    p = sub.add_parser("render", help="write multi-view RGB renders")
    add_common(p, weights=False)
    p.add_argument("--frames", help="frame range, e.g. 1-5")
    p.add_argument("--views", help="view range, e.g. 0-11")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("run", help="label every frame of the sequence")
    add_common(p)
    p.add_argument("--resume", action="store_true",
                   help="reuse frames already completed in the output tree")
    p.add_argument("--seed", type=int, default=0,
                   help="recorded for reproducibility (the pipeline is "
                        "deterministic; sampling-based eval uses it)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("rectify", help="apply manual overlays as a second round")
    add_common(p)
    p.add_argument("--frame", type=int, required=True)
    p.add_argument("--propagate", action="store_true",
                   help="reprocess later frames from the corrected labels")
    p.set_defaults(func=cmd_rectify)

    p = sub.add_parser("eval", help="parsing / Chamfer / simulation reports")
    p.add_argument("--kind", choices=("labels", "chamfer", "sim"),
                   default="labels")
    p.add_argument("--pred", help="predicted labels file/dir or mesh")
    p.add_argument("--gt", help="ground-truth labels file/dir or mesh")
    p.add_argument("--sim", help="simulated mesh (kind=sim)")
    p.add_argument("--template", help="rest-state mesh (kind=sim)")
    p.add_argument("-w", type=float, default=1.0,
                   help="stretching weight in the combined loss")
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the report here instead of stdout")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("extract", help="write per-label garment meshes")
    add_common(p, weights=False)
    p.add_argument("--frames", help="frame range, e.g. 1-5")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("serve", help="REST service for the rectification UI")
    add_common(p)
    p.add_argument("--port", type=int, default=None,
                   help=f"default: $LF4D_PORT or {DEFAULT_PORT}")
    p.add_argument("--ui", help="static UI bundle directory to mount")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ManifestError as exc:
        print(f"manifest error: {exc}", file=sys.stderr)
        return 2
    except EvidenceError as exc:
        print(f"evidence error: {exc}", file=sys.stderr)
        return 3
    except (MeshError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 4
    except KeyboardInterrupt:
        raise
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())
