"""REST service backing the rectification UI.

Serves frame status, rendered RGB/label images, segmentation masks, and
the label registry; accepts sparse correction overlays per view and a
rectify trigger per frame.  Corrections are written to the evidence tree
in the same canonical JSON used by batch files, so UI sessions and
hand-authored overlays are interchangeable.  Rectify requests are
serialized per frame: concurrent ones get 409.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse

from .energy import FusionWeights
from .evidence import RectificationOverlay, save_overlay
from .pipeline import SourceToggles, rectify_sequence_frame
from .scene_io import BACKGROUND, SequenceManifest

N_VIEWS = 24


def create_app(manifest: SequenceManifest, weights: FusionWeights | None = None,
               toggles: SourceToggles | None = None,
               ui_dir: str | None = None) -> FastAPI:
    weights = weights or FusionWeights()
    toggles = toggles or SourceToggles()
    app = FastAPI(title="labelfuse4d rectification service")
    busy: set[int] = set()
    busy_lock = threading.Lock()
    n_labels = len(manifest.registry)
    size = manifest.image_size

    def _known_frame(k: int) -> bool:
        return 1 <= k <= manifest.n_frames

    def _not_found(what: str) -> JSONResponse:
        return JSONResponse({"detail": what}, status_code=404)

    @app.get("/frames")
    def frames():
        out = []
        for k in manifest.frame_indices():
            done = manifest.labels_path(k).is_file()
            rectified = manifest.labels_path(k, round2=True).is_file()
            out.append({"index": k,
                        "status": "done" if done else "pending",
                        "rectified": rectified})
        return out

    @app.get("/registry")
    def registry():
        return {
            "labels": manifest.registry.to_json(),
            "palette": manifest.registry.palette().tolist(),
            "image_size": size,
            "views": N_VIEWS,
        }

    def _serve_png(path: Path) -> Response:
        if not path.is_file():
            return _not_found(f"no image at {path.name}")
        return Response(content=path.read_bytes(), media_type="image/png")

    @app.get("/frames/{k}/views/{n}/rgb.png")
    def rgb_png(k: int, n: int):
        if not _known_frame(k) or not 0 <= n < N_VIEWS:
            return _not_found("unknown frame or view")
        return _serve_png(manifest.rgb_path(k, n))

    @app.get("/frames/{k}/views/{n}/labels.png")
    def labels_png(k: int, n: int):
        if not _known_frame(k) or not 0 <= n < N_VIEWS:
            return _not_found("unknown frame or view")
        r2 = manifest.label_png_path(k, n, round2=True)
        return _serve_png(r2 if r2.is_file() else manifest.label_png_path(k, n))

    @app.get("/frames/{k}/views/{n}/masks.json")
    def masks_json(k: int, n: int):
        if not _known_frame(k) or not 0 <= n < N_VIEWS:
            return _not_found("unknown frame or view")
        path = manifest.masks_path(k, n)
        if not path.is_file():
            return JSONResponse([])  # no masks for this view
        return Response(content=path.read_bytes(), media_type="application/json")

    @app.post("/frames/{k}/views/{n}/corrections")
    async def corrections(k: int, n: int, request: Request):
        if not _known_frame(k) or not 0 <= n < N_VIEWS:
            return _not_found("unknown frame or view")
        try:
            body = json.loads(await request.body())
        except json.JSONDecodeError:
            return JSONResponse({"detail": "body is not valid JSON"}, status_code=400)
        if not isinstance(body, list):
            return JSONResponse({"detail": "overlay must be a list of [x, y, label]"},
                                status_code=400)
        for item in body:
            if (not isinstance(item, list) or len(item) != 3
                    or not all(isinstance(v, int) and not isinstance(v, bool)
                               for v in item)):
                return JSONResponse({"detail": f"bad overlay entry {item!r}"},
                                    status_code=400)
            x, y, lab = item
            if not (0 <= x < size and 0 <= y < size):
                return JSONResponse(
                    {"detail": f"pixel ({x}, {y}) outside the {size}x{size} image"},
                    status_code=400)
            if not (lab == BACKGROUND or 0 <= lab < n_labels):
                return JSONResponse({"detail": f"label {lab} not in the registry"},
                                    status_code=400)
        save_overlay(RectificationOverlay.from_json_obj(body),
                     manifest.manual_path(k, n))
        return {"frame": k, "view": n, "count": len(body)}

    @app.post("/frames/{k}/rectify")
    def rectify(k: int):
        if not _known_frame(k):
            return _not_found("unknown frame")
        if not manifest.labels_path(k).is_file():
            return JSONResponse(
                {"detail": f"frame {k} has no round-1 labels yet"}, status_code=409)
        with busy_lock:
            if k in busy:
                return JSONResponse(
                    {"detail": f"frame {k} rectification already running"},
                    status_code=409)
            busy.add(k)
        try:
            result = rectify_sequence_frame(manifest, k, weights, toggles)[0]
        finally:
            with busy_lock:
                busy.discard(k)
        return {
            "frame": k,
            "rectified": result.rectified,
            "moved": result.moved,
            "views": [f"/frames/{k}/views/{n}/labels.png" for n in range(N_VIEWS)],
        }

    if ui_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
