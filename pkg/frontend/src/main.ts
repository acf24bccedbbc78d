/**
 * Annotator app shell: one view panel, a label rail, and the
 * pick/brush/submit workflow against the labeling service.
 *
 * Keys: left/right cycle views, up/down cycle frames, enter confirms a
 * picked mask, escape drops the selection, [ and ] resize the brush.
 */

import { ApiClient, ApiError } from "./api.js";
import type { Entry, FrameStatus, Registry } from "./api.js";
import { decodeRle, smallestContaining } from "./rle.js";
import type { DecodedMask } from "./rle.js";
import { CorrectionDraft, MAX_BRUSH, MIN_BRUSH } from "./draft.js";
import { ViewPanel, cssColor } from "./panel.js";

type Mode = "pick" | "brush";

function el<K extends keyof HTMLElementTagNameMap>(
    tag: K, className?: string, text?: string): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

class App {
  private api = new ApiClient("");
  private registry!: Registry;
  private frames: FrameStatus[] = [];
  private draft!: CorrectionDraft;
  private panel!: ViewPanel;

  private frame = 1;
  private view = 0;
  private mode: Mode = "pick";
  private activeLabel = 0;
  private brushRadius = 4;
  private masks: DecodedMask[] | null = null;  // lazy, per frame/view
  private selected = -1;
  private painting = false;
  private busy = false;

  private status!: HTMLElement;
  private bannerBox!: HTMLElement;
  private hint!: HTMLElement;
  private submitBtn!: HTMLButtonElement;
  private brushLabel!: HTMLElement;

  async start(): Promise<void> {
    this.registry = await this.api.registry();
    this.frames = await this.api.frames();
    this.draft = new CorrectionDraft(this.registry.image_size);
    this.buildDom();
    this.bindKeys();
    await this.refresh();
  }

  // -- layout --------------------------------------------------------------

  private buildDom(): void {
    const app = document.getElementById("app")!;
    app.textContent = "";

    const header = el("header");
    this.status = el("div", "status");
    this.bannerBox = el("div", "banner hidden");
    header.append(this.status, this.bannerBox);

    const stage = el("div", "stage");
    this.panel = new ViewPanel(stage, this.registry.image_size);

    const rail = el("aside", "rail");
    rail.append(el("h2", undefined, "labels"));
    for (const spec of this.registry.labels) {
      rail.append(this.labelButton(spec.id, spec.name,
                                   cssColor(spec.color)));
    }
    rail.append(this.labelButton(-1, "other (erase)", "#ffffff"));

    rail.append(el("h2", undefined, "overlay"));
    const opacity = el("input") as HTMLInputElement;
    opacity.type = "range";
    opacity.min = "0";
    opacity.max = "100";
    opacity.value = "60";
    opacity.oninput = () => this.panel.setOpacity(Number(opacity.value) / 100);
    rail.append(opacity);
    this.panel.setOpacity(0.6);

    rail.append(el("h2", undefined, "tool"));
    const modeBtn = el("button", "tool-btn", "mode: pick mask");
    modeBtn.onclick = () => {
      this.mode = this.mode === "pick" ? "brush" : "pick";
      modeBtn.textContent = `mode: ${this.mode === "pick" ? "pick mask" : "brush"}`;
      this.dropSelection();
    };
    rail.append(modeBtn);
    this.brushLabel = el("div", "brush-size", `brush ${this.brushRadius}px`);
    rail.append(this.brushLabel);

    this.submitBtn = el("button", "submit") as HTMLButtonElement;
    this.submitBtn.onclick = () => void this.submit();
    rail.append(this.submitBtn);
    this.hint = el("div", "hint");
    rail.append(this.hint);

    const row = el("div", "columns");
    row.append(stage, rail);
    app.append(header, row);

    const canvasHost = this.panel.root;
    canvasHost.addEventListener("pointerdown", (ev) => this.onDown(ev));
    canvasHost.addEventListener("pointermove", (ev) => this.onMove(ev));
    window.addEventListener("pointerup", () => { this.painting = false; });
    this.syncSubmit();
  }

  private labelButton(id: number, name: string, color: string): HTMLElement {
    const btn = el("button", "label-btn");
    const swatch = el("span", "swatch");
    swatch.style.background = color;
    btn.append(swatch, el("span", undefined, `${id}: ${name}`));
    btn.onclick = () => {
      this.activeLabel = id;
      for (const other of document.querySelectorAll(".label-btn")) {
        other.classList.toggle("active", other === btn);
      }
    };
    if (id === this.activeLabel) btn.classList.add("active");
    return btn;
  }

  // -- navigation ----------------------------------------------------------

  private bindKeys(): void {
    window.addEventListener("keydown", (ev) => {
      if (ev.key === "ArrowRight") this.move(0, 1);
      else if (ev.key === "ArrowLeft") this.move(0, -1);
      else if (ev.key === "ArrowUp") this.move(1, 0);
      else if (ev.key === "ArrowDown") this.move(-1, 0);
      else if (ev.key === "Enter") this.confirmMask();
      else if (ev.key === "Escape") this.dropSelection();
      else if (ev.key === "[") this.setBrush(this.brushRadius - 1);
      else if (ev.key === "]") this.setBrush(this.brushRadius + 1);
      else return;
      ev.preventDefault();
    });
  }

  private setBrush(r: number): void {
    this.brushRadius = Math.min(MAX_BRUSH, Math.max(MIN_BRUSH, r));
    this.brushLabel.textContent = `brush ${this.brushRadius}px`;
  }

  private move(dFrame: number, dView: number): void {
    const nFrames = this.frames.length;
    const nViews = this.registry.views;
    this.frame = ((this.frame - 1 + dFrame + nFrames) % nFrames) + 1;
    this.view = (this.view + dView + nViews) % nViews;
    void this.refresh();
  }

  private async refresh(bust?: number): Promise<void> {
    this.masks = null;
    this.selected = -1;
    this.panel.clearHover();
    const here = this.frames.find((f) => f.index === this.frame);
    const state = here
      ? `${here.status}${here.rectified ? ", rectified" : ""}` : "?";
    this.status.textContent =
      `frame ${this.frame}/${this.frames.length} · view ${this.view} · ${state}`;
    try {
      await this.panel.show(this.api, this.frame, this.view, bust);
      this.clearBanner();
    } catch (err) {
      this.banner(err instanceof ApiError && err.status === 404
        ? `frame ${this.frame} has no renders yet — run the pipeline first`
        : `service not reachable: ${err}`);
    }
    this.redrawDraft();
  }

  // -- picking and painting --------------------------------------------------

  private async ensureMasks(): Promise<DecodedMask[]> {
    if (this.masks === null) {
      const raw = await this.api.masks(this.frame, this.view);
      this.masks = raw.map(decodeRle);
    }
    return this.masks;
  }

  private onDown(ev: PointerEvent): void {
    const at = this.panel.pixelAt(ev);
    if (!at) return;
    if (this.mode === "brush") {
      this.painting = true;
      this.draft.stamp(this.view, at.x, at.y, this.brushRadius,
                       this.activeLabel);
      this.redrawDraft();
      return;
    }
    void this.pickAt(at.x, at.y);
  }

  private onMove(ev: PointerEvent): void {
    if (!this.painting || this.mode !== "brush") return;
    const at = this.panel.pixelAt(ev);
    if (!at) return;
    this.draft.stamp(this.view, at.x, at.y, this.brushRadius,
                     this.activeLabel);
    this.redrawDraft();
  }

  private async pickAt(x: number, y: number): Promise<void> {
    let masks: DecodedMask[];
    try {
      masks = await this.ensureMasks();
    } catch (err) {
      this.banner(`masks unavailable: ${err}`);
      return;
    }
    this.selected = smallestContaining(masks, x, y);
    if (this.selected < 0) {
      this.panel.clearHover();
      this.redrawDraft();
      this.hint.textContent =
        "no mask under the cursor — switch to brush mode to paint";
      return;
    }
    this.panel.showMask(masks[this.selected]);
    this.redrawDraft();
    const area = masks[this.selected].area;
    this.hint.textContent =
      `mask of ${area} px selected — enter assigns label ${this.activeLabel}`;
  }

  private confirmMask(): void {
    if (this.selected < 0 || this.masks === null) return;
    this.draft.applyMask(this.view, this.masks[this.selected],
                         this.activeLabel);
    this.dropSelection();
  }

  private dropSelection(): void {
    this.selected = -1;
    this.panel.clearHover();
    this.redrawDraft();
    this.hint.textContent = "";
  }

  private redrawDraft(): void {
    if (this.selected < 0) this.panel.clearHover();
    if (this.masks !== null && this.selected >= 0) {
      this.panel.showMask(this.masks[this.selected]);
    }
    this.panel.showDraft(this.draft.entries(this.view),
                         this.registry.palette);
    this.syncSubmit();
  }

  private syncSubmit(): void {
    const n = this.draft.total();
    this.submitBtn.disabled = this.busy || n === 0;
    this.submitBtn.textContent = this.busy
      ? "rectifying…" : `submit ${n} px`;
  }

  // -- submit --------------------------------------------------------------

  private async submit(): Promise<void> {
    if (this.busy || this.draft.total() === 0) return;
    this.busy = true;
    this.syncSubmit();
    try {
      for (const view of this.draft.views()) {
        await this.api.submitCorrections(this.frame, view,
                                         this.draft.entries(view));
      }
      const report = await this.api.rectify(this.frame);
      this.draft.clear();
      this.frames = await this.api.frames();
      await this.refresh(Date.now());
      this.hint.textContent =
        `rectified: ${report.moved} vertices moved`;
    } catch (err) {
      // the draft survives a failed submit so nothing is lost
      if (err instanceof ApiError && err.status === 409) {
        this.banner("another rectification is still running — try again shortly");
      } else {
        this.banner(`submit failed: ${err}`);
      }
    } finally {
      this.busy = false;
      this.syncSubmit();
    }
  }

  // -- notices ---------------------------------------------------------------

  private banner(msg: string): void {
    this.bannerBox.textContent = msg;
    this.bannerBox.classList.remove("hidden");
  }

  private clearBanner(): void {
    this.bannerBox.classList.add("hidden");
  }
}

new App().start().catch((err) => {
  const box = document.getElementById("app")!;
  box.textContent = `could not reach the labeling service: ${err}`;
  box.className = "dead";
});
