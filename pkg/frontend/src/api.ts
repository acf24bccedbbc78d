/**
 * Typed client for the labeling service's REST endpoints.
 *
 * The UI never computes labels itself — every pixel it shows comes out
 * of these calls, and every correction goes back through them.
 */

export interface FrameStatus {
  index: number;
  status: "pending" | "done";
  rectified: boolean;
}

export interface LabelSpec {
  id: number;
  name: string;
  color: [number, number, number];
}

export interface Registry {
  labels: LabelSpec[];
  /** 256 RGB rows; row 255 is the background color of label renders. */
  palette: number[][];
  image_size: number;
  views: number;
}

/** Column-major run-length mask as stored in masks.json. */
export interface RleMask {
  size: [number, number];
  counts: number[];
}

/** One correction pixel: [x, y, label]. Label -1 erases to background. */
export type Entry = [number, number, number];

export interface CorrectionReceipt {
  frame: number;
  view: number;
  count: number;
}

export interface RectifyReport {
  frame: number;
  rectified: boolean;
  moved: number;
  views: string[];
}

export class ApiError extends Error {
  /** HTTP status, or 0 when the service could not be reached at all. */
  readonly status: number;

  constructor(status: number, detail: string) {
    super(detail);
    this.name = "ApiError";
    this.status = status;
  }
}

async function errorDetail(res: Response): Promise<string> {
  try {
    const body = await res.json();
    if (body && typeof body.detail === "string") return body.detail;
  } catch {
    // non-JSON error body; fall through to the generic line
  }
  return `${res.status} ${res.statusText}`;
}

export class ApiClient {
  constructor(readonly base: string = "") {}

  private async fetchOk(path: string, init?: RequestInit): Promise<Response> {
    let res: Response;
    try {
      res = await fetch(this.base + path, init);
    } catch (err) {
      throw new ApiError(0, `service unreachable: ${err}`);
    }
    if (!res.ok) throw new ApiError(res.status, await errorDetail(res));
    return res;
  }

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await this.fetchOk(path, init);
    return (await res.json()) as T;
  }

  frames(): Promise<FrameStatus[]> {
    return this.json("/frames");
  }

  registry(): Promise<Registry> {
    return this.json("/registry");
  }

  masks(frame: number, view: number): Promise<RleMask[]> {
    return this.json(`/frames/${frame}/views/${view}/masks.json`);
  }

  rgbUrl(frame: number, view: number): string {
    return `${this.base}/frames/${frame}/views/${view}/rgb.png`;
  }

  /** `bust` forces the browser past its cache after a rectify. */
  labelsUrl(frame: number, view: number, bust?: number): string {
    const q = bust === undefined ? "" : `?t=${bust}`;
    return `${this.base}/frames/${frame}/views/${view}/labels.png${q}`;
  }

  /** Raw PNG bytes of the current label render (round 2 when present). */
  async labelsPng(frame: number, view: number): Promise<Uint8Array> {
    const res = await this.fetchOk(`/frames/${frame}/views/${view}/labels.png`);
    return new Uint8Array(await res.arrayBuffer());
  }

  /**
   * Store one view's corrections. The body is the same compact JSON the
   * service writes to disk, so what we send is what a batch file holds.
   */
  submitCorrections(frame: number, view: number,
                    entries: Entry[]): Promise<CorrectionReceipt> {
    return this.json(`/frames/${frame}/views/${view}/corrections`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(entries),
    });
  }

  rectify(frame: number): Promise<RectifyReport> {
    return this.json(`/frames/${frame}/rectify`, { method: "POST" });
  }
}
