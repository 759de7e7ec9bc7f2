/** REST client for the annotation service. All coordinates are integer voxel
 * indices in volume space; the service echoes them back verbatim. */

export type Axis = "x" | "y" | "z";
export type ScribbleClass = "foreground" | "background";

export interface SessionInfo {
  id: string;
  dims: [number, number, number];
  spacing: [number, number, number];
  method: string;
}

export interface ScribblePayload {
  foreground: number[][];
  background: number[][];
}

export interface UpdateResult {
  train_time: number;
  infer_time: number;
  mask_voxels: number;
  stability_dice: number | null;
}

export interface SlicePayload {
  axis: Axis;
  index: number;
  width: number;
  height: number;
  intensity_b64: string;
  mask_rle: number[][][] | null;
  scribbles: { foreground: number[][]; background: number[][] };
}

export interface SessionStatus {
  id: string;
  status: "idle" | "updating";
  method: string;
  dims: [number, number, number];
  scribbles: { foreground: number; background: number };
  has_mask: boolean;
  mask_voxels: number;
}

export class ApiError extends Error {
  constructor(public code: number, message: string) {
    super(message);
  }
}

async function parseError(resp: Response): Promise<ApiError> {
  let message = resp.statusText;
  try {
    const body = await resp.json();
    if (body && typeof body.message === "string") message = body.message;
  } catch {
    /* non-JSON error body */
  }
  return new ApiError(resp.status, message);
}

export class Client {
  constructor(private base: string = "") {}

  async createSession(volume: File | Blob, filename: string, method: string,
                      config: object = {}): Promise<SessionInfo> {
    const form = new FormData();
    form.append("volume", volume, filename);
    form.append("method", method);
    form.append("config", JSON.stringify(config));
    const resp = await fetch(`${this.base}/sessions`, { method: "POST", body: form });
    if (!resp.ok) throw await parseError(resp);
    return resp.json();
  }

  async addScribbles(id: string, payload: ScribblePayload) {
    const resp = await fetch(`${this.base}/sessions/${id}/scribbles`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
    if (!resp.ok) throw await parseError(resp);
    return resp.json();
  }

  async update(id: string): Promise<UpdateResult> {
    const resp = await fetch(`${this.base}/sessions/${id}/update`, { method: "POST" });
    if (!resp.ok) throw await parseError(resp);
    return resp.json();
  }

  async getSlice(id: string, axis: Axis, index: number): Promise<SlicePayload> {
    const resp = await fetch(`${this.base}/sessions/${id}/slice/${axis}/${index}`);
    if (!resp.ok) throw await parseError(resp);
    return resp.json();
  }

  async getStatus(id: string): Promise<SessionStatus> {
    const resp = await fetch(`${this.base}/sessions/${id}/status`);
    if (!resp.ok) throw await parseError(resp);
    return resp.json();
  }

  maskDownloadUrl(id: string): string {
    return `${this.base}/sessions/${id}/mask`;
  }
}

/** Decode the base64 grayscale slice payload into a Uint8Array of
 * width*height values, first axis fastest. */
export function decodeIntensity(b64: string): Uint8Array {
  const raw = atob(b64);
  const out = new Uint8Array(raw.length);
  for (let i = 0; i < raw.length; i++) out[i] = raw.charCodeAt(i);
  return out;
}
