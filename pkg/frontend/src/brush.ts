/** Stroke rasterization: pointer paths become deduplicated in-plane voxel
 * lists on the current slice. The service receives exactly these integer
 * coordinates and echoes them back, so rendering stays pixel-exact. */

import type { Axis } from "./api.js";

export interface PlanePoint {
  u: number;
  v: number;
}

/** In-plane pixels of a disc of the given radius around (u, v), clipped to
 * the slice bounds. Radius 0 is exactly the single pixel. */
export function discPixels(u: number, v: number, radius: number,
                           width: number, height: number): PlanePoint[] {
  const out: PlanePoint[] = [];
  const r = Math.max(0, Math.floor(radius));
  for (let dv = -r; dv <= r; dv++) {
    for (let du = -r; du <= r; du++) {
      if (du * du + dv * dv > r * r) continue;
      const uu = u + du;
      const vv = v + dv;
      if (uu < 0 || uu >= width || vv < 0 || vv >= height) continue;
      out.push({ u: uu, v: vv });
    }
  }
  return out;
}

/** All integer points on the segment between two pixels (Bresenham), so fast
 * pointer moves leave no gaps in the stroke. */
export function linePixels(a: PlanePoint, b: PlanePoint): PlanePoint[] {
  const points: PlanePoint[] = [];
  let { u: x0, v: y0 } = a;
  const { u: x1, v: y1 } = b;
  const dx = Math.abs(x1 - x0);
  const dy = -Math.abs(y1 - y0);
  const sx = x0 < x1 ? 1 : -1;
  const sy = y0 < y1 ? 1 : -1;
  let err = dx + dy;
  for (;;) {
    points.push({ u: x0, v: y0 });
    if (x0 === x1 && y0 === y1) break;
    const e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
  return points;
}

/** Rasterize a whole stroke (sequence of pointer samples) with a disc brush,
 * deduplicated, clipped to the slice. */
export function rasterizeStroke(samples: PlanePoint[], radius: number,
                                width: number, height: number): PlanePoint[] {
  const seen = new Set<number>();
  const out: PlanePoint[] = [];
  const stamp = (p: PlanePoint) => {
    for (const q of discPixels(p.u, p.v, radius, width, height)) {
      const key = q.u + width * q.v;
      if (!seen.has(key)) {
        seen.add(key);
        out.push(q);
      }
    }
  };
  if (samples.length === 0) return out;
  stamp(samples[0]);
  for (let i = 1; i < samples.length; i++) {
    for (const p of linePixels(samples[i - 1], samples[i])) stamp(p);
  }
  return out;
}

/** Lift in-plane points to 3-D voxel coordinates on a slice. For axis z the
 * plane axes (u, v) are (x, y); for y they are (x, z); for x they are (y, z). */
export function planeToVoxels(points: PlanePoint[], axis: Axis,
                              index: number): number[][] {
  return points.map(({ u, v }) => {
    switch (axis) {
      case "x":
        return [index, u, v];
      case "y":
        return [u, index, v];
      default:
        return [u, v, index];
    }
  });
}
