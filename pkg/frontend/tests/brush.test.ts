import { describe, expect, it } from "vitest";
import { discPixels, linePixels, planeToVoxels, rasterizeStroke } from "../src/brush.js";

describe("disc rasterization", () => {
  it("radius 0 is exactly one pixel", () => {
    expect(discPixels(4, 5, 0, 10, 10)).toEqual([{ u: 4, v: 5 }]);
  });

  it("radius 1 is the 5-pixel plus shape", () => {
    const pts = discPixels(4, 4, 1, 10, 10);
    expect(pts).toHaveLength(5);
    expect(pts).toContainEqual({ u: 4, v: 4 });
    expect(pts).toContainEqual({ u: 3, v: 4 });
    expect(pts).toContainEqual({ u: 5, v: 4 });
    expect(pts).toContainEqual({ u: 4, v: 3 });
    expect(pts).toContainEqual({ u: 4, v: 5 });
  });

  it("clips to the slice bounds", () => {
    const pts = discPixels(0, 0, 2, 8, 8);
    expect(pts.every((p) => p.u >= 0 && p.v >= 0)).toBe(true);
    expect(pts.some((p) => p.u < 0 || p.v < 0)).toBe(false);
  });
});

describe("stroke rasterization", () => {
  it("single click with radius 0 sends exactly one voxel", () => {
    expect(rasterizeStroke([{ u: 3, v: 3 }], 0, 16, 16)).toEqual([{ u: 3, v: 3 }]);
  });

  it("a 5-pixel row stroke with radius 0 sends 5 voxels", () => {
    const samples = [0, 1, 2, 3, 4].map((u) => ({ u, v: 2 }));
    const pts = rasterizeStroke(samples, 0, 16, 16);
    expect(pts).toHaveLength(5);
    expect(pts.map((p) => p.u).sort((a, b) => a - b)).toEqual([0, 1, 2, 3, 4]);
  });

  it("interpolates across skipped pointer samples", () => {
    const pts = rasterizeStroke([{ u: 0, v: 0 }, { u: 6, v: 0 }], 0, 16, 16);
    expect(pts).toHaveLength(7); // no gaps
  });

  it("deduplicates overlapping stamps", () => {
    const samples = [{ u: 5, v: 5 }, { u: 5, v: 5 }, { u: 6, v: 5 }];
    const pts = rasterizeStroke(samples, 1, 16, 16);
    const keys = new Set(pts.map((p) => `${p.u},${p.v}`));
    expect(keys.size).toBe(pts.length);
  });

  it("empty stroke sends nothing", () => {
    expect(rasterizeStroke([], 3, 16, 16)).toEqual([]);
  });
});

describe("line rasterization", () => {
  it("covers both endpoints", () => {
    const pts = linePixels({ u: 1, v: 1 }, { u: 4, v: 3 });
    expect(pts[0]).toEqual({ u: 1, v: 1 });
    expect(pts[pts.length - 1]).toEqual({ u: 4, v: 3 });
  });
});

describe("plane to voxel lifting", () => {
  const pts = [{ u: 2, v: 7 }];

  it("z slices map (u, v) to (x, y)", () => {
    expect(planeToVoxels(pts, "z", 9)).toEqual([[2, 7, 9]]);
  });

  it("y slices map (u, v) to (x, z)", () => {
    expect(planeToVoxels(pts, "y", 9)).toEqual([[2, 9, 7]]);
  });

  it("x slices map (u, v) to (y, z)", () => {
    expect(planeToVoxels(pts, "x", 9)).toEqual([[9, 2, 7]]);
  });
});
