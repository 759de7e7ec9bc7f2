import { describe, expect, it } from "vitest";
import { decodeMaskRle } from "../src/rle.js";

describe("mask RLE decoding", () => {
  it("decodes runs per row", () => {
    const rle = [
      [[0, 2]],            // row 0: uu....
      [],                  // row 1: empty
      [[1, 1], [3, 2]],    // row 2: .u.uu
    ];
    const mask = decodeMaskRle(rle, 5, 3);
    const row = (v: number) => Array.from(mask.slice(5 * v, 5 * v + 5));
    expect(row(0)).toEqual([1, 1, 0, 0, 0]);
    expect(row(1)).toEqual([0, 0, 0, 0, 0]);
    expect(row(2)).toEqual([0, 1, 0, 1, 1]);
  });

  it("null payload is an empty mask", () => {
    expect(Array.from(decodeMaskRle(null, 2, 2))).toEqual([0, 0, 0, 0]);
  });

  it("round-trips a random mask through encode/decode", () => {
    // encoder mirror of the service's row encoding
    const width = 17, height = 9;
    const src = new Uint8Array(width * height);
    let seed = 1234;
    const rand = () => (seed = (seed * 1103515245 + 12345) % 2 ** 31) / 2 ** 31;
    for (let i = 0; i < src.length; i++) src[i] = rand() < 0.4 ? 1 : 0;
    const rle: number[][][] = [];
    for (let v = 0; v < height; v++) {
      const runs: number[][] = [];
      let start = -1;
      for (let u = 0; u < width; u++) {
        const on = src[u + width * v] === 1;
        if (on && start < 0) start = u;
        if (!on && start >= 0) {
          runs.push([start, u - start]);
          start = -1;
        }
      }
      if (start >= 0) runs.push([start, width - start]);
      rle.push(runs);
    }
    expect(Array.from(decodeMaskRle(rle, width, height))).toEqual(Array.from(src));
  });

  it("rejects malformed rows", () => {
    expect(() => decodeMaskRle([[[0, 3]]], 2, 1)).toThrow(/exceeds/);
    expect(() => decodeMaskRle([[]], 4, 2)).toThrow(/rows/);
  });
});
