/** Run-length decoding of mask slices: per row v, a list of [start, length]
 * runs of foreground along u. Output is a boolean array indexed u + width*v. */

export function decodeMaskRle(rle: number[][][] | null, width: number,
                              height: number): Uint8Array {
  const out = new Uint8Array(width * height);
  if (!rle) return out;
  if (rle.length !== height) {
    throw new Error(`RLE has ${rle.length} rows, slice height is ${height}`);
  }
  for (let v = 0; v < height; v++) {
    for (const run of rle[v]) {
      const [start, length] = run;
      if (start < 0 || start + length > width) {
        throw new Error(`run [${start}, ${length}] exceeds row width ${width}`);
      }
      for (let u = start; u < start + length; u++) out[u + width * v] = 1;
    }
  }
  return out;
}
