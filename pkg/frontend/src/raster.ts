/**
 * Expand a flat row-major grayscale image into RGBA bytes with
 * nearest-neighbor upscaling, so small glyphs stay crisp instead of
 * being blurred by the canvas default. Values map [lo, hi] -> 0..255
 * and clamp outside that range.
 */
export function grayscaleToRgba(
  values: ArrayLike<number>,
  width: number,
  height: number,
  scale = 1,
  range: readonly [number, number] = [0, 1],
): Uint8ClampedArray<ArrayBuffer> {
  if (!Number.isInteger(scale) || scale < 1) {
    throw new RangeError(`scale must be a positive integer, got ${scale}`);
  }
  if (values.length !== width * height) {
    throw new RangeError(
      `expected ${width * height} values for ${width}x${height}, got ${values.length}`,
    );
  }
  const [lo, hi] = range;
  const span = hi - lo || 1;
  const outWidth = width * scale;
  const out = new Uint8ClampedArray(4 * outWidth * height * scale);
  for (let y = 0; y < height * scale; y++) {
    const srcRow = Math.floor(y / scale) * width;
    for (let x = 0; x < outWidth; x++) {
      const v = (values[srcRow + Math.floor(x / scale)] - lo) / span;
      const byte = Math.round(255 * Math.max(0, Math.min(1, v)));
      const j = 4 * (y * outWidth + x);
      out[j] = out[j + 1] = out[j + 2] = byte;
      out[j + 3] = 255;
    }
  }
  return out;
}

/** Evenly spaced values from lo to hi inclusive; steps must be >= 2. */
export function intensityGrid(lo: number, hi: number, steps: number): number[] {
  if (!Number.isInteger(steps) || steps < 2) {
    throw new RangeError(`steps must be an integer >= 2, got ${steps}`);
  }
  const values = new Array<number>(steps);
  for (let i = 0; i < steps; i++) {
    values[i] = lo + ((hi - lo) * i) / (steps - 1);
  }
  return values;
}
