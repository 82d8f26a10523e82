/** Decoder for the binary point-cloud stream served by the cluster service.
 *
 * Layout (little-endian): uint32 point count, then one 20-byte record per
 * point: x, y, z, intensity, alpha as float32. Positions are already in
 * physical units; alpha is normalized to [0, 1] server-side.
 */

export const RECORD_BYTES = 20;

export interface ParsedCloud {
  count: number;
  /** xyz triplets, length 3 * count. */
  positions: Float32Array;
  intensities: Float32Array;
  alphas: Float32Array;
}

export function parsePointCloud(buffer: ArrayBuffer): ParsedCloud {
  if (buffer.byteLength < 4) {
    throw new Error(`point stream too short for its count field (${buffer.byteLength} bytes)`);
  }
  const view = new DataView(buffer);
  const count = view.getUint32(0, true);
  const expected = 4 + count * RECORD_BYTES;
  if (buffer.byteLength !== expected) {
    throw new Error(
      `point stream declares ${count} records (${expected} bytes) but holds ${buffer.byteLength}`,
    );
  }

  const positions = new Float32Array(3 * count);
  const intensities = new Float32Array(count);
  const alphas = new Float32Array(count);
  for (let i = 0; i < count; i++) {
    const base = 4 + i * RECORD_BYTES;
    positions[3 * i] = view.getFloat32(base, true);
    positions[3 * i + 1] = view.getFloat32(base + 4, true);
    positions[3 * i + 2] = view.getFloat32(base + 8, true);
    intensities[i] = view.getFloat32(base + 12, true);
    alphas[i] = view.getFloat32(base + 16, true);
  }
  return { count, positions, intensities, alphas };
}
