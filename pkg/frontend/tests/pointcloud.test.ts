import { describe, expect, it } from "vitest";

import { parsePointCloud, RECORD_BYTES } from "../src/pointcloud";

function buildStream(records: number[][]): ArrayBuffer {
  const buffer = new ArrayBuffer(4 + records.length * RECORD_BYTES);
  const view = new DataView(buffer);
  view.setUint32(0, records.length, true);
  records.forEach((rec, i) => {
    rec.forEach((value, j) => view.setFloat32(4 + i * RECORD_BYTES + 4 * j, value, true));
  });
  return buffer;
}

describe("parsePointCloud", () => {
  it("decodes records field by field", () => {
    const cloud = parsePointCloud(
      buildStream([
        [1, 2, 3, 40, 0.25],
        [5, 6, 7, 80, 1.0],
      ]),
    );
    expect(cloud.count).toBe(2);
    expect([...cloud.positions]).toEqual([1, 2, 3, 5, 6, 7]);
    expect([...cloud.intensities]).toEqual([40, 80]);
    expect([...cloud.alphas]).toEqual([0.25, 1.0]);
  });

  it("handles the empty stream", () => {
    const cloud = parsePointCloud(buildStream([]));
    expect(cloud.count).toBe(0);
    expect(cloud.positions.length).toBe(0);
  });

  it("rejects a buffer shorter than its count field", () => {
    expect(() => parsePointCloud(new ArrayBuffer(3))).toThrow(/too short/);
  });

  it("rejects a count that disagrees with the byte length", () => {
    const buffer = new ArrayBuffer(4 + RECORD_BYTES);
    new DataView(buffer).setUint32(0, 2, true);
    expect(() => parsePointCloud(buffer)).toThrow(/declares 2 records .* but holds 24/);
  });

  it("preserves float32 values exactly", () => {
    const value = Math.fround(0.1);
    const cloud = parsePointCloud(buildStream([[value, value, value, value, 0.5]]));
    expect(cloud.positions[0]).toBe(value);
    expect(cloud.intensities[0]).toBe(value);
  });
});
