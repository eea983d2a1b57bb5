/**
 * Reader/writer for the engine's paired volume files: `<stem>.json` holds
 * the header, `<stem>.raw` the C-order little-endian voxel payload.
 * f32 blobs carry images, logits or probabilities; u8 blobs carry binary
 * masks and may only contain 0 or 1.
 */

import * as fs from "node:fs";

import { BridgeError } from "./errors";

export type Dtype = "f32" | "u8";
export type Shape = [number, number, number];

export interface Volume {
  dtype: Dtype;
  /** [frames, height, width] */
  shape: Shape;
  /** millimetres per voxel along each shape axis */
  spacingMm: [number, number, number];
  data: Float32Array | Uint8Array;
}

export function voxelCount(shape: Shape): number {
  return shape[0] * shape[1] * shape[2];
}

function checkTriple(value: unknown, what: string, path: string): asserts value is number[] {
  if (!Array.isArray(value) || value.length !== 3) {
    throw new BridgeError(`bad ${what} ${JSON.stringify(value)} in ${path}`);
  }
}

export function readVolume(stem: string): Volume {
  const headerPath = `${stem}.json`;
  const rawPath = `${stem}.raw`;
  if (!fs.existsSync(headerPath)) {
    throw new BridgeError(`missing volume header: ${headerPath}`);
  }
  let header: Record<string, unknown>;
  try {
    header = JSON.parse(fs.readFileSync(headerPath, "utf8"));
  } catch (e) {
    throw new BridgeError(`unreadable header ${headerPath}: ${e}`);
  }
  if (header === null || typeof header !== "object") {
    throw new BridgeError(`header ${headerPath} is not an object`);
  }
  if (header.mvol !== 1) {
    throw new BridgeError(`unsupported mvol version ${JSON.stringify(header.mvol)}`);
  }
  const dtype = header.dtype;
  if (dtype !== "f32" && dtype !== "u8") {
    throw new BridgeError(`unsupported dtype ${JSON.stringify(dtype)} in ${headerPath}`);
  }
  if (header.order !== "C" || header.endian !== "LE") {
    throw new BridgeError("only C-order little-endian volumes are supported");
  }
  checkTriple(header.shape, "shape", headerPath);
  const shape = header.shape as Shape;
  if (shape.some((d) => !Number.isInteger(d) || d < 1)) {
    throw new BridgeError(`bad shape ${JSON.stringify(shape)} in ${headerPath}`);
  }
  checkTriple(header.spacing_mm, "spacing_mm", headerPath);
  const spacingMm = header.spacing_mm as [number, number, number];
  if (spacingMm.some((s) => typeof s !== "number" || !(s > 0) || !Number.isFinite(s))) {
    throw new BridgeError(`bad spacing ${JSON.stringify(spacingMm)} in ${headerPath}`);
  }

  if (!fs.existsSync(rawPath)) {
    throw new BridgeError(`missing volume blob: ${rawPath}`);
  }
  const blob = fs.readFileSync(rawPath);
  const count = voxelCount(shape);
  const itemSize = dtype === "f32" ? 4 : 1;
  if (blob.length !== count * itemSize) {
    throw new BridgeError(
      `${rawPath}: blob is ${blob.length} bytes, header implies ${count * itemSize}`
    );
  }
  let data: Float32Array | Uint8Array;
  if (dtype === "f32") {
    const view = new DataView(blob.buffer, blob.byteOffset, blob.length);
    const floats = new Float32Array(count);
    for (let i = 0; i < count; i++) {
      floats[i] = view.getFloat32(4 * i, true);
    }
    data = floats;
  } else {
    data = Uint8Array.from(blob);
    for (let i = 0; i < count; i++) {
      if (data[i] > 1) {
        throw new BridgeError(`${rawPath}: u8 masks may only contain 0 or 1`);
      }
    }
  }
  return { dtype, shape, spacingMm, data };
}

export function writeVolume(stem: string, volume: Volume): void {
  const count = voxelCount(volume.shape);
  if (volume.data.length !== count) {
    throw new BridgeError(
      `volume ${stem}: ${volume.data.length} voxels for shape ${JSON.stringify(volume.shape)}`
    );
  }
  // keys listed alphabetically so the serialized header has sorted keys
  const header = {
    dtype: volume.dtype,
    endian: "LE",
    mvol: 1,
    order: "C",
    shape: volume.shape,
    spacing_mm: volume.spacingMm,
  };
  let raw: Buffer;
  if (volume.dtype === "f32") {
    raw = Buffer.alloc(4 * count);
    const view = new DataView(raw.buffer, raw.byteOffset, raw.length);
    for (let i = 0; i < count; i++) {
      view.setFloat32(4 * i, volume.data[i], true);
    }
  } else {
    raw = Buffer.from(volume.data as Uint8Array);
  }
  fs.writeFileSync(`${stem}.json`, JSON.stringify(header) + "\n");
  fs.writeFileSync(`${stem}.raw`, raw);
}
