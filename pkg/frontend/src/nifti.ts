/**
 * Import of clinical NIfTI volumes (.nii / .nii.gz) into the engine's
 * paired-file format.  Parsing is delegated to nifti-reader-js; this
 * module only converts the payload to float32, applies the header's
 * intensity scaling and maps the axes.
 *
 * NIfTI stores voxels x-fastest as [z][y][x], which is exactly the
 * engine's C-order [frames, height, width] layout, so no transpose is
 * needed; spacing comes from pixdim in the same axis order.
 */

import * as fs from "node:fs";

import * as nifti from "nifti-reader-js";

import { UnsupportedFormatError } from "./errors";
import { Volume } from "./mvol";

function toArrayBuffer(buffer: Buffer): ArrayBuffer {
  const copy = new ArrayBuffer(buffer.length);
  new Uint8Array(copy).set(buffer);
  return copy;
}

function readScaled(
  payload: ArrayBuffer,
  datatypeCode: number,
  count: number,
  littleEndian: boolean,
  slope: number,
  inter: number
): Float32Array {
  const view = new DataView(payload);
  const scale = slope !== 0 && !(slope === 1 && inter === 0);
  let readOne: (offset: number) => number;
  let itemSize: number;
  switch (datatypeCode) {
    case nifti.NIFTI1.TYPE_UINT8:
      readOne = (o) => view.getUint8(o);
      itemSize = 1;
      break;
    case nifti.NIFTI1.TYPE_INT16:
      readOne = (o) => view.getInt16(o, littleEndian);
      itemSize = 2;
      break;
    case nifti.NIFTI1.TYPE_INT32:
      readOne = (o) => view.getInt32(o, littleEndian);
      itemSize = 4;
      break;
    case nifti.NIFTI1.TYPE_FLOAT32:
      readOne = (o) => view.getFloat32(o, littleEndian);
      itemSize = 4;
      break;
    case nifti.NIFTI1.TYPE_FLOAT64:
      readOne = (o) => view.getFloat64(o, littleEndian);
      itemSize = 8;
      break;
    default:
      throw new UnsupportedFormatError(`unsupported NIfTI datatype code ${datatypeCode}`);
  }
  if (payload.byteLength < count * itemSize) {
    throw new UnsupportedFormatError(
      `truncated NIfTI payload: ${payload.byteLength} bytes for ${count} voxels`
    );
  }
  const values = new Float32Array(count);
  for (let i = 0; i < count; i++) {
    const v = readOne(i * itemSize);
    values[i] = scale ? v * slope + inter : v;
  }
  return values;
}

function spacingOf(pixDim: number | undefined): number {
  // clinical headers sometimes leave pixdim unset or zero
  const s = Math.abs(pixDim ?? 0);
  return s > 0 && Number.isFinite(s) ? s : 1.0;
}

export function importNifti(inputPath: string): Volume {
  let data: ArrayBuffer;
  try {
    data = toArrayBuffer(fs.readFileSync(inputPath));
  } catch (e) {
    throw new UnsupportedFormatError(`cannot read ${inputPath}: ${e}`);
  }
  if (nifti.isCompressed(data)) {
    try {
      data = nifti.decompress(data) as ArrayBuffer;
    } catch (e) {
      throw new UnsupportedFormatError(`cannot decompress ${inputPath}: ${e}`);
    }
  }
  if (!nifti.isNIFTI(data)) {
    throw new UnsupportedFormatError(
      `${inputPath} is not a NIfTI volume; only .nii/.nii.gz import is supported`
    );
  }
  const header = nifti.readHeader(data);
  if (!header) {
    throw new UnsupportedFormatError(`cannot parse the NIfTI header of ${inputPath}`);
  }
  const ndim = header.dims[0];
  if (ndim < 3) {
    throw new UnsupportedFormatError(`${inputPath} is ${ndim}-dimensional; need a 3D volume`);
  }
  for (let axis = 4; axis <= ndim; axis++) {
    if (header.dims[axis] > 1) {
      throw new UnsupportedFormatError(
        `${inputPath} holds a ${ndim}D series; only single volumes are supported`
      );
    }
  }
  const [nx, ny, nz] = [header.dims[1], header.dims[2], header.dims[3]];
  if (!(nx >= 1 && ny >= 1 && nz >= 1)) {
    throw new UnsupportedFormatError(`bad NIfTI dimensions ${nx}x${ny}x${nz} in ${inputPath}`);
  }
  const payload = nifti.readImage(header, data);
  const values = readScaled(
    payload,
    header.datatypeCode,
    nx * ny * nz,
    header.littleEndian,
    header.scl_slope,
    header.scl_inter
  );
  return {
    dtype: "f32",
    shape: [nz, ny, nx],
    spacingMm: [spacingOf(header.pixDims[3]), spacingOf(header.pixDims[2]), spacingOf(header.pixDims[1])],
    data: values,
  };
}
