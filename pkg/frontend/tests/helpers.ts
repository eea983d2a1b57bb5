import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

export const FIXTURE_ROOT = path.join(__dirname, "fixtures", "protocol");

export interface FixtureCase {
  kind: "propagate" | "fit" | "predict" | "error";
  name: string;
}

export function loadCases(): FixtureCase[] {
  return JSON.parse(fs.readFileSync(path.join(FIXTURE_ROOT, "cases.json"), "utf8"));
}

export function substitutePlaceholder(text: string, requestDir: string): string {
  return text.split("__REQUEST_DIR__").join(requestDir);
}

/** Copy a frozen request directory somewhere writable and point the
 * placeholder model paths at the copy. */
export function materializeFixture(name: string): string {
  const requestDir = fs.mkdtempSync(path.join(os.tmpdir(), `${name}-`));
  fs.cpSync(path.join(FIXTURE_ROOT, name, "request"), requestDir, { recursive: true });
  const requestPath = path.join(requestDir, "request.json");
  const raw = fs.readFileSync(requestPath, "utf8");
  fs.writeFileSync(requestPath, substitutePlaceholder(raw, requestDir));
  return requestDir;
}

export interface NiftiSpec {
  /** [nx, ny, nz] — x fastest, like the on-disk layout */
  dims: [number, number, number];
  /** [dx, dy, dz] in millimetres */
  pixdims?: [number, number, number];
  datatypeCode?: number;
  sclSlope?: number;
  sclInter?: number;
  /** one value per voxel, x fastest */
  values: number[];
  /** trailing dim sizes beyond z, to fake a time series */
  extraDims?: number[];
}

const BITPIX: Record<number, number> = { 2: 8, 4: 16, 8: 32, 16: 32, 64: 64 };

/** Hand-assembled single-file NIfTI-1, independent of any parser library. */
export function buildNifti(spec: NiftiSpec): Buffer {
  const datatype = spec.datatypeCode ?? 16;
  const bitpix = BITPIX[datatype];
  if (!bitpix) {
    throw new Error(`buildNifti: unsupported datatype ${datatype}`);
  }
  const [nx, ny, nz] = spec.dims;
  const extra = spec.extraDims ?? [];
  const voxOffset = 352;
  const header = Buffer.alloc(voxOffset);
  header.writeInt32LE(348, 0); // sizeof_hdr
  header.writeInt16LE(3 + extra.length, 40); // dim[0]
  const dims = [nx, ny, nz, ...extra];
  dims.forEach((d, i) => header.writeInt16LE(d, 42 + 2 * i));
  header.writeInt16LE(datatype, 70);
  header.writeInt16LE(bitpix, 72);
  const [dx, dy, dz] = spec.pixdims ?? [1, 1, 1];
  header.writeFloatLE(1, 76); // pixdim[0] (qfac)
  [dx, dy, dz].forEach((p, i) => header.writeFloatLE(p, 80 + 4 * i));
  header.writeFloatLE(voxOffset, 108);
  header.writeFloatLE(spec.sclSlope ?? 0, 112);
  header.writeFloatLE(spec.sclInter ?? 0, 116);
  header.write("n+1\0", 344, "latin1");

  const count = spec.values.length;
  const body = Buffer.alloc((count * bitpix) / 8);
  spec.values.forEach((v, i) => {
    switch (datatype) {
      case 2:
        body.writeUInt8(v, i);
        break;
      case 4:
        body.writeInt16LE(v, 2 * i);
        break;
      case 8:
        body.writeInt32LE(v, 4 * i);
        break;
      case 16:
        body.writeFloatLE(v, 4 * i);
        break;
      case 64:
        body.writeDoubleLE(v, 8 * i);
        break;
    }
  });
  return Buffer.concat([header, body]);
}

export function tmpFile(name: string): string {
  return path.join(fs.mkdtempSync(path.join(os.tmpdir(), "bridge-")), name);
}
