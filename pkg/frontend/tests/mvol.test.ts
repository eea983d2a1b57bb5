import * as fs from "node:fs";

import { describe, expect, it } from "vitest";

import { BridgeError } from "../src/errors";
import { readVolume, writeVolume, Volume } from "../src/mvol";
import { tmpFile } from "./helpers";

describe("readVolume/writeVolume", () => {
  it("round-trips an f32 volume bitwise", () => {
    const stem = tmpFile("vol");
    const volume: Volume = {
      dtype: "f32",
      shape: [2, 3, 2],
      spacingMm: [1.5, 0.5, 0.5],
      data: Float32Array.from([0, -0, 1.25, -7.5, 3e-12, 1e20, 9.75, -1, 2, 3, 4, 5.5]),
    };
    writeVolume(stem, volume);
    const back = readVolume(stem);
    expect(back.dtype).toBe("f32");
    expect(back.shape).toEqual([2, 3, 2]);
    expect(back.spacingMm).toEqual([1.5, 0.5, 0.5]);
    expect(Buffer.from(back.data.buffer).equals(Buffer.from(volume.data.buffer))).toBe(true);
  });

  it("round-trips a u8 mask", () => {
    const stem = tmpFile("mask");
    const volume: Volume = {
      dtype: "u8",
      shape: [1, 2, 3],
      spacingMm: [2, 1, 1],
      data: Uint8Array.from([0, 1, 1, 0, 0, 1]),
    };
    writeVolume(stem, volume);
    const back = readVolume(stem);
    expect(back.dtype).toBe("u8");
    expect(Array.from(back.data)).toEqual([0, 1, 1, 0, 0, 1]);
  });

  it("writes a sorted-key, newline-terminated header", () => {
    const stem = tmpFile("hdr");
    writeVolume(stem, {
      dtype: "u8",
      shape: [1, 2, 2],
      spacingMm: [1, 1, 1],
      data: Uint8Array.from([0, 1, 0, 1]),
    });
    expect(fs.readFileSync(`${stem}.json`, "utf8")).toBe(
      '{"dtype":"u8","endian":"LE","mvol":1,"order":"C","shape":[1,2,2],"spacing_mm":[1,1,1]}\n'
    );
  });

  it("reads engine-style headers with float spacing literals", () => {
    const stem = tmpFile("eng");
    fs.writeFileSync(
      `${stem}.json`,
      '{"dtype":"f32","endian":"LE","mvol":1,"order":"C","shape":[1,1,2],"spacing_mm":[1.0,0.5,0.5]}\n'
    );
    const raw = Buffer.alloc(8);
    raw.writeFloatLE(4.5, 0);
    raw.writeFloatLE(-2.25, 4);
    fs.writeFileSync(`${stem}.raw`, raw);
    const back = readVolume(stem);
    expect(back.spacingMm).toEqual([1, 0.5, 0.5]);
    expect(Array.from(back.data)).toEqual([4.5, -2.25]);
  });

  it("rejects a blob whose size disagrees with the header", () => {
    const stem = tmpFile("short");
    writeVolume(stem, {
      dtype: "f32",
      shape: [1, 1, 2],
      spacingMm: [1, 1, 1],
      data: Float32Array.from([1, 2]),
    });
    fs.truncateSync(`${stem}.raw`, 4);
    expect(() => readVolume(stem)).toThrow(BridgeError);
  });

  it("rejects masks holding values other than 0 and 1", () => {
    const stem = tmpFile("bad");
    fs.writeFileSync(
      `${stem}.json`,
      '{"dtype":"u8","endian":"LE","mvol":1,"order":"C","shape":[1,1,2],"spacing_mm":[1,1,1]}\n'
    );
    fs.writeFileSync(`${stem}.raw`, Buffer.from([0, 2]));
    expect(() => readVolume(stem)).toThrow(/0 or 1/);
  });

  it.each([
    ["unknown dtype", '{"dtype":"i16","endian":"LE","mvol":1,"order":"C","shape":[1,1,1],"spacing_mm":[1,1,1]}'],
    ["wrong version", '{"dtype":"f32","endian":"LE","mvol":2,"order":"C","shape":[1,1,1],"spacing_mm":[1,1,1]}'],
    ["fortran order", '{"dtype":"f32","endian":"LE","mvol":1,"order":"F","shape":[1,1,1],"spacing_mm":[1,1,1]}'],
    ["bad shape", '{"dtype":"f32","endian":"LE","mvol":1,"order":"C","shape":[1,0,1],"spacing_mm":[1,1,1]}'],
    ["zero spacing", '{"dtype":"f32","endian":"LE","mvol":1,"order":"C","shape":[1,1,1],"spacing_mm":[0,1,1]}'],
    ["missing field", '{"dtype":"f32","endian":"LE","mvol":1,"order":"C","shape":[1,1,1]}'],
  ])("rejects headers with %s", (_label, header) => {
    const stem = tmpFile("hdr");
    fs.writeFileSync(`${stem}.json`, header + "\n");
    fs.writeFileSync(`${stem}.raw`, Buffer.alloc(4));
    expect(() => readVolume(stem)).toThrow(BridgeError);
  });

  it("rejects a missing blob", () => {
    const stem = tmpFile("norAW");
    fs.writeFileSync(
      `${stem}.json`,
      '{"dtype":"f32","endian":"LE","mvol":1,"order":"C","shape":[1,1,1],"spacing_mm":[1,1,1]}\n'
    );
    expect(() => readVolume(stem)).toThrow(/missing volume blob/);
  });
});
