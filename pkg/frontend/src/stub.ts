/**
 * Built-in "stub" segmenter used when no real model checkpoint is wired in.
 *
 * Propagation copies each frame's nearest prompt mask at full confidence
 * and returns logits; ties between two equally distant prompts go to the
 * lower frame index.  The numbers are computed in float64 exactly as the
 * engine's bundled reference does (probability eps + (1 - 2*eps) * m, then
 * log-odds clamped to ±clamp, rounded to float32), so a request served by
 * this stub is byte-for-byte interchangeable with one served in-process.
 *
 * Training fits the simplest usable model: a single intensity threshold
 * halfway between the foreground and background means.  Prediction marks
 * voxels at or above the threshold as probability 0.75, the rest as 0.25.
 */

import { BridgeError } from "./errors";
import { Volume, voxelCount } from "./mvol";

export interface StubOptions {
  eps?: number;
  clamp?: number;
}

const DEFAULT_EPS = 1e-4;
const DEFAULT_CLAMP = 10.0;

export interface TrainingPair {
  image: Volume;
  mask: Volume;
}

export interface ThresholdModel {
  kind: "stub-threshold";
  cut: number;
}

function checkPrompts(frames: Volume, promptFrames: number[], promptMasks: Volume): void {
  if (frames.dtype !== "f32") {
    throw new BridgeError("frames must be an f32 volume");
  }
  if (promptMasks.dtype !== "u8") {
    throw new BridgeError("prompt masks must be a u8 volume");
  }
  if (promptFrames.length === 0) {
    throw new BridgeError("at least one prompt frame is required");
  }
  if (new Set(promptFrames).size !== promptFrames.length) {
    throw new BridgeError("prompt frames must be distinct");
  }
  for (const f of promptFrames) {
    if (!Number.isInteger(f) || f < 0 || f >= frames.shape[0]) {
      throw new BridgeError(`prompt frame ${f} outside [0, ${frames.shape[0]})`);
    }
  }
  if (promptMasks.shape[0] !== promptFrames.length) {
    throw new BridgeError(
      `${promptFrames.length} prompt frames but ${promptMasks.shape[0]} mask frames`
    );
  }
  if (promptMasks.shape[1] !== frames.shape[1] || promptMasks.shape[2] !== frames.shape[2]) {
    throw new BridgeError("prompt masks do not match the frames in-plane");
  }
}

export function propagateStub(
  frames: Volume,
  promptFrames: number[],
  promptMasks: Volume,
  options: StubOptions = {}
): Float32Array {
  checkPrompts(frames, promptFrames, promptMasks);
  const eps = options.eps ?? DEFAULT_EPS;
  const clamp = options.clamp ?? DEFAULT_CLAMP;

  // mask i belongs to prompt frame promptFrames[i]; scan in ascending
  // frame order so the first minimal distance is the lower frame
  const order = promptFrames
    .map((frame, i) => ({ frame, i }))
    .sort((a, b) => a.frame - b.frame);

  const pBg = eps;
  const pFg = eps + (1.0 - 2.0 * eps);
  const logitBg = Math.fround(clampTo(Math.log(pBg / (1.0 - pBg)), clamp));
  const logitFg = Math.fround(clampTo(Math.log(pFg / (1.0 - pFg)), clamp));

  const [numFrames, height, width] = frames.shape;
  const frameSize = height * width;
  const logits = new Float32Array(voxelCount(frames.shape));
  for (let t = 0; t < numFrames; t++) {
    let nearest = order[0];
    let best = Math.abs(t - nearest.frame);
    for (const entry of order) {
      const dist = Math.abs(t - entry.frame);
      if (dist < best) {
        nearest = entry;
        best = dist;
      }
    }
    const mask = promptMasks.data.subarray(
      nearest.i * frameSize,
      (nearest.i + 1) * frameSize
    );
    const out = logits.subarray(t * frameSize, (t + 1) * frameSize);
    for (let v = 0; v < frameSize; v++) {
      out[v] = mask[v] ? logitFg : logitBg;
    }
  }
  return logits;
}

function clampTo(value: number, clamp: number): number {
  return Math.min(Math.max(value, -clamp), clamp);
}

/**
 * Threshold halfway between the class means, accumulated pair by pair in
 * C order as float64 so re-implementations agree bit for bit.
 */
export function fitStub(pairs: TrainingPair[]): ThresholdModel {
  if (pairs.length === 0) {
    throw new BridgeError("training set must not be empty");
  }
  let sumFg = 0.0;
  let sumBg = 0.0;
  let nFg = 0;
  let nBg = 0;
  for (const { image, mask } of pairs) {
    if (image.dtype !== "f32" || mask.dtype !== "u8") {
      throw new BridgeError("training pairs must be (f32 image, u8 mask)");
    }
    if (
      image.shape[0] !== mask.shape[0] ||
      image.shape[1] !== mask.shape[1] ||
      image.shape[2] !== mask.shape[2]
    ) {
      throw new BridgeError(
        `training pair shapes differ: image ${JSON.stringify(image.shape)} ` +
          `vs mask ${JSON.stringify(mask.shape)}`
      );
    }
    for (let i = 0; i < image.data.length; i++) {
      if (mask.data[i]) {
        sumFg += image.data[i];
        nFg += 1;
      } else {
        sumBg += image.data[i];
        nBg += 1;
      }
    }
  }
  if (nFg === 0 || nBg === 0) {
    throw new BridgeError("training pairs contain only one class; cannot place a threshold");
  }
  return { kind: "stub-threshold", cut: (sumFg / nFg + sumBg / nBg) / 2.0 };
}

export function predictStub(frames: Volume, model: ThresholdModel): Float32Array {
  if (frames.dtype !== "f32") {
    throw new BridgeError("frames must be an f32 volume");
  }
  const probs = new Float32Array(frames.data.length);
  for (let i = 0; i < frames.data.length; i++) {
    probs[i] = frames.data[i] >= model.cut ? 0.75 : 0.25;
  }
  return probs;
}
