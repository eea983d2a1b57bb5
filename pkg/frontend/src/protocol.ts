/**
 * The request/response protocol between the engine and this bridge.
 *
 * The engine prepares a directory holding `request.json` plus the volume
 * payloads it references, then invokes the bridge with that directory as
 * the last argument.  The bridge always writes a `response.json` next to
 * the request — `{"status": "ok", ...}` with result stems on success,
 * `{"status": "error", "message": ...}` otherwise — and exits non-zero on
 * failure.  Relative stems resolve against the request directory.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { z } from "zod";

import { BridgeError } from "./errors";
import { readVolume, Volume, writeVolume } from "./mvol";
import { fitStub, predictStub, propagateStub, ThresholdModel, TrainingPair } from "./stub";

/** The stub persists its threshold under this name inside the model dir.
 * The engine puts its own `model.json` marker there, so stay clear of it. */
export const STUB_MODEL_FILE = "stub_model.json";

const trainingPairSchema = z.object({
  image: z.string().min(1),
  mask: z.string().min(1),
});

const requestSchema = z.discriminatedUnion("kind", [
  z.object({
    kind: z.literal("propagate"),
    frames: z.string().min(1),
    prompt_frames: z.array(z.number().int()),
    prompt_masks: z.string().min(1),
  }),
  z.object({
    kind: z.literal("fit"),
    training_pairs: z.array(trainingPairSchema).min(1),
    model: z.string().min(1).optional(),
  }),
  z.object({
    kind: z.literal("predict"),
    frames: z.string().min(1),
    model: z.string().min(1),
  }),
]);

export type BridgeRequest = z.infer<typeof requestSchema>;

export interface BridgeResponse {
  status: "ok" | "error";
  logits?: string;
  probs?: string;
  model?: string;
  message?: string;
}

export interface BridgeOptions {
  /** Path to a real model checkpoint.  Serving one is not built in yet;
   * setting this only yields a clear error instead of stub output. */
  checkpoint?: string;
  /** Reserved for checkpoint-backed serving: in-plane size frames would
   * be resampled to.  The stub works at native resolution and ignores it. */
  workSize?: number;
}

export function parseRequest(requestDir: string): BridgeRequest {
  const requestPath = path.join(requestDir, "request.json");
  if (!fs.existsSync(requestPath)) {
    throw new BridgeError(`missing request.json in ${requestDir}`);
  }
  let raw: unknown;
  try {
    raw = JSON.parse(fs.readFileSync(requestPath, "utf8"));
  } catch (e) {
    throw new BridgeError(`unreadable request.json: ${e}`);
  }
  const parsed = requestSchema.safeParse(raw);
  if (!parsed.success) {
    throw new BridgeError(`invalid request.json: ${z.prettifyError(parsed.error)}`);
  }
  return parsed.data;
}

function resolveStem(requestDir: string, stem: string): string {
  return path.isAbsolute(stem) ? stem : path.join(requestDir, stem);
}

function servePropagate(
  requestDir: string,
  request: Extract<BridgeRequest, { kind: "propagate" }>
): BridgeResponse {
  const frames = readVolume(resolveStem(requestDir, request.frames));
  const promptMasks = readVolume(resolveStem(requestDir, request.prompt_masks));
  const logits = propagateStub(frames, request.prompt_frames, promptMasks);
  writeVolume(path.join(requestDir, "logits"), {
    dtype: "f32",
    shape: frames.shape,
    spacingMm: frames.spacingMm,
    data: logits,
  });
  return { status: "ok", logits: "logits" };
}

function serveFit(
  requestDir: string,
  request: Extract<BridgeRequest, { kind: "fit" }>
): BridgeResponse {
  if (!request.model) {
    throw new BridgeError(
      "fit requests must name a model directory; the stub has nowhere else to persist"
    );
  }
  const pairs: TrainingPair[] = request.training_pairs.map((pair) => ({
    image: readVolume(resolveStem(requestDir, pair.image)),
    mask: readVolume(resolveStem(requestDir, pair.mask)),
  }));
  const model = fitStub(pairs);
  const modelDir = resolveStem(requestDir, request.model);
  fs.mkdirSync(modelDir, { recursive: true });
  // keys listed alphabetically so the file has sorted keys
  fs.writeFileSync(
    path.join(modelDir, STUB_MODEL_FILE),
    JSON.stringify({ cut: model.cut, kind: model.kind }) + "\n"
  );
  return { status: "ok", model: request.model };
}

function loadThresholdModel(modelDir: string): ThresholdModel {
  const weightsPath = path.join(modelDir, STUB_MODEL_FILE);
  if (!fs.existsSync(weightsPath)) {
    throw new BridgeError(`no stub model at ${weightsPath}`);
  }
  let weights: Record<string, unknown>;
  try {
    weights = JSON.parse(fs.readFileSync(weightsPath, "utf8"));
  } catch (e) {
    throw new BridgeError(`unreadable stub model ${weightsPath}: ${e}`);
  }
  if (weights?.kind !== "stub-threshold" || typeof weights.cut !== "number") {
    throw new BridgeError(`malformed stub model ${weightsPath}`);
  }
  if (!Number.isFinite(weights.cut)) {
    throw new BridgeError(`stub model ${weightsPath} has a non-finite cut`);
  }
  return { kind: "stub-threshold", cut: weights.cut };
}

function servePredict(
  requestDir: string,
  request: Extract<BridgeRequest, { kind: "predict" }>
): BridgeResponse {
  const frames = readVolume(resolveStem(requestDir, request.frames));
  const model = loadThresholdModel(resolveStem(requestDir, request.model));
  const probs = predictStub(frames, model);
  writeVolume(path.join(requestDir, "probs"), {
    dtype: "f32",
    shape: frames.shape,
    spacingMm: frames.spacingMm,
    data: probs,
  });
  return { status: "ok", probs: "probs" };
}

function dispatch(requestDir: string, options: BridgeOptions): BridgeResponse {
  if (options.checkpoint) {
    throw new BridgeError(
      "checkpoint-backed serving is not implemented; unset the checkpoint to use the stub"
    );
  }
  const request = parseRequest(requestDir);
  switch (request.kind) {
    case "propagate":
      return servePropagate(requestDir, request);
    case "fit":
      return serveFit(requestDir, request);
    case "predict":
      return servePredict(requestDir, request);
  }
}

function writeResponse(requestDir: string, response: BridgeResponse): void {
  const ordered: Record<string, string> = {};
  for (const key of ["logits", "message", "model", "probs", "status"] as const) {
    const value = response[key];
    if (value !== undefined) {
      ordered[key] = value;
    }
  }
  fs.writeFileSync(path.join(requestDir, "response.json"), JSON.stringify(ordered) + "\n");
}

/**
 * Serve one request directory.  Failures inside the handlers become an
 * error response; `response.json` is written in both cases.
 */
export function serveRequest(requestDir: string, options: BridgeOptions = {}): BridgeResponse {
  let response: BridgeResponse;
  try {
    response = dispatch(requestDir, options);
  } catch (e) {
    response = {
      status: "error",
      message: e instanceof Error && e.message ? e.message : String(e),
    };
  }
  writeResponse(requestDir, response);
  return response;
}
