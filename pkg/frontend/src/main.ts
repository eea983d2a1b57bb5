#!/usr/bin/env node
/**
 * Command line entry point.
 *
 *   bridge <request-dir>             serve one request directory
 *   bridge import <volume> <stem>    convert a .nii/.nii.gz volume to the
 *                                    paired <stem>.json/<stem>.raw format
 *
 * Serving always leaves a response.json in the request directory; the
 * exit code is 0 when it reports ok, 1 when it reports an error, 2 for
 * usage mistakes.  BRIDGE_CHECKPOINT and BRIDGE_WORK_SIZE are read from
 * the environment for forward compatibility with real checkpoints.
 */

import { writeVolume } from "./mvol";
import { importNifti } from "./nifti";
import { BridgeOptions, serveRequest } from "./protocol";

function usage(): never {
  process.stderr.write(
    "usage: bridge <request-dir>\n" +
      "       bridge import <volume.nii[.gz]> <out-stem>\n"
  );
  process.exit(2);
}

function optionsFromEnv(env: NodeJS.ProcessEnv): BridgeOptions {
  const options: BridgeOptions = {};
  if (env.BRIDGE_CHECKPOINT) {
    options.checkpoint = env.BRIDGE_CHECKPOINT;
  }
  if (env.BRIDGE_WORK_SIZE) {
    const parsed = Number(env.BRIDGE_WORK_SIZE);
    if (!Number.isInteger(parsed) || parsed < 1) {
      process.stderr.write(`bad BRIDGE_WORK_SIZE ${env.BRIDGE_WORK_SIZE}\n`);
      process.exit(2);
    }
    options.workSize = parsed;
  }
  return options;
}

function main(argv: string[]): number {
  if (argv[0] === "import") {
    if (argv.length !== 3) {
      usage();
    }
    const [, inputPath, outStem] = argv;
    try {
      writeVolume(outStem, importNifti(inputPath));
    } catch (e) {
      process.stderr.write(`import failed: ${e instanceof Error ? e.message : e}\n`);
      return 1;
    }
    process.stderr.write(`imported ${inputPath} -> ${outStem}.json/.raw\n`);
    return 0;
  }
  if (argv.length !== 1) {
    usage();
  }
  try {
    const response = serveRequest(argv[0], optionsFromEnv(process.env));
    if (response.status !== "ok") {
      process.stderr.write(`request failed: ${response.message}\n`);
      return 1;
    }
    return 0;
  } catch (e) {
    process.stderr.write(`cannot serve ${argv[0]}: ${e instanceof Error ? e.message : e}\n`);
    return 1;
  }
}

process.exit(main(process.argv.slice(2)));
