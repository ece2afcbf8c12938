/**
 * Checkpoint selection on validation accuracy.
 *
 * The decision rule is a pure argmax with the earlier checkpoint winning
 * ties; the evaluation of each candidate goes through the inference harness
 * over the wire protocol (serve the checkpoint, run `eval` against it, read
 * the report).
 */

import { spawn } from "node:child_process";
import { mkdtempSync, readFileSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { serve } from "./serve.js";

/**
 * Run a command asynchronously; the event loop stays free, which matters
 * because the model server runs in this same process while the harness
 * hits it over HTTP.
 */
function run(
  command: string,
  args: string[],
  timeoutMs: number,
): Promise<{ status: number | null; stderr: string }> {
  return new Promise((resolve, reject) => {
    const proc = spawn(command, args, { stdio: ["ignore", "ignore", "pipe"] });
    let stderr = "";
    proc.stderr.on("data", (chunk) => {
      stderr += chunk;
    });
    const timer = setTimeout(() => proc.kill("SIGKILL"), timeoutMs);
    proc.on("error", (err) => {
      clearTimeout(timer);
      reject(err);
    });
    proc.on("close", (status) => {
      clearTimeout(timer);
      resolve({ status, stderr });
    });
  });
}

/** Index of the highest accuracy, earliest on ties. */
export function selectCheckpointIndex(accuracies: number[]): number {
  if (accuracies.length === 0) throw new Error("no checkpoints to select from");
  let best = 0;
  for (let i = 1; i < accuracies.length; i++) {
    if (accuracies[i] > accuracies[best]) best = i;
  }
  return best;
}

export interface HarnessEvalOptions {
  task: string;
  format: string;
  lengths: string;
  n: number;
  seed: number;
  python?: string; // interpreter that has the harness installed
  timeoutSeconds?: number;
  /** recursion cap passed to the harness; untrained checkpoints can loop */
  maxDepth?: number;
  /** per-context generation budget passed to the harness */
  maxUnits?: number;
}

export interface HarnessReport {
  accuracy: number;
  perLength: Array<{ length: number; accuracy: number }>;
  raw: unknown;
}

/** Run the harness `eval` subcommand against an endpoint and parse the report. */
export async function harnessEval(
  endpoint: string,
  opts: HarnessEvalOptions,
): Promise<HarnessReport> {
  const python = opts.python ?? "python3";
  const dir = mkdtempSync(join(tmpdir(), "ckpt-eval-"));
  const reportPath = join(dir, "report.json");
  try {
    const args = [
      "-m",
      "recurse.cli",
      "eval",
      "--task",
      opts.task,
      "--format",
      opts.format,
      "--backend",
      "http",
      "--endpoint",
      endpoint,
      "--lengths",
      opts.lengths,
      "--n",
      String(opts.n),
      "--seed",
      String(opts.seed),
      "--max-depth",
      String(opts.maxDepth ?? 8),
      "--max-units",
      String(opts.maxUnits ?? 192),
      "--out",
      reportPath,
    ];
    const proc = await run(python, args, (opts.timeoutSeconds ?? 600) * 1000);
    if (proc.status !== 0) {
      throw new Error(`harness eval failed (${proc.status}): ${proc.stderr}`);
    }
    const report = JSON.parse(readFileSync(reportPath, "utf-8")) as {
      per_length: Array<{ length: number; n: number; correct: number; accuracy: number }>;
    };
    const total = report.per_length.reduce((acc, s) => acc + s.n, 0);
    const correct = report.per_length.reduce((acc, s) => acc + s.correct, 0);
    return {
      accuracy: total ? correct / total : 0,
      perLength: report.per_length.map((s) => ({ length: s.length, accuracy: s.accuracy })),
      raw: report,
    };
  } finally {
    rmSync(dir, { recursive: true, force: true });
  }
}

export interface SelectionResult {
  bestIndex: number;
  bestPath: string;
  accuracies: number[];
}

/**
 * Serve each checkpoint in turn, evaluate it through the harness, and return
 * the argmax (earliest tie).
 */
export async function selectCheckpoint(
  checkpointPaths: string[],
  port: number,
  opts: HarnessEvalOptions,
  log: (line: string) => void = console.error,
): Promise<SelectionResult> {
  if (checkpointPaths.length === 0) throw new Error("no checkpoints to select from");
  const accuracies: number[] = [];
  for (const path of checkpointPaths) {
    const server = await serve(path, port);
    try {
      const report = await harnessEval(`http://127.0.0.1:${port}`, opts);
      accuracies.push(report.accuracy);
      log(`validation ${path}: accuracy ${report.accuracy.toFixed(3)}`);
    } catch (err) {
      // a checkpoint that cannot be evaluated scores zero; selection proceeds
      accuracies.push(0);
      log(`validation ${path}: failed (${err instanceof Error ? err.message : err})`);
    } finally {
      await new Promise<void>((resolve) => server.close(() => resolve()));
    }
  }
  const bestIndex = selectCheckpointIndex(accuracies);
  return { bestIndex, bestPath: checkpointPaths[bestIndex], accuracies };
}
