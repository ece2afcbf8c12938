/**
 * Trainer CLI: train | serve | select | e2e.
 *
 * `e2e` drives the whole secondary pipeline: generate recursive-format
 * addition data through the inference harness, fit the toy model with masked
 * loss, pick the best checkpoint on a validation sweep over the wire
 * protocol, and evaluate the served model with the unchanged harness.
 */

import { spawnSync } from "node:child_process";
import { existsSync, mkdirSync, writeFileSync } from "node:fs";
import { join } from "node:path";

import { selectCheckpoint, selectCheckpointIndex, harnessEval } from "./select.js";
import { serve } from "./serve.js";
import { DEFAULT_TRAIN_CONFIG, train, TrainConfig } from "./train.js";

function parseFlags(argv: string[]): Map<string, string> {
  const flags = new Map<string, string>();
  for (let i = 0; i < argv.length; i++) {
    const tok = argv[i];
    if (!tok.startsWith("--")) throw new Error(`unexpected argument ${tok}`);
    const eq = tok.indexOf("=");
    if (eq !== -1) {
      flags.set(tok.slice(2, eq), tok.slice(eq + 1));
    } else if (i + 1 < argv.length && !argv[i + 1].startsWith("--")) {
      flags.set(tok.slice(2), argv[++i]);
    } else {
      flags.set(tok.slice(2), "true");
    }
  }
  return flags;
}

function trainConfigFromFlags(flags: Map<string, string>): TrainConfig {
  const data = flags.get("data");
  const out = flags.get("out");
  if (!data || !out) throw new Error("train requires --data and --out");
  const num = (key: string, fallback: number) =>
    flags.has(key) ? Number(flags.get(key)) : fallback;
  return {
    dataPath: data,
    outDir: out,
    seed: num("seed", DEFAULT_TRAIN_CONFIG.seed),
    steps: num("steps", DEFAULT_TRAIN_CONFIG.steps),
    batchSize: num("batch-size", DEFAULT_TRAIN_CONFIG.batchSize),
    gradAccum: num("grad-accum", DEFAULT_TRAIN_CONFIG.gradAccum),
    learningRate: num("lr", DEFAULT_TRAIN_CONFIG.learningRate),
    warmupSteps: num("warmup", DEFAULT_TRAIN_CONFIG.warmupSteps),
    weightDecay: num("weight-decay", DEFAULT_TRAIN_CONFIG.weightDecay),
    checkpointInterval: num("checkpoint-interval", DEFAULT_TRAIN_CONFIG.checkpointInterval),
    lrSchedule: (flags.get("lr-schedule") ?? DEFAULT_TRAIN_CONFIG.lrSchedule) as "constant" | "cosine",
    maxSeq: num("max-seq", DEFAULT_TRAIN_CONFIG.maxSeq),
    dModel: num("d-model", DEFAULT_TRAIN_CONFIG.dModel),
    nHeads: num("heads", DEFAULT_TRAIN_CONFIG.nHeads),
    nLayers: num("layers", DEFAULT_TRAIN_CONFIG.nLayers),
    ffMult: num("ff-mult", DEFAULT_TRAIN_CONFIG.ffMult),
    logEvery: num("log-every", DEFAULT_TRAIN_CONFIG.logEvery),
  };
}

function genData(flags: Map<string, string>, dataPath: string, fmt: string, log: (s: string) => void) {
  const python = flags.get("python") ?? "python3";
  const maxLength = Number(flags.get("max-length") ?? "3");
  const records = Number(flags.get("records") ?? "36000");
  const args = [
    "-m", "recurse.cli", "gen-data",
    "--task", "addition",
    "--format", fmt,
    "--max-length", String(maxLength),
    "--seed-count", flags.get("seed-count") ?? "40000",
    "--seed", flags.get("data-seed") ?? "41",
    "--out", dataPath,
  ];
  // weight longer lengths harder (more combine practice) when the span allows
  const unit = records / ((maxLength * (maxLength + 1)) / 2);
  const histogram: Record<string, number> = {};
  for (let len = 1; len <= maxLength; len++) histogram[String(len)] = Math.round(unit * len);
  const histPath = dataPath + ".histogram.json";
  writeFileSync(histPath, JSON.stringify(histogram));
  args.push("--resample", histPath);
  log(`generating data: ${python} ${args.join(" ")}`);
  const proc = spawnSync(python, args, { encoding: "utf-8" });
  if (proc.status !== 0) throw new Error(`gen-data failed: ${proc.stderr}`);
}

async function cmdE2e(flags: Map<string, string>): Promise<number> {
  const log = (s: string) => console.error(s);
  const outDir = flags.get("out") ?? "e2e-run";
  const port = Number(flags.get("port") ?? "8077");
  const python = flags.get("python") ?? "python3";
  mkdirSync(outDir, { recursive: true });
  const summary: Record<string, unknown> = {};

  const dataPath = join(outDir, "addition-retuning.jsonl");
  if (!existsSync(dataPath) || flags.has("fresh-data")) {
    genData(flags, dataPath, "retuning", log);
  }

  const trainCfg = trainConfigFromFlags(
    new Map([...flags, ["data", dataPath], ["out", join(outDir, "checkpoints")]]),
  );
  const started = Date.now();
  const result = train(trainCfg, log);
  summary.parameter_count = result.parameterCount;
  summary.first_loss = result.firstLoss;
  summary.final_loss = result.finalLoss;
  summary.train_seconds = (Date.now() - started) / 1000;
  const lossFell = result.finalLoss <= 0.5 * result.firstLoss;
  summary.loss_fell_50pct = lossFell;
  log(
    `loss ${result.firstLoss.toFixed(3)} -> ${result.finalLoss.toFixed(3)} ` +
      `(${lossFell ? "meets" : "MISSES"} the 50% gate)`,
  );

  const candidates = result.checkpointPaths.slice(-Number(flags.get("candidates") ?? "4"));
  const selection = await selectCheckpoint(
    candidates,
    port,
    {
      task: "addition",
      format: "retuning",
      lengths: flags.get("val-lengths") ?? "1..3",
      n: Number(flags.get("val-n") ?? "5"),
      seed: Number(flags.get("val-seed") ?? "1009"),
      python,
    },
    log,
  );
  summary.validation_accuracies = selection.accuracies;
  summary.selected_checkpoint = selection.bestPath;
  log(`selected ${selection.bestPath}`);

  const server = await serve(selection.bestPath, port);
  try {
    const final = await harnessEval(`http://127.0.0.1:${port}`, {
      task: "addition",
      format: "retuning",
      lengths: flags.get("eval-lengths") ?? "1..3",
      n: Number(flags.get("eval-n") ?? "20"),
      seed: Number(flags.get("eval-seed") ?? "2027"),
      python,
    });
    summary.in_distribution_accuracy = final.accuracy;
    summary.in_distribution_per_length = final.perLength;
    log(`in-distribution accuracy ${final.accuracy.toFixed(3)}`);
    if (flags.has("ood-lengths")) {
      const ood = await harnessEval(`http://127.0.0.1:${port}`, {
        task: "addition",
        format: "retuning",
        lengths: flags.get("ood-lengths")!,
        n: Number(flags.get("eval-n") ?? "20"),
        seed: Number(flags.get("eval-seed") ?? "2027"),
        python,
      });
      summary.ood_accuracy = ood.accuracy;
      summary.ood_per_length = ood.perLength;
      log(`out-of-distribution accuracy ${ood.accuracy.toFixed(3)}`);
    }
  } finally {
    await new Promise<void>((resolve) => server.close(() => resolve()));
  }

  const passed = lossFell && (summary.in_distribution_accuracy as number) >= 0.8;
  summary.passed = passed;
  writeFileSync(join(outDir, "summary.json"), JSON.stringify(summary, null, 2) + "\n");
  log(`pipeline ${passed ? "PASSED" : "FAILED"}; summary in ${join(outDir, "summary.json")}`);
  return passed ? 0 : 1;
}

async function main(): Promise<number> {
  const [command, ...rest] = process.argv.slice(2);
  const flags = parseFlags(rest);
  if (command === "train") {
    const result = train(trainConfigFromFlags(flags));
    console.error(
      `done: loss ${result.firstLoss.toFixed(3)} -> ${result.finalLoss.toFixed(3)}, ` +
        `${result.checkpointPaths.length} checkpoints`,
    );
    return 0;
  }
  if (command === "serve") {
    const checkpoint = flags.get("checkpoint");
    if (!checkpoint) throw new Error("serve requires --checkpoint");
    const port = Number(flags.get("port") ?? "8077");
    await serve(checkpoint, port);
    console.error(`serving ${checkpoint} on http://127.0.0.1:${port}/v1/completions`);
    return await new Promise<number>(() => {}); // run until killed
  }
  if (command === "select") {
    const paths = (flags.get("checkpoints") ?? "").split(",").filter(Boolean);
    if (flags.has("accuracies")) {
      // offline mode: pure argmax over pre-computed accuracies
      const accs = flags.get("accuracies")!.split(",").map(Number);
      console.log(String(selectCheckpointIndex(accs)));
      return 0;
    }
    const result = await selectCheckpoint(paths, Number(flags.get("port") ?? "8077"), {
      task: flags.get("task") ?? "addition",
      format: flags.get("format") ?? "retuning",
      lengths: flags.get("lengths") ?? "1..3",
      n: Number(flags.get("n") ?? "5"),
      seed: Number(flags.get("seed") ?? "1009"),
      python: flags.get("python"),
    });
    console.log(result.bestPath);
    return 0;
  }
  if (command === "e2e") {
    return cmdE2e(flags);
  }
  console.error("usage: cli.js <train|serve|select|e2e> [--flags]");
  return 2;
}

main().then(
  (code) => process.exit(code),
  (err) => {
    console.error(`error: ${err instanceof Error ? err.message : err}`);
    process.exit(1);
  },
);
