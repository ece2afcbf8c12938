/**
 * AdamW training loop with segment-masked cross-entropy and periodic
 * checkpoints.
 *
 * Reference full-scale hyperparameters (documented defaults; toy runs
 * override them): lr 2e-4 constant, AdamW, batch 128 with 32 gradient
 * accumulation steps, low-rank adapters r=64 alpha=64 dropout 0.05 on the
 * host model.  The toy model here trains all weights directly.
 */

import { mkdirSync, writeFileSync } from "node:fs";
import { join } from "node:path";

import { Batch, buildBatches, buildVocab, encodeRecord, readJsonl, Vocab } from "./data.js";
import { Checkpoint, Model, ModelConfig, toCheckpoint } from "./model.js";
import { mulberry32, shuffleInPlace } from "./rng.js";

export interface TrainConfig {
  dataPath: string;
  outDir: string;
  seed: number;
  steps: number;
  batchSize: number;
  gradAccum: number;
  learningRate: number;
  warmupSteps: number;
  weightDecay: number;
  checkpointInterval: number;
  lrSchedule: "constant" | "cosine";
  maxSeq: number;
  dModel: number;
  nHeads: number;
  nLayers: number;
  ffMult: number;
  logEvery: number;
}

export const DEFAULT_TRAIN_CONFIG: Omit<TrainConfig, "dataPath" | "outDir"> = {
  seed: 0,
  steps: 2800,
  batchSize: 16,
  gradAccum: 1,
  learningRate: 1.5e-3,
  warmupSteps: 80,
  weightDecay: 0.01,
  checkpointInterval: 700,
  lrSchedule: "cosine",
  maxSeq: 128,
  dModel: 64,
  nHeads: 4,
  nLayers: 2,
  ffMult: 4,
  logEvery: 25,
};

export interface TrainResult {
  checkpointPaths: string[];
  losses: number[]; // per logEvery window mean
  firstLoss: number;
  finalLoss: number;
  vocab: Vocab;
  parameterCount: number;
}

class AdamW {
  private m: Float64Array[];
  private v: Float64Array[];
  private step = 0;

  constructor(
    private model: Model,
    private lr: number,
    private weightDecay: number,
    private beta1 = 0.9,
    private beta2 = 0.98,
    private eps = 1e-9,
  ) {
    this.m = model.params.map((p) => new Float64Array(p.data.length));
    this.v = model.params.map((p) => new Float64Array(p.data.length));
  }

  update(lrScale: number): void {
    this.step += 1;
    const bc1 = 1 - Math.pow(this.beta1, this.step);
    const bc2 = 1 - Math.pow(this.beta2, this.step);
    const lr = this.lr * lrScale;
    this.model.params.forEach((p, idx) => {
      const m = this.m[idx];
      const v = this.v[idx];
      const decay = p.decay ? this.weightDecay : 0;
      for (let i = 0; i < p.data.length; i++) {
        const g = p.grad[i];
        m[i] = this.beta1 * m[i] + (1 - this.beta1) * g;
        v[i] = this.beta2 * v[i] + (1 - this.beta2) * g * g;
        const mhat = m[i] / bc1;
        const vhat = v[i] / bc2;
        p.data[i] -= lr * (mhat / (Math.sqrt(vhat) + this.eps) + decay * p.data[i]);
      }
    });
  }
}

export function train(config: TrainConfig, log: (line: string) => void = console.error): TrainResult {
  const records = readJsonl(config.dataPath);
  const vocab = buildVocab(records);
  const sequences = records.map((r) => encodeRecord(vocab, r));
  const dropped = sequences.filter((s) => s.tokens.length - 1 > config.maxSeq).length;
  if (dropped > 0) log(`dropping ${dropped}/${sequences.length} sequences over maxSeq=${config.maxSeq}`);

  const modelConfig: ModelConfig = {
    vocabSize: vocab.chars.length,
    dModel: config.dModel,
    nHeads: config.nHeads,
    nLayers: config.nLayers,
    maxSeq: config.maxSeq,
    ffMult: config.ffMult,
  };
  const model = new Model(modelConfig);
  model.init(config.seed);
  log(`model: ${model.parameterCount()} parameters, vocab ${vocab.chars.length}`);

  const rng = mulberry32(config.seed ^ 0x5eed);
  const optimizer = new AdamW(model, config.learningRate, config.weightDecay);
  mkdirSync(config.outDir, { recursive: true });

  let batches: Batch[] = [];
  let cursor = 0;
  const nextBatch = (): Batch => {
    if (cursor >= batches.length) {
      const shuffled = [...sequences];
      shuffleInPlace(rng, shuffled);
      batches = buildBatches(shuffled, config.batchSize, config.maxSeq);
      shuffleInPlace(rng, batches);
      cursor = 0;
    }
    return batches[cursor++];
  };

  const checkpointPaths: string[] = [];
  const losses: number[] = [];
  let windowSum = 0;
  let windowCount = 0;
  let firstLoss = Number.NaN;
  let lastLoss = Number.NaN;

  const saveCheckpoint = (step: number, loss: number) => {
    const ckpt = toCheckpoint(model, vocab.chars, step, loss);
    const path = join(config.outDir, `ckpt-${String(step).padStart(6, "0")}.json`);
    writeFileSync(path, JSON.stringify(ckpt));
    checkpointPaths.push(path);
    log(`checkpoint ${path} (loss ${loss.toFixed(4)})`);
  };

  const started = Date.now();
  for (let step = 1; step <= config.steps; step++) {
    model.zeroGrads();
    let loss = 0;
    for (let acc = 0; acc < config.gradAccum; acc++) {
      const batch = nextBatch();
      loss += model.lossAndGrad(
        batch.inputs,
        batch.targets,
        batch.mask,
        batch.batchSize,
        batch.seqLen,
      );
    }
    loss /= config.gradAccum;
    if (config.gradAccum > 1) {
      for (const p of model.params) {
        for (let i = 0; i < p.grad.length; i++) p.grad[i] /= config.gradAccum;
      }
    }
    if (!Number.isFinite(loss)) {
      throw new Error(`training diverged: loss=${loss} at step ${step}`);
    }
    if (Number.isNaN(firstLoss)) firstLoss = loss;
    lastLoss = loss;
    windowSum += loss;
    windowCount += 1;
    let lrScale = config.warmupSteps > 0 ? Math.min(1, step / config.warmupSteps) : 1;
    if (config.lrSchedule === "cosine" && step > config.warmupSteps) {
      const progress = (step - config.warmupSteps) / Math.max(1, config.steps - config.warmupSteps);
      lrScale *= 0.1 + 0.9 * 0.5 * (1 + Math.cos(Math.PI * progress));
    }
    optimizer.update(lrScale);
    if (step % config.logEvery === 0) {
      const mean = windowSum / windowCount;
      losses.push(mean);
      const rate = ((step / (Date.now() - started)) * 1000).toFixed(2);
      log(`step ${step}/${config.steps} loss ${mean.toFixed(4)} (${rate} steps/s)`);
      windowSum = 0;
      windowCount = 0;
    }
    if (step % config.checkpointInterval === 0 || step === config.steps) {
      saveCheckpoint(step, lastLoss);
    }
  }
  return {
    checkpointPaths,
    losses,
    firstLoss,
    finalLoss: lastLoss,
    vocab,
    parameterCount: model.parameterCount(),
  };
}
