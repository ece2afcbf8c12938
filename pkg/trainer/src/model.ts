/**
 * Minimal decoder-only transformer over a character vocabulary.
 *
 * Forward and backward passes are written out by hand over flat
 * Float64Arrays (pre-LN blocks, causal attention, GELU MLP, untied head).
 * Everything is single-threaded and deterministic given the init seed, which
 * keeps loss curves exactly repeatable.
 */

import { gauss, mulberry32 } from "./rng.js";

export interface ModelConfig {
  vocabSize: number;
  dModel: number;
  nHeads: number;
  nLayers: number;
  maxSeq: number;
  ffMult: number;
}

export interface Param {
  name: string;
  data: Float64Array;
  grad: Float64Array;
  /** weight matrices get weight decay; biases/gains/embeddings do not */
  decay: boolean;
}

function param(name: string, size: number, decay: boolean): Param {
  return { name, data: new Float64Array(size), grad: new Float64Array(size), decay };
}

const SQRT_2_OVER_PI = Math.sqrt(2 / Math.PI);

function gelu(x: number): number {
  const u = SQRT_2_OVER_PI * (x + 0.044715 * x * x * x);
  return 0.5 * x * (1 + Math.tanh(u));
}

function geluGrad(x: number): number {
  const u = SQRT_2_OVER_PI * (x + 0.044715 * x * x * x);
  const t = Math.tanh(u);
  return 0.5 * (1 + t) + 0.5 * x * (1 - t * t) * SQRT_2_OVER_PI * (1 + 3 * 0.044715 * x * x);
}

/** C[n,m] = A[n,k] @ W[k,m] (+ bias), row-major; k-blocked and j-unrolled. */
function matmul(
  A: Float64Array,
  W: Float64Array,
  bias: Float64Array | null,
  C: Float64Array,
  n: number,
  k: number,
  m: number,
): void {
  const m4 = m - (m % 4);
  for (let i = 0; i < n; i++) {
    const ci = i * m;
    if (bias) {
      for (let j = 0; j < m; j++) C[ci + j] = bias[j];
    } else {
      C.fill(0, ci, ci + m);
    }
    const ai = i * k;
    let p = 0;
    for (; p + 1 < k; p += 2) {
      const a0 = A[ai + p];
      const a1 = A[ai + p + 1];
      if (a0 === 0 && a1 === 0) continue;
      const w0 = p * m;
      const w1 = w0 + m;
      let j = 0;
      for (; j < m4; j += 4) {
        C[ci + j] += a0 * W[w0 + j] + a1 * W[w1 + j];
        C[ci + j + 1] += a0 * W[w0 + j + 1] + a1 * W[w1 + j + 1];
        C[ci + j + 2] += a0 * W[w0 + j + 2] + a1 * W[w1 + j + 2];
        C[ci + j + 3] += a0 * W[w0 + j + 3] + a1 * W[w1 + j + 3];
      }
      for (; j < m; j++) C[ci + j] += a0 * W[w0 + j] + a1 * W[w1 + j];
    }
    if (p < k) {
      const a = A[ai + p];
      if (a !== 0) {
        const wp = p * m;
        for (let j = 0; j < m; j++) C[ci + j] += a * W[wp + j];
      }
    }
  }
}

/** dA[n,k] += dC[n,m] @ W[k,m]^T  (dot of contiguous rows, unrolled). */
function matmulBackA(
  dC: Float64Array,
  W: Float64Array,
  dA: Float64Array,
  n: number,
  k: number,
  m: number,
): void {
  const m4 = m - (m % 4);
  for (let i = 0; i < n; i++) {
    const ci = i * m;
    const ai = i * k;
    for (let p = 0; p < k; p++) {
      const wp = p * m;
      let acc0 = 0;
      let acc1 = 0;
      let j = 0;
      for (; j < m4; j += 4) {
        acc0 += dC[ci + j] * W[wp + j] + dC[ci + j + 1] * W[wp + j + 1];
        acc1 += dC[ci + j + 2] * W[wp + j + 2] + dC[ci + j + 3] * W[wp + j + 3];
      }
      for (; j < m; j++) acc0 += dC[ci + j] * W[wp + j];
      dA[ai + p] += acc0 + acc1;
    }
  }
}

/** dW[k,m] += A[n,k]^T @ dC[n,m]; dBias[m] += column sums of dC. */
function matmulBackW(
  A: Float64Array,
  dC: Float64Array,
  dW: Float64Array,
  dBias: Float64Array | null,
  n: number,
  k: number,
  m: number,
): void {
  const m4 = m - (m % 4);
  for (let i = 0; i < n; i++) {
    const ai = i * k;
    const ci = i * m;
    for (let p = 0; p < k; p++) {
      const a = A[ai + p];
      if (a === 0) continue;
      const wp = p * m;
      let j = 0;
      for (; j < m4; j += 4) {
        dW[wp + j] += a * dC[ci + j];
        dW[wp + j + 1] += a * dC[ci + j + 1];
        dW[wp + j + 2] += a * dC[ci + j + 2];
        dW[wp + j + 3] += a * dC[ci + j + 3];
      }
      for (; j < m; j++) dW[wp + j] += a * dC[ci + j];
    }
    if (dBias) {
      for (let j = 0; j < m; j++) dBias[j] += dC[ci + j];
    }
  }
}

interface LayerParams {
  ln1g: Param;
  ln1b: Param;
  wqkv: Param;
  bqkv: Param;
  wo: Param;
  bo: Param;
  ln2g: Param;
  ln2b: Param;
  w1: Param;
  b1: Param;
  w2: Param;
  b2: Param;
}

interface LayerActs {
  x0: Float64Array; // residual input
  h1: Float64Array; // ln1 output
  xhat1: Float64Array;
  rstd1: Float64Array;
  qkv: Float64Array;
  probs: Float64Array; // H x T x T per batch row
  att: Float64Array;
  x1: Float64Array; // after attention residual
  h2: Float64Array;
  xhat2: Float64Array;
  rstd2: Float64Array;
  ffPre: Float64Array; // pre-GELU
  ffAct: Float64Array; // post-GELU
}

export interface KVCache {
  keys: Float64Array[]; // per layer: maxSeq x D
  values: Float64Array[];
  length: number;
}

export class Model {
  readonly config: ModelConfig;
  readonly params: Param[] = [];
  tokEmb: Param;
  posEmb: Param;
  layers: LayerParams[] = [];
  lnFg: Param;
  lnFb: Param;
  head: Param;
  headB: Param;
  private scratch = new Map<string, Float64Array>();

  /** Reused per-step workspace; contents are stale, callers assign or zero. */
  private buf(name: string, size: number): Float64Array {
    const existing = this.scratch.get(name);
    if (existing && existing.length >= size) return existing;
    const grown = new Float64Array(size);
    this.scratch.set(name, grown);
    return grown;
  }

  constructor(config: ModelConfig) {
    if (config.dModel % config.nHeads !== 0) {
      throw new Error("dModel must divide evenly into heads");
    }
    this.config = config;
    const { vocabSize: V, dModel: D, maxSeq, ffMult } = config;
    const F = D * ffMult;
    const reg = (p: Param) => {
      this.params.push(p);
      return p;
    };
    this.tokEmb = reg(param("tokEmb", V * D, false));
    this.posEmb = reg(param("posEmb", maxSeq * D, false));
    for (let l = 0; l < config.nLayers; l++) {
      this.layers.push({
        ln1g: reg(param(`L${l}.ln1g`, D, false)),
        ln1b: reg(param(`L${l}.ln1b`, D, false)),
        wqkv: reg(param(`L${l}.wqkv`, D * 3 * D, true)),
        bqkv: reg(param(`L${l}.bqkv`, 3 * D, false)),
        wo: reg(param(`L${l}.wo`, D * D, true)),
        bo: reg(param(`L${l}.bo`, D, false)),
        ln2g: reg(param(`L${l}.ln2g`, D, false)),
        ln2b: reg(param(`L${l}.ln2b`, D, false)),
        w1: reg(param(`L${l}.w1`, D * F, true)),
        b1: reg(param(`L${l}.b1`, F, false)),
        w2: reg(param(`L${l}.w2`, F * D, true)),
        b2: reg(param(`L${l}.b2`, D, false)),
      });
    }
    this.lnFg = reg(param("lnFg", D, false));
    this.lnFb = reg(param("lnFb", D, false));
    this.head = reg(param("head", D * V, true));
    this.headB = reg(param("headB", V, false));
  }

  parameterCount(): number {
    return this.params.reduce((acc, p) => acc + p.data.length, 0);
  }

  init(seed: number): void {
    const rng = mulberry32(seed);
    const std = 0.02;
    const residStd = std / Math.sqrt(2 * this.config.nLayers);
    for (const p of this.params) {
      if (p.name.endsWith("g")) p.data.fill(1); // LN gains
      else if (p.name.endsWith("b") || p.name === "headB") p.data.fill(0);
      else {
        const s = p.name.endsWith(".wo") || p.name.endsWith(".w2") ? residStd : std;
        for (let i = 0; i < p.data.length; i++) p.data[i] = gauss(rng) * s;
      }
    }
  }

  zeroGrads(): void {
    for (const p of this.params) p.grad.fill(0);
  }

  private layerNormForward(
    x: Float64Array,
    g: Float64Array,
    b: Float64Array,
    rows: number,
    D: number,
    out: Float64Array,
    xhat: Float64Array,
    rstd: Float64Array,
  ): void {
    for (let r = 0; r < rows; r++) {
      const off = r * D;
      let mean = 0;
      for (let i = 0; i < D; i++) mean += x[off + i];
      mean /= D;
      let variance = 0;
      for (let i = 0; i < D; i++) {
        const d = x[off + i] - mean;
        variance += d * d;
      }
      const rs = 1 / Math.sqrt(variance / D + 1e-5);
      rstd[r] = rs;
      for (let i = 0; i < D; i++) {
        const xh = (x[off + i] - mean) * rs;
        xhat[off + i] = xh;
        out[off + i] = g[i] * xh + b[i];
      }
    }
  }

  private layerNormBackward(
    dOut: Float64Array,
    g: Param,
    b: Param,
    rows: number,
    D: number,
    xhat: Float64Array,
    rstd: Float64Array,
    dX: Float64Array,
  ): void {
    for (let r = 0; r < rows; r++) {
      const off = r * D;
      let meanDxhat = 0;
      let meanDxhatXhat = 0;
      for (let i = 0; i < D; i++) {
        const dy = dOut[off + i];
        g.grad[i] += dy * xhat[off + i];
        b.grad[i] += dy;
        const dxh = dy * g.data[i];
        meanDxhat += dxh;
        meanDxhatXhat += dxh * xhat[off + i];
      }
      meanDxhat /= D;
      meanDxhatXhat /= D;
      const rs = rstd[r];
      for (let i = 0; i < D; i++) {
        const dxh = dOut[off + i] * g.data[i];
        dX[off + i] += rs * (dxh - meanDxhat - xhat[off + i] * meanDxhatXhat);
      }
    }
  }

  /**
   * Training step core: masked mean cross-entropy over (B,T) token grids.
   * Returns the loss; accumulates gradients for every parameter.
   */
  lossAndGrad(
    inputs: Int32Array,
    targets: Int32Array,
    mask: Uint8Array,
    batchSize: number,
    seqLen: number,
  ): number {
    const { dModel: D, nHeads: H, nLayers: L, vocabSize: V, ffMult } = this.config;
    const F = D * ffMult;
    const dh = D / H;
    const scale = 1 / Math.sqrt(dh);
    const rows = batchSize * seqLen;
    let maskedCount = 0;
    for (let i = 0; i < rows; i++) maskedCount += mask[i];
    if (maskedCount === 0) return 0;

    // ---- forward ----
    let x = this.buf("x0", rows * D);
    for (let b = 0; b < batchSize; b++) {
      for (let t = 0; t < seqLen; t++) {
        const tok = inputs[b * seqLen + t];
        const off = (b * seqLen + t) * D;
        const eOff = tok * D;
        const pOff = t * D;
        for (let i = 0; i < D; i++) {
          x[off + i] = this.tokEmb.data[eOff + i] + this.posEmb.data[pOff + i];
        }
      }
    }
    const acts: LayerActs[] = [];
    for (let l = 0; l < L; l++) {
      const lp = this.layers[l];
      const a: LayerActs = {
        x0: x,
        h1: this.buf(`l${l}.h1`, rows * D),
        xhat1: this.buf(`l${l}.xhat1`, rows * D),
        rstd1: this.buf(`l${l}.rstd1`, rows),
        qkv: this.buf(`l${l}.qkv`, rows * 3 * D),
        probs: this.buf(`l${l}.probs`, batchSize * H * seqLen * seqLen),
        att: this.buf(`l${l}.att`, rows * D),
        x1: this.buf(`l${l}.x1`, rows * D),
        h2: this.buf(`l${l}.h2`, rows * D),
        xhat2: this.buf(`l${l}.xhat2`, rows * D),
        rstd2: this.buf(`l${l}.rstd2`, rows),
        ffPre: this.buf(`l${l}.ffPre`, rows * F),
        ffAct: this.buf(`l${l}.ffAct`, rows * F),
      };
      this.layerNormForward(x, lp.ln1g.data, lp.ln1b.data, rows, D, a.h1, a.xhat1, a.rstd1);
      matmul(a.h1, lp.wqkv.data, lp.bqkv.data, a.qkv, rows, D, 3 * D);
      // causal attention
      for (let b = 0; b < batchSize; b++) {
        for (let h = 0; h < H; h++) {
          const probsOff = (b * H + h) * seqLen * seqLen;
          for (let t = 0; t < seqLen; t++) {
            const qOff = (b * seqLen + t) * 3 * D + h * dh;
            let maxScore = -Infinity;
            const rowOff = probsOff + t * seqLen;
            for (let s = 0; s <= t; s++) {
              const kOff = (b * seqLen + s) * 3 * D + D + h * dh;
              let dot = 0;
              for (let i = 0; i < dh; i++) dot += a.qkv[qOff + i] * a.qkv[kOff + i];
              const sc = dot * scale;
              a.probs[rowOff + s] = sc;
              if (sc > maxScore) maxScore = sc;
            }
            let denom = 0;
            for (let s = 0; s <= t; s++) {
              const e = Math.exp(a.probs[rowOff + s] - maxScore);
              a.probs[rowOff + s] = e;
              denom += e;
            }
            const attOff = (b * seqLen + t) * D + h * dh;
            for (let i = 0; i < dh; i++) a.att[attOff + i] = 0;
            for (let s = 0; s <= t; s++) {
              const p = a.probs[rowOff + s] / denom;
              a.probs[rowOff + s] = p;
              const vOff = (b * seqLen + s) * 3 * D + 2 * D + h * dh;
              for (let i = 0; i < dh; i++) a.att[attOff + i] += p * a.qkv[vOff + i];
            }
          }
        }
      }
      matmul(a.att, lp.wo.data, lp.bo.data, a.x1, rows, D, D);
      for (let i = 0; i < rows * D; i++) a.x1[i] += x[i];
      this.layerNormForward(a.x1, lp.ln2g.data, lp.ln2b.data, rows, D, a.h2, a.xhat2, a.rstd2);
      matmul(a.h2, lp.w1.data, lp.b1.data, a.ffPre, rows, D, F);
      for (let i = 0; i < rows * F; i++) a.ffAct[i] = gelu(a.ffPre[i]);
      const xNext = this.buf(`l${l}.xNext`, rows * D);
      matmul(a.ffAct, lp.w2.data, lp.b2.data, xNext, rows, F, D);
      for (let i = 0; i < rows * D; i++) xNext[i] += a.x1[i];
      acts.push(a);
      x = xNext;
    }
    const hF = this.buf("hF", rows * D);
    const xhatF = this.buf("xhatF", rows * D);
    const rstdF = this.buf("rstdF", rows);
    this.layerNormForward(x, this.lnFg.data, this.lnFb.data, rows, D, hF, xhatF, rstdF);
    const logits = this.buf("logits", rows * V);
    matmul(hF, this.head.data, this.headB.data, logits, rows, D, V);

    // ---- masked cross-entropy and dLogits ----
    let loss = 0;
    const dLogits = this.buf("dLogits", rows * V);
    dLogits.fill(0, 0, rows * V);
    for (let r = 0; r < rows; r++) {
      if (!mask[r]) continue;
      const off = r * V;
      let maxLogit = -Infinity;
      for (let j = 0; j < V; j++) if (logits[off + j] > maxLogit) maxLogit = logits[off + j];
      let denom = 0;
      for (let j = 0; j < V; j++) denom += Math.exp(logits[off + j] - maxLogit);
      const target = targets[r];
      const logProb = logits[off + target] - maxLogit - Math.log(denom);
      loss -= logProb;
      for (let j = 0; j < V; j++) {
        const p = Math.exp(logits[off + j] - maxLogit) / denom;
        dLogits[off + j] = (p - (j === target ? 1 : 0)) / maskedCount;
      }
    }
    loss /= maskedCount;

    // ---- backward ----
    const dHF = this.buf("dHF", rows * D);
    dHF.fill(0, 0, rows * D);
    matmulBackW(hF, dLogits, this.head.grad, this.headB.grad, rows, D, V);
    matmulBackA(dLogits, this.head.data, dHF, rows, D, V);
    let dX = this.buf("dX", rows * D);
    dX.fill(0, 0, rows * D);
    this.layerNormBackward(dHF, this.lnFg, this.lnFb, rows, D, xhatF, rstdF, dX);
    const dProbsScratch = this.buf("dProbs", seqLen);

    for (let l = L - 1; l >= 0; l--) {
      const lp = this.layers[l];
      const a = acts[l];
      // ff residual: dX flows to both x1 and the ff branch
      const dFfAct = this.buf("dFfAct", rows * F);
      dFfAct.fill(0, 0, rows * F);
      matmulBackW(a.ffAct, dX, lp.w2.grad, lp.b2.grad, rows, F, D);
      matmulBackA(dX, lp.w2.data, dFfAct, rows, F, D);
      for (let i = 0; i < rows * F; i++) dFfAct[i] *= geluGrad(a.ffPre[i]);
      const dH2 = this.buf("dH2", rows * D);
      dH2.fill(0, 0, rows * D);
      matmulBackW(a.h2, dFfAct, lp.w1.grad, lp.b1.grad, rows, D, F);
      matmulBackA(dFfAct, lp.w1.data, dH2, rows, D, F);
      const dX1 = this.buf("dX1", rows * D);
      for (let i = 0; i < rows * D; i++) dX1[i] = dX[i]; // residual path
      this.layerNormBackward(dH2, lp.ln2g, lp.ln2b, rows, D, a.xhat2, a.rstd2, dX1);
      // attention branch
      const dAtt = this.buf("dAtt", rows * D);
      dAtt.fill(0, 0, rows * D);
      matmulBackW(a.att, dX1, lp.wo.grad, lp.bo.grad, rows, D, D);
      matmulBackA(dX1, lp.wo.data, dAtt, rows, D, D);
      const dQkv = this.buf("dQkv", rows * 3 * D);
      dQkv.fill(0, 0, rows * 3 * D);
      const dh2 = dh;
      for (let b = 0; b < batchSize; b++) {
        for (let h = 0; h < H; h++) {
          const probsOff = (b * H + h) * seqLen * seqLen;
          for (let t = 0; t < seqLen; t++) {
            const rowOff = probsOff + t * seqLen;
            const dAttOff = (b * seqLen + t) * D + h * dh2;
            // dProbs and dV
            let dot = 0;
            const dProbs = dProbsScratch;
            for (let s = 0; s <= t; s++) {
              const vOff = (b * seqLen + s) * 3 * D + 2 * D + h * dh2;
              let acc = 0;
              for (let i = 0; i < dh2; i++) acc += dAtt[dAttOff + i] * a.qkv[vOff + i];
              dProbs[s] = acc;
              const p = a.probs[rowOff + s];
              for (let i = 0; i < dh2; i++) dQkv[vOff + i] += p * dAtt[dAttOff + i];
              dot += p * acc;
            }
            // softmax backward, then into q and k
            const qOff = (b * seqLen + t) * 3 * D + h * dh2;
            for (let s = 0; s <= t; s++) {
              const p = a.probs[rowOff + s];
              const dScore = p * (dProbs[s] - dot) * scale;
              if (dScore === 0) continue;
              const kOff = (b * seqLen + s) * 3 * D + D + h * dh2;
              for (let i = 0; i < dh2; i++) {
                dQkv[qOff + i] += dScore * a.qkv[kOff + i];
                dQkv[kOff + i] += dScore * a.qkv[qOff + i];
              }
            }
          }
        }
      }
      const dH1 = this.buf("dH1", rows * D);
      dH1.fill(0, 0, rows * D);
      matmulBackW(a.h1, dQkv, lp.wqkv.grad, lp.bqkv.grad, rows, D, 3 * D);
      matmulBackA(dQkv, lp.wqkv.data, dH1, rows, D, 3 * D);
      // dX becomes the residual input gradient for the next-deeper layer;
      // dX1's buffer is recycled as the new dX, so copy, then swap names
      for (let i = 0; i < rows * D; i++) dX[i] = dX1[i];
      this.layerNormBackward(dH1, lp.ln1g, lp.ln1b, rows, D, a.xhat1, a.rstd1, dX);
    }
    // embeddings
    for (let b = 0; b < batchSize; b++) {
      for (let t = 0; t < seqLen; t++) {
        const tok = inputs[b * seqLen + t];
        const off = (b * seqLen + t) * D;
        const eOff = tok * D;
        const pOff = t * D;
        for (let i = 0; i < D; i++) {
          this.tokEmb.grad[eOff + i] += dX[off + i];
          this.posEmb.grad[pOff + i] += dX[off + i];
        }
      }
    }
    return loss;
  }

  newCache(): KVCache {
    const { maxSeq, dModel: D, nLayers } = this.config;
    return {
      keys: Array.from({ length: nLayers }, () => new Float64Array(maxSeq * D)),
      values: Array.from({ length: nLayers }, () => new Float64Array(maxSeq * D)),
      length: 0,
    };
  }

  /** Logits for one token appended at position cache.length (forward only). */
  stepLogits(token: number, cache: KVCache): Float64Array {
    const { dModel: D, nHeads: H, vocabSize: V, ffMult, maxSeq } = this.config;
    const F = D * ffMult;
    const dh = D / H;
    const scale = 1 / Math.sqrt(dh);
    const t = cache.length;
    if (t >= maxSeq) throw new Error(`sequence longer than maxSeq=${maxSeq}`);
    const x = new Float64Array(D);
    for (let i = 0; i < D; i++) {
      x[i] = this.tokEmb.data[token * D + i] + this.posEmb.data[t * D + i];
    }
    const h = new Float64Array(D);
    const xhat = new Float64Array(D);
    const rstd = new Float64Array(1);
    const qkv = new Float64Array(3 * D);
    const att = new Float64Array(D);
    const ffPre = new Float64Array(F);
    const proj = new Float64Array(D);
    for (let l = 0; l < this.config.nLayers; l++) {
      const lp = this.layers[l];
      this.layerNormForward(x, lp.ln1g.data, lp.ln1b.data, 1, D, h, xhat, rstd);
      matmul(h, lp.wqkv.data, lp.bqkv.data, qkv, 1, D, 3 * D);
      const keys = cache.keys[l];
      const values = cache.values[l];
      for (let i = 0; i < D; i++) {
        keys[t * D + i] = qkv[D + i];
        values[t * D + i] = qkv[2 * D + i];
      }
      for (let hd = 0; hd < H; hd++) {
        const qOff = hd * dh;
        const scores = new Float64Array(t + 1);
        let maxScore = -Infinity;
        for (let s = 0; s <= t; s++) {
          let dot = 0;
          for (let i = 0; i < dh; i++) dot += qkv[qOff + i] * keys[s * D + qOff + i];
          scores[s] = dot * scale;
          if (scores[s] > maxScore) maxScore = scores[s];
        }
        let denom = 0;
        for (let s = 0; s <= t; s++) {
          scores[s] = Math.exp(scores[s] - maxScore);
          denom += scores[s];
        }
        for (let i = 0; i < dh; i++) att[qOff + i] = 0;
        for (let s = 0; s <= t; s++) {
          const p = scores[s] / denom;
          for (let i = 0; i < dh; i++) att[qOff + i] += p * values[s * D + qOff + i];
        }
      }
      matmul(att, lp.wo.data, lp.bo.data, proj, 1, D, D);
      for (let i = 0; i < D; i++) x[i] += proj[i];
      this.layerNormForward(x, lp.ln2g.data, lp.ln2b.data, 1, D, h, xhat, rstd);
      matmul(h, lp.w1.data, lp.b1.data, ffPre, 1, D, F);
      for (let i = 0; i < F; i++) ffPre[i] = gelu(ffPre[i]);
      matmul(ffPre, lp.w2.data, lp.b2.data, proj, 1, F, D);
      for (let i = 0; i < D; i++) x[i] += proj[i];
    }
    this.layerNormForward(x, this.lnFg.data, this.lnFb.data, 1, D, h, xhat, rstd);
    const logits = new Float64Array(V);
    matmul(h, this.head.data, this.headB.data, logits, 1, D, V);
    cache.length = t + 1;
    return logits;
  }
}

// ---------------------------------------------------------------------------
// checkpoint (de)serialization
// ---------------------------------------------------------------------------

export interface Checkpoint {
  config: ModelConfig;
  vocabChars: string[];
  step: number;
  trainLoss: number;
  params: Record<string, string>; // base64 of Float64Array bytes
}

export function toCheckpoint(
  model: Model,
  vocabChars: string[],
  step: number,
  trainLoss: number,
): Checkpoint {
  const params: Record<string, string> = {};
  for (const p of model.params) {
    params[p.name] = Buffer.from(p.data.buffer, p.data.byteOffset, p.data.byteLength).toString(
      "base64",
    );
  }
  return { config: model.config, vocabChars, step, trainLoss, params };
}

export function fromCheckpoint(ckpt: Checkpoint): { model: Model; vocabChars: string[] } {
  const model = new Model(ckpt.config);
  for (const p of model.params) {
    const encoded = ckpt.params[p.name];
    if (!encoded) throw new Error(`checkpoint missing parameter ${p.name}`);
    const buf = Buffer.from(encoded, "base64");
    const arr = new Float64Array(buf.buffer, buf.byteOffset, buf.byteLength / 8);
    if (arr.length !== p.data.length) {
      throw new Error(`checkpoint parameter ${p.name} has wrong size`);
    }
    p.data.set(arr);
  }
  return { model, vocabChars: ckpt.vocabChars };
}
