/**
 * Completion server for a trained checkpoint.
 *
 * Speaks the harness wire protocol: POST /v1/completions with
 * {prompt, max_tokens, temperature, stop}, responding
 * {"choices": [{"text": ...}]}.  Decoding is greedy below temperature 0.05,
 * otherwise softmax sampling at the given temperature; generation ends at a
 * stop sequence (excluded from the returned text), the end-of-sequence
 * token, max_tokens, or the model's context window.
 */

import { readFileSync } from "node:fs";
import http from "node:http";

import { Checkpoint, fromCheckpoint, Model } from "./model.js";
import { mulberry32, Rng } from "./rng.js";

export interface CompletionRequest {
  prompt: string;
  max_tokens?: number;
  temperature?: number;
  stop?: string[];
}

export class Generator {
  readonly model: Model;
  readonly chars: string[];
  private index: Map<string, number>;
  private rng: Rng;

  constructor(model: Model, chars: string[], seed = 1234) {
    this.model = model;
    this.chars = chars;
    this.index = new Map(chars.map((c, i) => [c, i]));
    this.rng = mulberry32(seed);
  }

  static fromFile(path: string, seed = 1234): Generator {
    const ckpt = JSON.parse(readFileSync(path, "utf-8")) as Checkpoint;
    const { model, vocabChars } = fromCheckpoint(ckpt);
    return new Generator(model, vocabChars, seed);
  }

  complete(req: CompletionRequest): string {
    const maxTokens = Math.max(1, Math.min(req.max_tokens ?? 256, this.model.config.maxSeq));
    const temperature = req.temperature ?? 0.01;
    const stops = (req.stop ?? []).filter((s) => s.length > 0);
    const cache = this.model.newCache();
    let logits: Float64Array | null = null;
    const budget = this.model.config.maxSeq;
    // prefill: unknown characters are skipped (the vocab covers the task
    // grammar; anything else carries no signal for this model); prompts over
    // the context window are truncated from the left, keeping room to decode
    const promptIds: number[] = [0];
    for (const ch of req.prompt) {
      const id = this.index.get(ch);
      if (id !== undefined) promptIds.push(id);
    }
    const reserve = Math.min(maxTokens, 16);
    const prefill =
      promptIds.length > budget - reserve ? promptIds.slice(-(budget - reserve)) : promptIds;
    for (const id of prefill) logits = this.model.stepLogits(id, cache);
    let out = "";
    for (let i = 0; i < maxTokens && cache.length < budget; i++) {
      const next = this.sample(logits!, temperature);
      if (next === 1) break; // EOS
      out += this.chars[next] ?? "";
      const hit = stops.find((stop) => out.includes(stop));
      if (hit !== undefined) {
        out = out.slice(0, out.indexOf(hit));
        break;
      }
      logits = this.model.stepLogits(next, cache);
    }
    return out;
  }

  private sample(logits: Float64Array, temperature: number): number {
    if (temperature < 0.05) {
      let best = 0;
      for (let i = 1; i < logits.length; i++) if (logits[i] > logits[best]) best = i;
      return best;
    }
    let max = -Infinity;
    for (const v of logits) if (v > max) max = v;
    const probs = new Float64Array(logits.length);
    let denom = 0;
    for (let i = 0; i < logits.length; i++) {
      probs[i] = Math.exp((logits[i] - max) / temperature);
      denom += probs[i];
    }
    let r = this.rng() * denom;
    for (let i = 0; i < probs.length; i++) {
      r -= probs[i];
      if (r <= 0) return i;
    }
    return probs.length - 1;
  }
}

export function createServer(generator: Generator): http.Server {
  return http.createServer((req, res) => {
    const respond = (code: number, payload: unknown) => {
      const body = JSON.stringify(payload);
      res.writeHead(code, { "Content-Type": "application/json" });
      res.end(body);
    };
    if (req.method === "GET") {
      respond(200, { status: "ok" });
      return;
    }
    if (req.method !== "POST" || req.url !== "/v1/completions") {
      respond(404, { error: "expected POST /v1/completions" });
      return;
    }
    const chunks: Buffer[] = [];
    req.on("data", (c) => chunks.push(c));
    req.on("end", () => {
      let parsed: CompletionRequest;
      try {
        parsed = JSON.parse(Buffer.concat(chunks).toString("utf-8"));
      } catch {
        respond(400, { error: "request body is not valid JSON" });
        return;
      }
      if (typeof parsed.prompt !== "string" || parsed.prompt.length === 0) {
        respond(400, { error: "missing prompt" });
        return;
      }
      try {
        const text = generator.complete(parsed);
        respond(200, { choices: [{ text }] });
      } catch (err) {
        respond(500, { error: String(err) });
      }
    });
  });
}

export function serve(checkpointPath: string, port: number): Promise<http.Server> {
  const generator = Generator.fromFile(checkpointPath);
  const server = createServer(generator);
  return new Promise((resolve, reject) => {
    server.once("error", reject);
    server.listen(port, "127.0.0.1", () => resolve(server));
  });
}
