/**
 * JSONL dataset loading and masked-batch construction.
 *
 * Records follow the generator's schema: ordered (text, trainable) segments
 * whose concatenation is the training string.  Tokenization is per character
 * with BOS/EOS specials; the loss mask is 1 exactly on the characters of
 * trainable segments (plus the final EOS, which the model must learn to
 * emit).
 */

import { readFileSync } from "node:fs";

export interface Segment {
  text: string;
  trainable: boolean;
}

export interface DataRecord {
  task: string;
  format: string;
  length: number;
  role: string;
  segments: Segment[];
}

export const BOS = "<bos>";
export const EOS = "<eos>";

export interface Vocab {
  chars: string[]; // index -> char; BOS and EOS occupy the first two slots
  index: Map<string, number>;
}

export function readJsonl(path: string): DataRecord[] {
  const out: DataRecord[] = [];
  const lines = readFileSync(path, "utf-8").split("\n");
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i].trim();
    if (!line) continue;
    let rec: unknown;
    try {
      rec = JSON.parse(line);
    } catch (err) {
      throw new Error(`${path}:${i + 1}: not JSON: ${err}`);
    }
    const r = rec as DataRecord;
    if (!Array.isArray(r.segments) || r.segments.length === 0) {
      throw new Error(`${path}:${i + 1}: record has no segments`);
    }
    for (const seg of r.segments) {
      if (typeof seg.text !== "string" || typeof seg.trainable !== "boolean") {
        throw new Error(`${path}:${i + 1}: malformed segment`);
      }
    }
    if (!r.segments.some((s) => s.trainable && s.text.length > 0)) {
      throw new Error(`${path}:${i + 1}: record has no trainable text`);
    }
    out.push(r);
  }
  return out;
}

export function buildVocab(records: DataRecord[]): Vocab {
  const seen = new Set<string>();
  for (const rec of records) {
    for (const seg of rec.segments) for (const ch of seg.text) seen.add(ch);
  }
  const chars = [BOS, EOS, ...[...seen].sort()];
  const index = new Map(chars.map((c, i) => [i >= 2 ? c : chars[i], i] as [string, number]));
  return { chars, index };
}

export function encodeChar(vocab: Vocab, ch: string): number | undefined {
  return vocab.index.get(ch);
}

export interface MaskedSequence {
  /** token ids including leading BOS and trailing EOS */
  tokens: Int32Array;
  /** mask[i] applies to predicting tokens[i+1]; length tokens.length - 1 */
  mask: Uint8Array;
  record: DataRecord;
}

/**
 * One record -> (tokens, next-token loss mask).
 *
 * mask[i] = 1 iff the character at tokens[i+1] belongs to a trainable
 * segment (or is the EOS that ends a record whose last segment is
 * trainable).
 */
export function encodeRecord(vocab: Vocab, rec: DataRecord): MaskedSequence {
  const ids: number[] = [0]; // BOS
  const trainablePerToken: number[] = [0]; // BOS itself is never predicted
  for (const seg of rec.segments) {
    for (const ch of seg.text) {
      const id = vocab.index.get(ch);
      if (id === undefined) throw new Error(`character ${JSON.stringify(ch)} not in vocab`);
      ids.push(id);
      trainablePerToken.push(seg.trainable ? 1 : 0);
    }
  }
  const last = rec.segments[rec.segments.length - 1];
  ids.push(1); // EOS
  trainablePerToken.push(last.trainable ? 1 : 0);
  const tokens = Int32Array.from(ids);
  const mask = new Uint8Array(tokens.length - 1);
  for (let i = 0; i + 1 < tokens.length; i++) mask[i] = trainablePerToken[i + 1];
  return { tokens, mask, record: rec };
}

/** Character index spans (into the concatenated text) that are trainable. */
export function trainableSpans(rec: DataRecord): Array<[number, number]> {
  const spans: Array<[number, number]> = [];
  let pos = 0;
  for (const seg of rec.segments) {
    if (seg.trainable && seg.text.length > 0) spans.push([pos, pos + seg.text.length]);
    pos += seg.text.length;
  }
  return spans;
}

export interface Batch {
  /** B x T inputs (row-major), zero-padded */
  inputs: Int32Array;
  /** B x T targets */
  targets: Int32Array;
  /** B x T loss mask (0 on padding and frozen text) */
  mask: Uint8Array;
  batchSize: number;
  seqLen: number;
  maskedTokens: number;
}

/**
 * Group sequences of similar length into fixed-size batches (sorted then
 * chunked) to keep padding waste low; rows are x = tokens[:-1],
 * y = tokens[1:].
 */
export function buildBatches(
  sequences: MaskedSequence[],
  batchSize: number,
  maxSeqLen: number,
): Batch[] {
  const usable = sequences.filter((s) => s.tokens.length - 1 <= maxSeqLen);
  const sorted = [...usable].sort((a, b) => a.tokens.length - b.tokens.length);
  const batches: Batch[] = [];
  for (let start = 0; start < sorted.length; start += batchSize) {
    const rows = sorted.slice(start, start + batchSize);
    const seqLen = Math.max(...rows.map((r) => r.tokens.length - 1));
    const b = rows.length;
    const inputs = new Int32Array(b * seqLen);
    const targets = new Int32Array(b * seqLen);
    const mask = new Uint8Array(b * seqLen);
    let masked = 0;
    rows.forEach((row, r) => {
      const n = row.tokens.length - 1;
      for (let t = 0; t < n; t++) {
        inputs[r * seqLen + t] = row.tokens[t];
        targets[r * seqLen + t] = row.tokens[t + 1];
        mask[r * seqLen + t] = row.mask[t];
        masked += row.mask[t];
      }
    });
    batches.push({ inputs, targets, mask, batchSize: b, seqLen, maskedTokens: masked });
  }
  return batches;
}
