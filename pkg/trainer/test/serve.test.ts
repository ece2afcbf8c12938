import { AddressInfo } from "node:net";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { buildVocab, readJsonl } from "../src/data.js";
import { Model } from "../src/model.js";
import { createServer, Generator } from "../src/serve.js";

const FIXTURES = new URL("./fixtures/appendix_fixtures.jsonl", import.meta.url).pathname;

// an untrained model is enough to exercise the wire protocol
function freshGenerator(): Generator {
  const vocab = buildVocab(readJsonl(FIXTURES));
  const model = new Model({
    vocabSize: vocab.chars.length,
    dModel: 16,
    nHeads: 2,
    nLayers: 1,
    maxSeq: 64,
    ffMult: 2,
  });
  model.init(3);
  return new Generator(model, vocab.chars);
}

describe("completion server", () => {
  let base = "";
  let server: ReturnType<typeof createServer>;

  beforeAll(async () => {
    server = createServer(freshGenerator());
    await new Promise<void>((resolve) => server.listen(0, "127.0.0.1", resolve));
    base = `http://127.0.0.1:${(server.address() as AddressInfo).port}`;
  });

  afterAll(async () => {
    await new Promise<void>((resolve) => server.close(() => resolve()));
  });

  it("answers the completion endpoint with choices[0].text", async () => {
    const res = await fetch(`${base}/v1/completions`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ prompt: "4 + 8\n", max_tokens: 8, temperature: 0.01, stop: [] }),
    });
    expect(res.status).toBe(200);
    const body = (await res.json()) as { choices: Array<{ text: string }> };
    expect(typeof body.choices[0].text).toBe("string");
  });

  it("truncates before a stop sequence", async () => {
    const res = await fetch(`${base}/v1/completions`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ prompt: "4 + 8\n", max_tokens: 40, temperature: 0.9, stop: ["\n"] }),
    });
    const body = (await res.json()) as { choices: Array<{ text: string }> };
    expect(body.choices[0].text).not.toContain("\n");
  });

  it("near-zero temperature decodes greedily (deterministic)", async () => {
    const once = async () => {
      const res = await fetch(`${base}/v1/completions`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ prompt: "12 + 34\n", max_tokens: 12, temperature: 0.01 }),
      });
      return ((await res.json()) as { choices: Array<{ text: string }> }).choices[0].text;
    };
    expect(await once()).toBe(await once());
  });

  it("rejects malformed JSON with a 4xx", async () => {
    const res = await fetch(`${base}/v1/completions`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: "{not json",
    });
    expect(res.status).toBe(400);
  });

  it("rejects a missing prompt with a 4xx", async () => {
    const res = await fetch(`${base}/v1/completions`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ max_tokens: 4 }),
    });
    expect(res.status).toBe(400);
  });

  it("caps generation at max_tokens", async () => {
    const res = await fetch(`${base}/v1/completions`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ prompt: "1 + 1\n", max_tokens: 3, temperature: 0.9 }),
    });
    const body = (await res.json()) as { choices: Array<{ text: string }> };
    expect(body.choices[0].text.length).toBeLessThanOrEqual(3);
  });
});
