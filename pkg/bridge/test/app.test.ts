import { AddressInfo } from "node:net";
import { Server } from "node:http";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { createBridge } from "../src/app.js";
import { LexicalStubScorer, Scorer, lexicalOverlap } from "../src/scorer.js";

function listen(appServer: ReturnType<typeof createBridge>["app"]): Promise<Server> {
  return new Promise((resolve) => {
    const server = appServer.listen(0, () => resolve(server));
  });
}

function baseUrl(server: Server): string {
  const { port } = server.address() as AddressInfo;
  return `http://127.0.0.1:${port}`;
}

const THREE_PAIRS = {
  pairs: [
    { source: "나는 커피를 마셨다.", hypothesis: "I drank coffee.", reference: "I drank coffee." },
    { source: "비가 온다.", hypothesis: "It is raining.", reference: "Rain is falling." },
    { source: "기차가 간다.", hypothesis: "completely unrelated words", reference: "The train departs." },
  ],
};

describe("bridge contract", () => {
  let server: Server;
  let url: string;

  beforeAll(async () => {
    const bridge = createBridge(new LexicalStubScorer());
    server = await listen(bridge.app);
    url = baseUrl(server);
    await bridge.ready;
  });

  afterAll(() => {
    server.close();
  });

  it("scores three pairs positionally, all in [0, 1]", async () => {
    const reply = await fetch(`${url}/score`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(THREE_PAIRS),
    });
    expect(reply.status).toBe(200);
    const payload = (await reply.json()) as { scores: number[] };
    expect(payload.scores).toHaveLength(3);
    for (const score of payload.scores) {
      expect(score).toBeGreaterThanOrEqual(0);
      expect(score).toBeLessThanOrEqual(1);
    }
    // Distinct sentinel pairs pin the alignment: identical > overlapping > disjoint.
    expect(payload.scores[0]).toBe(1);
    expect(payload.scores[1]).toBeGreaterThan(payload.scores[2]);
  });

  it("identical requests yield identical scores", async () => {
    const once = await (
      await fetch(`${url}/score`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(THREE_PAIRS),
      })
    ).json();
    const twice = await (
      await fetch(`${url}/score`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(THREE_PAIRS),
      })
    ).json();
    expect(twice).toEqual(once);
  });

  it("rejects an empty pairs list with 400", async () => {
    const reply = await fetch(`${url}/score`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ pairs: [] }),
    });
    expect(reply.status).toBe(400);
  });

  it("rejects malformed bodies with 400", async () => {
    const reply = await fetch(`${url}/score`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ pairs: [{ hypothesis: "x" }] }),
    });
    expect(reply.status).toBe(400);
  });

  it("health reports the model and 404s unknown routes", async () => {
    const health = (await (await fetch(`${url}/health`)).json()) as {
      status: string;
      model_name: string;
      loaded: boolean;
    };
    expect(health.status).toBe("ok");
    expect(health.model_name).toBe("lexical-f1-stub");
    expect(health.loaded).toBe(true);
    const missing = await fetch(`${url}/nope`);
    expect(missing.status).toBe(404);
  });
});

describe("loading lifecycle", () => {
  it("health transitions loaded false -> true and /score 503s before load", async () => {
    let release: () => void = () => {};
    const gate = new Promise<void>((resolve) => {
      release = resolve;
    });
    const slow: Scorer = {
      modelName: "slow-stub",
      load: () => gate,
      score: async (pairs) => pairs.map(() => 0.5),
    };
    const bridge = createBridge(slow);
    const server = await listen(bridge.app);
    const url = baseUrl(server);
    try {
      const before = (await (await fetch(`${url}/health`)).json()) as { loaded: boolean };
      expect(before.loaded).toBe(false);
      const refused = await fetch(`${url}/score`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(THREE_PAIRS),
      });
      expect(refused.status).toBe(503);

      release();
      await bridge.ready;
      const after = (await (await fetch(`${url}/health`)).json()) as { loaded: boolean };
      expect(after.loaded).toBe(true);
      const accepted = await fetch(`${url}/score`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(THREE_PAIRS),
      });
      expect(accepted.status).toBe(200);
    } finally {
      server.close();
    }
  });
});

describe("lexical surrogate", () => {
  it("is 1 on identity, 0 on disjoint, symmetric bounds", () => {
    expect(lexicalOverlap("the cat sat", "the cat sat")).toBe(1);
    expect(lexicalOverlap("abcdef", "uvwxyz")).toBe(0);
    const score = lexicalOverlap("the cat sat", "the cat slept");
    expect(score).toBeGreaterThan(0);
    expect(score).toBeLessThan(1);
  });

  it("treats short identical strings as a match", () => {
    expect(lexicalOverlap("ab", "ab")).toBe(1);
    expect(lexicalOverlap("ab", "cd")).toBe(0);
  });
});
