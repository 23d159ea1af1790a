import express, { Express } from "express";
import { z } from "zod";

import { Scorer } from "./scorer.js";

const scoreRequestSchema = z.object({
  pairs: z
    .array(
      z.object({
        source: z.string(),
        hypothesis: z.string(),
        reference: z.string(),
      }),
    )
    .nonempty(),
  model_name: z.string().optional(),
});

export interface Bridge {
  app: Express;
  /** Resolves once the scorer finished loading. */
  ready: Promise<void>;
}

export function createBridge(scorer: Scorer): Bridge {
  const app = express();
  app.use(express.json({ limit: "8mb" }));

  let loaded = false;
  const ready = scorer.load().then(() => {
    loaded = true;
  });

  app.get("/health", (_req, res) => {
    res.json({ status: "ok", model_name: scorer.modelName, loaded });
  });

  app.post("/score", async (req, res) => {
    if (!loaded) {
      res.status(503).json({ error: "model is still loading" });
      return;
    }
    const parsed = scoreRequestSchema.safeParse(req.body);
    if (!parsed.success) {
      res.status(400).json({ error: parsed.error.issues[0]?.message ?? "bad request" });
      return;
    }
    try {
      const scores = await scorer.score(parsed.data.pairs);
      res.json({ scores, model_name: scorer.modelName });
    } catch (err) {
      res.status(502).json({ error: String(err instanceof Error ? err.message : err) });
    }
  });

  return { app, ready };
}
