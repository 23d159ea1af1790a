/**
 * Scoring backends for the bridge.
 *
 * The real deployment wraps the pretrained COMET-22 quality-estimation model
 * behind an upstream inference process (COMET_UPSTREAM_URL). Offline and in
 * CI, a deterministic lexical surrogate stands in: it keeps the contract
 * (scores in [0, 1], positional alignment, determinism) without pretending
 * to be the neural metric; its model_name makes the substitution visible.
 */

export interface ScorePair {
  source: string;
  hypothesis: string;
  reference: string;
}

export interface Scorer {
  readonly modelName: string;
  /** Resolves when the model is ready to serve. */
  load(): Promise<void>;
  score(pairs: ScorePair[]): Promise<number[]>;
}

function charTrigrams(text: string): Map<string, number> {
  const squeezed = text.replace(/\s+/g, "");
  const grams = new Map<string, number>();
  for (let i = 0; i + 3 <= squeezed.length; i++) {
    const gram = squeezed.slice(i, i + 3);
    grams.set(gram, (grams.get(gram) ?? 0) + 1);
  }
  return grams;
}

/** Dice coefficient over character trigrams; 1.0 for identical texts. */
export function lexicalOverlap(hypothesis: string, reference: string): number {
  const hyp = charTrigrams(hypothesis);
  const ref = charTrigrams(reference);
  let hypTotal = 0;
  let refTotal = 0;
  let common = 0;
  for (const count of hyp.values()) hypTotal += count;
  for (const count of ref.values()) refTotal += count;
  for (const [gram, count] of hyp) {
    common += Math.min(count, ref.get(gram) ?? 0);
  }
  if (hypTotal + refTotal === 0) {
    return hypothesis.trim() === reference.trim() ? 1 : 0;
  }
  return (2 * common) / (hypTotal + refTotal);
}

export class LexicalStubScorer implements Scorer {
  readonly modelName = "lexical-f1-stub";

  async load(): Promise<void> {
    // Nothing to fetch; the surrogate is pure code.
  }

  async score(pairs: ScorePair[]): Promise<number[]> {
    return pairs.map((p) => lexicalOverlap(p.hypothesis, p.reference));
  }
}

/** Delegates to a real COMET inference service speaking the same contract. */
export class UpstreamScorer implements Scorer {
  constructor(
    private readonly url: string,
    readonly modelName: string = "unbabel/wmt22-comet-da",
  ) {}

  async load(): Promise<void> {
    const reply = await fetch(`${this.url.replace(/\/$/, "")}/health`);
    if (!reply.ok) {
      throw new Error(`upstream scorer unhealthy: ${reply.status}`);
    }
  }

  async score(pairs: ScorePair[]): Promise<number[]> {
    const reply = await fetch(`${this.url.replace(/\/$/, "")}/score`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ pairs, model_name: this.modelName }),
    });
    if (!reply.ok) {
      throw new Error(`upstream scorer failed: ${reply.status}`);
    }
    const payload = (await reply.json()) as { scores?: unknown };
    if (!Array.isArray(payload.scores) || payload.scores.length !== pairs.length) {
      throw new Error("upstream scorer returned misaligned scores");
    }
    return payload.scores.map((value) => Number(value));
  }
}

export function scorerFromEnv(env: NodeJS.ProcessEnv = process.env): Scorer {
  const upstream = env.COMET_UPSTREAM_URL;
  if (upstream) {
    return new UpstreamScorer(upstream, env.COMET_MODEL_NAME);
  }
  return new LexicalStubScorer();
}
