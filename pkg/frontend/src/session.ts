import { z } from "zod";
import {
  GlyphApi,
  NetworkError,
  Panel,
  ServiceError,
  Viewbox,
  isAbort,
} from "./api.js";
import { ALL_CHARS, isKnownChar } from "./chars.js";

// Slider bounds for concept strength; releases clamp into this range.
export const ALPHA_MIN = -2;
export const ALPHA_MAX = 2;

export interface SuppliedGlyph {
  char: string;
  svg: string;
}

export interface FontsetCell {
  char: string;
  svg: string;
  confidence: number;
}

export interface SessionState {
  seed: number;
  supplied: SuppliedGlyph[];
  // invariant: non-null exactly when at least one glyph has been encoded
  zCurrent: number[] | null;
  fontset: FontsetCell[] | null;
  viewbox: Viewbox | null;
  concepts: string[];
  sliders: Record<string, number>;
  conceptChar: string;
  conceptBaseline: string | null;
  conceptPreview: { concept: string; alpha: number; svg: string } | null;
  zA: number[] | null;
  zB: number[] | null;
  interpSteps: number;
  interpChar: string;
  interpolation: string[] | null;
  banner: string | null;
  inline: Partial<Record<Panel, string>>;
  pending: Partial<Record<Panel, boolean>>;
}

const suppliedSchema = z.object({ char: z.string(), svg: z.string() });
const cellSchema = z.object({
  char: z.string(),
  svg: z.string(),
  confidence: z.number(),
});
const exportSchema = z.object({
  version: z.literal(1),
  seed: z.number(),
  supplied: z.array(suppliedSchema),
  zCurrent: z.array(z.number()).nullable(),
  fontset: z.array(cellSchema).nullable(),
  viewbox: z.tuple([z.number(), z.number(), z.number()]).nullable(),
  sliders: z.record(z.string(), z.number()),
  conceptChar: z.string(),
  zA: z.array(z.number()).nullable(),
  zB: z.array(z.number()).nullable(),
  interpSteps: z.number(),
  interpChar: z.string(),
});

export type SessionExport = z.infer<typeof exportSchema>;

export interface StoreOptions {
  seed?: number;
  n?: number;
  temperature?: number;
}

export function clampAlpha(alpha: number): number {
  return Math.min(ALPHA_MAX, Math.max(ALPHA_MIN, alpha));
}

function initialState(seed: number): SessionState {
  return {
    seed,
    supplied: [],
    zCurrent: null,
    fontset: null,
    viewbox: null,
    concepts: [],
    sliders: {},
    conceptChar: "0",
    conceptBaseline: null,
    conceptPreview: null,
    zA: null,
    zB: null,
    interpSteps: 5,
    interpChar: "0",
    interpolation: null,
    banner: null,
    inline: {},
    pending: {},
  };
}

export class SessionStore {
  private state: SessionState;
  private listeners = new Set<() => void>();
  private lastFailed: (() => Promise<void>) | null = null;
  private readonly n: number;
  private readonly temperature: number;

  constructor(
    private readonly api: GlyphApi,
    options: StoreOptions = {},
  ) {
    this.state = initialState(options.seed ?? 0);
    this.n = options.n ?? 5;
    this.temperature = options.temperature ?? 1.0;
  }

  getState(): SessionState {
    return this.state;
  }

  subscribe(fn: () => void): () => void {
    this.listeners.add(fn);
    return () => this.listeners.delete(fn);
  }

  private set(patch: Partial<SessionState>): void {
    this.state = { ...this.state, ...patch };
    for (const fn of this.listeners) fn();
  }

  // Shared wrapper: one pending flag per panel, 4xx into that panel's inline
  // message, network failures into the retryable banner, aborts swallowed.
  private async run(panel: Panel, action: () => Promise<void>): Promise<void> {
    this.set({
      pending: { ...this.state.pending, [panel]: true },
      inline: { ...this.state.inline, [panel]: undefined },
      banner: null,
    });
    try {
      await action();
      this.lastFailed = null;
    } catch (err) {
      if (isAbort(err)) return;
      if (err instanceof ServiceError && err.isValidation) {
        this.set({
          inline: { ...this.state.inline, [panel]: `${err.reason}: ${err.message}` },
        });
      } else if (err instanceof NetworkError || err instanceof ServiceError) {
        this.lastFailed = () => this.run(panel, action);
        this.set({ banner: err.message });
      } else {
        throw err;
      }
    } finally {
      this.set({ pending: { ...this.state.pending, [panel]: false } });
    }
  }

  async retry(): Promise<void> {
    const failed = this.lastFailed;
    if (failed) await failed();
  }

  dismissBanner(): void {
    this.set({ banner: null });
  }

  dismissInline(panel: Panel): void {
    this.set({ inline: { ...this.state.inline, [panel]: undefined } });
  }

  async loadConcepts(): Promise<void> {
    await this.run("concept", async () => {
      const names = await this.api.concepts();
      const sliders: Record<string, number> = {};
      for (const name of names) sliders[name] = this.state.sliders[name] ?? 0;
      this.set({ concepts: names, sliders });
    });
  }

  async addGlyph(char: string, svg: string): Promise<void> {
    await this.run("input", async () => {
      if (!isKnownChar(char)) {
        throw new ServiceError(422, "UnknownLabel", `'${char}' is not a known character`);
      }
      const out = await this.api.encode(svg, char, "input");
      this.set({
        supplied: [...this.state.supplied, { char, svg }],
        zCurrent: out.z,
      });
    });
  }

  removeGlyph(index: number): void {
    const supplied = this.state.supplied.filter((_, i) => i !== index);
    this.set(
      supplied.length === 0
        ? { supplied, zCurrent: null, fontset: null, conceptBaseline: null, conceptPreview: null }
        : { supplied },
    );
  }

  async propagate(): Promise<void> {
    await this.run("grid", async () => {
      const { supplied, seed } = this.state;
      if (supplied.length === 0) {
        throw new ServiceError(400, "BadRequest", "supply at least one glyph first");
      }
      const out = await this.api.propagate(
        {
          glyphs: supplied.map((g) => ({ svg: g.svg, label: g.char })),
          targets: [...ALL_CHARS],
          n: this.n,
          temperature: this.temperature,
          seed,
        },
        "grid",
      );
      const fontset = ALL_CHARS.map((char, i) => ({
        char,
        svg: out.svgs[i] ?? "",
        confidence: out.confidences[i] ?? NaN,
      }));
      this.set({
        fontset,
        zCurrent: out.z,
        viewbox: out.viewbox,
        conceptBaseline: null,
        conceptPreview: null,
        interpolation: null,
      });
    });
  }

  // The concept panel's reference decode: alpha=0 through the same request
  // shape every slider release uses, so releases at alpha=0 byte-match it.
  async loadConceptBaseline(): Promise<void> {
    await this.run("concept", async () => {
      const { zCurrent, concepts, conceptChar, seed } = this.state;
      if (!zCurrent || concepts.length === 0) return;
      const concept = concepts[0];
      if (concept === undefined) return;
      const out = await this.api.analogy(
        {
          z: zCurrent,
          concept,
          alphas: [0],
          label: conceptChar,
          n: this.n,
          temperature: this.temperature,
          seed,
        },
        "concept",
      );
      this.set({ conceptBaseline: out.svgs[0] ?? null });
    });
  }

  async setConceptChar(char: string): Promise<void> {
    this.set({ conceptChar: char, conceptBaseline: null, conceptPreview: null });
    await this.loadConceptBaseline();
  }

  setSlider(concept: string, alpha: number): void {
    this.set({
      sliders: { ...this.state.sliders, [concept]: clampAlpha(alpha) },
    });
  }

  // Called on slider release: exactly one request per release.
  async releaseSlider(concept: string, alpha: number): Promise<void> {
    const clamped = clampAlpha(alpha);
    this.setSlider(concept, clamped);
    await this.run("concept", async () => {
      const { zCurrent, conceptChar, seed } = this.state;
      if (!zCurrent) {
        throw new ServiceError(400, "BadRequest", "propagate a fontset before steering");
      }
      const out = await this.api.analogy(
        {
          z: zCurrent,
          concept,
          alphas: [clamped],
          label: conceptChar,
          n: this.n,
          temperature: this.temperature,
          seed,
        },
        "concept",
      );
      const svg = out.svgs[0];
      if (svg !== undefined) {
        this.set({ conceptPreview: { concept, alpha: clamped, svg } });
      }
    });
  }

  saveEndpointA(): void {
    if (this.state.zCurrent) this.set({ zA: [...this.state.zCurrent] });
  }

  saveEndpointB(): void {
    if (this.state.zCurrent) this.set({ zB: [...this.state.zCurrent] });
  }

  setInterpSteps(steps: number): void {
    this.set({ interpSteps: Math.max(2, Math.round(steps)) });
  }

  setInterpChar(char: string): void {
    this.set({ interpChar: char, interpolation: null });
  }

  async runInterpolation(): Promise<void> {
    await this.run("interp", async () => {
      const { zA, zB, interpSteps, interpChar, seed } = this.state;
      if (!zA || !zB) {
        throw new ServiceError(400, "BadRequest", "save both endpoints first");
      }
      const out = await this.api.interpolate(
        {
          zA,
          zB,
          steps: interpSteps,
          label: interpChar,
          n: this.n,
          temperature: this.temperature,
          seed,
        },
        "interp",
      );
      this.set({ interpolation: out.svgs });
    });
  }

  exportSession(): string {
    const s = this.state;
    const payload: SessionExport = {
      version: 1,
      seed: s.seed,
      supplied: s.supplied,
      zCurrent: s.zCurrent,
      fontset: s.fontset,
      viewbox: s.viewbox,
      sliders: s.sliders,
      conceptChar: s.conceptChar,
      zA: s.zA,
      zB: s.zB,
      interpSteps: s.interpSteps,
      interpChar: s.interpChar,
    };
    return JSON.stringify(payload, null, 2);
  }

  importSession(text: string): void {
    const parsed = exportSchema.parse(JSON.parse(text));
    const sliders: Record<string, number> = {};
    for (const [name, alpha] of Object.entries(parsed.sliders)) {
      sliders[name] = clampAlpha(alpha);
    }
    this.set({
      ...initialState(parsed.seed),
      concepts: this.state.concepts,
      supplied: parsed.supplied,
      zCurrent: parsed.supplied.length > 0 ? parsed.zCurrent : null,
      fontset: parsed.fontset,
      viewbox: parsed.viewbox,
      sliders,
      conceptChar: parsed.conceptChar,
      zA: parsed.zA,
      zB: parsed.zB,
      interpSteps: Math.max(2, Math.round(parsed.interpSteps)),
      interpChar: parsed.interpChar,
    });
  }
}
