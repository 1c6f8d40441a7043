import { z } from "zod";

// Client for the glyph service. All numeric modeling lives server-side; this
// module only validates response shapes and moves strings around.

export type Viewbox = [number, number, number];

const viewbox = z.tuple([z.number(), z.number(), z.number()]);

const healthResponse = z.object({ status: z.string() });
const conceptsResponse = z.object({ concepts: z.array(z.string()) });
const encodeResponse = z.object({
  z: z.array(z.number()),
  sigma2_mean: z.number(),
});
const propagateResponse = z.object({
  svgs: z.array(z.string()),
  confidences: z.array(z.number()),
  z: z.array(z.number()),
  viewbox,
});
const sweepResponse = z.object({
  svgs: z.array(z.string()),
  viewbox,
});

// service errors arrive as {"detail": {"error": name, "detail": message}};
// schema-validation errors arrive as {"detail": [{msg, ...}, ...]}
const errorBody = z.object({
  detail: z.union([
    z.object({ error: z.string(), detail: z.string() }),
    z.array(z.object({ msg: z.string() }).loose()),
  ]),
});

export class ServiceError extends Error {
  constructor(
    public readonly status: number,
    public readonly reason: string,
    detail: string,
  ) {
    super(detail);
    this.name = "ServiceError";
  }

  get isValidation(): boolean {
    return this.status >= 400 && this.status < 500;
  }
}

export class NetworkError extends Error {
  constructor(cause: unknown) {
    super(cause instanceof Error ? cause.message : String(cause));
    this.name = "NetworkError";
  }
}

function parseError(status: number, text: string): ServiceError {
  try {
    const body = errorBody.parse(JSON.parse(text));
    if (Array.isArray(body.detail)) {
      const msgs = body.detail.map((d) => d.msg).join("; ");
      return new ServiceError(status, "ValidationError", msgs);
    }
    return new ServiceError(status, body.detail.error, body.detail.detail);
  } catch {
    return new ServiceError(status, "HttpError", text || `HTTP ${status}`);
  }
}

export interface EncodeResult {
  z: number[];
  sigma2Mean: number;
}

export interface PropagateRequest {
  glyphs?: { svg: string; label: string }[];
  z?: number[];
  targets: string[];
  n?: number;
  temperature?: number;
  seed?: number;
}

export interface PropagateResult {
  svgs: string[];
  confidences: number[];
  z: number[];
  viewbox: Viewbox;
}

export interface AnalogyRequest {
  z: number[];
  concept: string;
  alphas: number[];
  label: string;
  n?: number;
  temperature?: number;
  seed?: number;
}

export interface InterpolateRequest {
  zA: number[];
  zB: number[];
  steps: number;
  label: string;
  n?: number;
  temperature?: number;
  seed?: number;
}

export interface SweepResult {
  svgs: string[];
  viewbox: Viewbox;
}

// One logical request slot per panel; a new request in a slot aborts the one
// already in flight so stale responses can never land on fresh state.
export type Panel = "input" | "grid" | "concept" | "interp";

export interface GlyphApi {
  health(): Promise<void>;
  concepts(): Promise<string[]>;
  encode(svg: string, label: string, panel?: Panel): Promise<EncodeResult>;
  propagate(req: PropagateRequest, panel?: Panel): Promise<PropagateResult>;
  analogy(req: AnalogyRequest, panel?: Panel): Promise<SweepResult>;
  interpolate(req: InterpolateRequest, panel?: Panel): Promise<SweepResult>;
}

export class ApiClient implements GlyphApi {
  private inflight = new Map<Panel, AbortController>();

  constructor(
    public readonly baseUrl: string,
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  private async request(
    route: string,
    init: RequestInit,
    panel?: Panel,
  ): Promise<unknown> {
    if (panel) {
      this.inflight.get(panel)?.abort();
      const controller = new AbortController();
      this.inflight.set(panel, controller);
      init.signal = controller.signal;
    }
    let res: Response;
    try {
      res = await this.fetchImpl(this.baseUrl + route, init);
    } catch (err) {
      if (err instanceof DOMException && err.name === "AbortError") throw err;
      throw new NetworkError(err);
    }
    if (!res.ok) throw parseError(res.status, await res.text());
    return res.json();
  }

  private post(route: string, body: unknown, panel?: Panel): Promise<unknown> {
    return this.request(
      route,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
      },
      panel,
    );
  }

  async health(): Promise<void> {
    healthResponse.parse(await this.request("/health", {}));
  }

  async concepts(): Promise<string[]> {
    return conceptsResponse.parse(await this.request("/concepts", {})).concepts;
  }

  async encode(svg: string, label: string, panel?: Panel): Promise<EncodeResult> {
    const out = encodeResponse.parse(await this.post("/encode", { svg, label }, panel));
    return { z: out.z, sigma2Mean: out.sigma2_mean };
  }

  async propagate(req: PropagateRequest, panel?: Panel): Promise<PropagateResult> {
    const body: Record<string, unknown> = {
      targets: req.targets,
      n: req.n ?? 10,
      temperature: req.temperature ?? 1.0,
      seed: req.seed,
    };
    if (req.glyphs) body.glyphs = req.glyphs;
    if (req.z) body.z = req.z;
    return propagateResponse.parse(await this.post("/propagate", body, panel));
  }

  async analogy(req: AnalogyRequest, panel?: Panel): Promise<SweepResult> {
    return sweepResponse.parse(
      await this.post(
        "/analogy",
        {
          z: req.z,
          concept: req.concept,
          alphas: req.alphas,
          label: req.label,
          n: req.n ?? 10,
          temperature: req.temperature ?? 1.0,
          seed: req.seed,
        },
        panel,
      ),
    );
  }

  async interpolate(req: InterpolateRequest, panel?: Panel): Promise<SweepResult> {
    return sweepResponse.parse(
      await this.post(
        "/interpolate",
        {
          z_a: req.zA,
          z_b: req.zB,
          steps: req.steps,
          label: req.label,
          n: req.n ?? 10,
          temperature: req.temperature ?? 1.0,
          seed: req.seed,
        },
        panel,
      ),
    );
  }
}

export function isAbort(err: unknown): boolean {
  return err instanceof DOMException && err.name === "AbortError";
}
