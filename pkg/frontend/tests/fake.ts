import type {
  AnalogyRequest,
  EncodeResult,
  GlyphApi,
  InterpolateRequest,
  Panel,
  PropagateRequest,
  PropagateResult,
  SweepResult,
  Viewbox,
} from "../src/api.js";

// Deterministic in-memory stand-in for the service: every decode is a string
// derived from its inputs, so byte-level assertions work without a network.
export class FakeApi implements GlyphApi {
  calls: { method: string; panel?: Panel }[] = [];
  failNext: Error | null = null;
  readonly viewbox: Viewbox = [-0.125, -0.125, 1.25];

  private bump(method: string, panel?: Panel): void {
    this.calls.push({ method, panel });
    if (this.failNext) {
      const err = this.failNext;
      this.failNext = null;
      throw err;
    }
  }

  countOf(method: string): number {
    return this.calls.filter((c) => c.method === method).length;
  }

  async health(): Promise<void> {
    this.bump("health");
  }

  async concepts(): Promise<string[]> {
    this.bump("concepts");
    return ["bold", "italic"];
  }

  async encode(svg: string, label: string, panel?: Panel): Promise<EncodeResult> {
    this.bump("encode", panel);
    return { z: [svg.length, label.charCodeAt(0)], sigma2Mean: 0.1 };
  }

  async propagate(req: PropagateRequest, panel?: Panel): Promise<PropagateResult> {
    this.bump("propagate", panel);
    const z = req.z ?? [req.glyphs?.length ?? 0, req.seed ?? 0];
    return {
      svgs: req.targets.map((c) => `M 0 0 L 1 1 Z #${c}:${req.seed}`),
      confidences: req.targets.map(() => 0.2),
      z,
      viewbox: this.viewbox,
    };
  }

  async analogy(req: AnalogyRequest, panel?: Panel): Promise<SweepResult> {
    this.bump("analogy", panel);
    return {
      svgs: req.alphas.map((a) => `M 0 0 L 1 1 Z @${req.label}:${a}:${req.seed}`),
      viewbox: this.viewbox,
    };
  }

  async interpolate(req: InterpolateRequest, panel?: Panel): Promise<SweepResult> {
    this.bump("interpolate", panel);
    return {
      svgs: Array.from({ length: req.steps }, (_, i) => `M 0 0 L 1 1 Z ~${i}`),
      viewbox: this.viewbox,
    };
  }
}
