import { describe, expect, it } from "vitest";
import { NetworkError, ServiceError } from "../src/api.js";
import { SessionStore, clampAlpha } from "../src/session.js";
import { FakeApi } from "./fake.js";

const SQUARE = "M 0.2 0.2 L 0.8 0.2 L 0.8 0.8 L 0.2 0.8 Z";

function makeStore() {
  const api = new FakeApi();
  return { api, store: new SessionStore(api, { seed: 7, n: 2 }) };
}

describe("z-presence invariant", () => {
  it("starts with no z and gains one only after a glyph encodes", async () => {
    const { store } = makeStore();
    expect(store.getState().zCurrent).toBeNull();
    await store.addGlyph("a", SQUARE);
    expect(store.getState().supplied).toHaveLength(1);
    expect(store.getState().zCurrent).not.toBeNull();
  });

  it("drops z and the fontset when the last glyph is removed", async () => {
    const { store } = makeStore();
    await store.addGlyph("a", SQUARE);
    await store.propagate();
    expect(store.getState().fontset).toHaveLength(62);
    store.removeGlyph(0);
    expect(store.getState().supplied).toHaveLength(0);
    expect(store.getState().zCurrent).toBeNull();
    expect(store.getState().fontset).toBeNull();
  });

  it("rejects unknown characters without calling the service", async () => {
    const { api, store } = makeStore();
    await store.addGlyph("λ", SQUARE);
    expect(api.countOf("encode")).toBe(0);
    expect(store.getState().inline.input).toMatch(/UnknownLabel/);
    expect(store.getState().zCurrent).toBeNull();
  });
});

describe("slider behavior", () => {
  it("clamps alphas into [-2, 2]", () => {
    expect(clampAlpha(5)).toBe(2);
    expect(clampAlpha(-7)).toBe(-2);
    expect(clampAlpha(0.5)).toBe(0.5);
    const { store } = makeStore();
    store.setSlider("bold", 9);
    expect(store.getState().sliders.bold).toBe(2);
  });

  it("issues one request per release, none while dragging", async () => {
    const { api, store } = makeStore();
    await store.addGlyph("a", SQUARE);
    for (let i = 0; i < 10; i++) store.setSlider("bold", i / 10);
    expect(api.countOf("analogy")).toBe(0);
    await store.releaseSlider("bold", 0.7);
    expect(api.countOf("analogy")).toBe(1);
    expect(store.getState().conceptPreview?.alpha).toBe(0.7);
  });

  it("requires a propagated style before steering", async () => {
    const { api, store } = makeStore();
    await store.releaseSlider("bold", 1);
    expect(api.countOf("analogy")).toBe(0);
    expect(store.getState().inline.concept).toMatch(/BadRequest/);
  });
});

describe("error routing", () => {
  it("puts 4xx reasons inline on the originating panel", async () => {
    const { api, store } = makeStore();
    api.failNext = new ServiceError(400, "UnsupportedCommand", "arc at offset 6");
    await store.addGlyph("a", SQUARE);
    expect(store.getState().inline.input).toBe("UnsupportedCommand: arc at offset 6");
    expect(store.getState().banner).toBeNull();
    expect(store.getState().supplied).toHaveLength(0);
    store.dismissInline("input");
    expect(store.getState().inline.input).toBeUndefined();
  });

  it("puts network failures in the banner and retries the failed action", async () => {
    const { api, store } = makeStore();
    api.failNext = new NetworkError(new TypeError("fetch failed"));
    await store.addGlyph("a", SQUARE);
    expect(store.getState().banner).toMatch(/fetch failed/);
    expect(store.getState().supplied).toHaveLength(0);
    await store.retry();
    expect(store.getState().banner).toBeNull();
    expect(store.getState().supplied).toHaveLength(1);
  });

  it("swallows aborted requests without touching state", async () => {
    const { api, store } = makeStore();
    api.failNext = new DOMException("aborted", "AbortError");
    await store.addGlyph("a", SQUARE);
    expect(store.getState().banner).toBeNull();
    expect(store.getState().inline.input).toBeUndefined();
    expect(store.getState().supplied).toHaveLength(0);
  });
});

describe("interpolation endpoints", () => {
  it("saves the current z under A and B and decodes the strip", async () => {
    const { store } = makeStore();
    await store.addGlyph("a", SQUARE);
    store.saveEndpointA();
    await store.addGlyph("b", SQUARE + " M 0 0 L 0.1 0.1 Z");
    store.saveEndpointB();
    store.setInterpSteps(4);
    await store.runInterpolation();
    expect(store.getState().interpolation).toHaveLength(4);
  });

  it("refuses to interpolate without both endpoints", async () => {
    const { api, store } = makeStore();
    await store.addGlyph("a", SQUARE);
    store.saveEndpointA();
    await store.runInterpolation();
    expect(api.countOf("interpolate")).toBe(0);
    expect(store.getState().inline.interp).toMatch(/endpoints/);
  });
});

describe("session export and import", () => {
  it("round-trips the grid bytes and settings", async () => {
    const { store } = makeStore();
    await store.addGlyph("a", SQUARE);
    await store.propagate();
    store.setSlider("bold", 1.5);
    const dump = store.exportSession();

    const { store: fresh } = makeStore();
    fresh.importSession(dump);
    const a = store.getState();
    const b = fresh.getState();
    expect(b.fontset).toStrictEqual(a.fontset);
    expect(b.supplied).toStrictEqual(a.supplied);
    expect(b.zCurrent).toStrictEqual(a.zCurrent);
    expect(b.seed).toBe(a.seed);
    expect(b.sliders.bold).toBe(1.5);
  });

  it("clamps out-of-range sliders on import and rejects bad payloads", async () => {
    const { store } = makeStore();
    await store.addGlyph("a", SQUARE);
    const dump = JSON.parse(store.exportSession());
    dump.sliders = { bold: 99 };
    const { store: fresh } = makeStore();
    fresh.importSession(JSON.stringify(dump));
    expect(fresh.getState().sliders.bold).toBe(2);
    expect(() => fresh.importSession('{"version": 2}')).toThrow();
    expect(() => fresh.importSession("not json")).toThrow();
  });

  it("never imports a z without supplied glyphs", async () => {
    const { store } = makeStore();
    await store.addGlyph("a", SQUARE);
    const dump = JSON.parse(store.exportSession());
    dump.supplied = [];
    const { store: fresh } = makeStore();
    fresh.importSession(JSON.stringify(dump));
    expect(fresh.getState().zCurrent).toBeNull();
  });
});

describe("concept baseline", () => {
  it("fetches the alpha=0 reference through the same request shape", async () => {
    const { store } = makeStore();
    await store.loadConcepts();
    await store.addGlyph("a", SQUARE);
    await store.setConceptChar("b");
    const baseline = store.getState().conceptBaseline;
    expect(baseline).not.toBeNull();
    await store.releaseSlider("bold", 0);
    expect(store.getState().conceptPreview?.svg).toBe(baseline);
  });
});
