import { beforeAll, describe, expect, inject, it } from "vitest";
import { createElement } from "react";
import { renderToStaticMarkup } from "react-dom/server";
import { ApiClient } from "../src/api.js";
import { SessionStore } from "../src/session.js";
import { App } from "../src/components/App.js";

// End-to-end against a live service over a quick-trained bundle: the full
// propagate flow, alpha=0 byte identity, and 4xx surfacing.

const SQUARE = "M 0.2 0.2 L 0.8 0.2 L 0.8 0.8 L 0.2 0.8 Z";
const ARC = "M 0 0 A 1 1 0 0 0 1 1 Z";

let client: ApiClient;

beforeAll(async () => {
  client = new ApiClient(inject("serviceUrl"));
  await client.health();
});

function makeStore() {
  return new SessionStore(client, { seed: 11, n: 3 });
}

describe("propagate flow", () => {
  it("fills all 62 cells with service bytes and renders them", async () => {
    const store = makeStore();
    await store.loadConcepts();
    expect(store.getState().concepts).toContain("bold");

    await store.addGlyph("0", SQUARE);
    expect(store.getState().zCurrent).not.toBeNull();
    await store.propagate();

    const { fontset, viewbox, inline, banner } = store.getState();
    expect(banner).toBeNull();
    expect(inline.grid).toBeUndefined();
    expect(fontset).toHaveLength(62);
    expect(viewbox).not.toBeNull();
    for (const cell of fontset ?? []) {
      expect(cell.svg.length).toBeGreaterThan(0);
      expect(Number.isFinite(cell.confidence)).toBe(true);
    }

    const html = renderToStaticMarkup(createElement(App, { store }));
    expect(html.match(/class="cell"/g)).toHaveLength(62);
    for (const cell of fontset ?? []) {
      expect(html).toContain(`d="${cell.svg}"`);
    }
  });

  it("re-propagates deterministically under a fixed seed", async () => {
    const store = makeStore();
    await store.addGlyph("0", SQUARE);
    await store.propagate();
    const first = (store.getState().fontset ?? []).map((c) => c.svg);
    await store.propagate();
    const second = (store.getState().fontset ?? []).map((c) => c.svg);
    expect(second).toStrictEqual(first);
  });

  it("changes the grid deterministically when a second glyph joins", async () => {
    const store = makeStore();
    await store.addGlyph("0", SQUARE);
    await store.propagate();
    const solo = (store.getState().fontset ?? []).map((c) => c.svg);
    await store.addGlyph("1", "M 0.3 0.1 L 0.7 0.1 L 0.7 0.9 L 0.3 0.9 Z");
    await store.propagate();
    const duo = (store.getState().fontset ?? []).map((c) => c.svg);
    expect(duo).not.toStrictEqual(solo);
    await store.propagate();
    expect((store.getState().fontset ?? []).map((c) => c.svg)).toStrictEqual(duo);
  });
});

describe("concept sliders", () => {
  it("reproduces the baseline byte-identically at alpha=0", async () => {
    const store = makeStore();
    await store.loadConcepts();
    await store.addGlyph("0", SQUARE);
    await store.propagate();
    await store.setConceptChar("0");

    const baseline = store.getState().conceptBaseline;
    expect(baseline).not.toBeNull();
    expect(baseline!.length).toBeGreaterThan(0);

    await store.releaseSlider("bold", 0);
    const preview = store.getState().conceptPreview;
    expect(preview?.svg).toBe(baseline);

    // and the rendered markup carries those exact bytes
    const html = renderToStaticMarkup(createElement(App, { store }));
    expect(html).toContain(`d="${baseline}"`);
  });

  it("decodes a different glyph at a strong alpha", async () => {
    const store = makeStore();
    await store.loadConcepts();
    await store.addGlyph("0", SQUARE);
    await store.propagate();
    await store.setConceptChar("0");
    const baseline = store.getState().conceptBaseline;
    await store.releaseSlider("bold", 2);
    expect(store.getState().conceptPreview?.svg).not.toBe(baseline);
  });
});

describe("validation surfacing", () => {
  it("shows a 4xx from a malformed glyph as an inline message", async () => {
    const store = makeStore();
    await store.addGlyph("0", ARC);
    const { inline, banner, supplied } = store.getState();
    expect(banner).toBeNull();
    expect(supplied).toHaveLength(0);
    expect(inline.input).toMatch(/UnsupportedCommand/);

    const html = renderToStaticMarkup(createElement(App, { store }));
    expect(html).toContain("inline-error");
    expect(html).toContain("UnsupportedCommand");
  });

  it("routes unreachable hosts to the retry banner", async () => {
    const dead = new SessionStore(new ApiClient("http://127.0.0.1:9"), { seed: 1 });
    await dead.addGlyph("0", SQUARE);
    expect(dead.getState().banner).not.toBeNull();
    const html = renderToStaticMarkup(createElement(App, { store: dead }));
    expect(html).toContain(">Retry</button>");
  });
});

describe("interpolation", () => {
  it("returns one decode per step between two saved styles", async () => {
    const store = makeStore();
    await store.addGlyph("0", SQUARE);
    await store.propagate();
    store.saveEndpointA();
    await store.addGlyph("1", "M 0.3 0.1 L 0.7 0.1 L 0.7 0.9 L 0.3 0.9 Z");
    await store.propagate();
    store.saveEndpointB();
    store.setInterpSteps(4);
    await store.runInterpolation();
    const strip = store.getState().interpolation;
    expect(strip).toHaveLength(4);
    for (const d of strip ?? []) expect(d.length).toBeGreaterThan(0);
  });
});

describe("session round trip", () => {
  it("import reproduces the identical grid under the same server seed", async () => {
    const store = makeStore();
    await store.addGlyph("0", SQUARE);
    await store.propagate();
    const grid = (store.getState().fontset ?? []).map((c) => c.svg);
    const dump = store.exportSession();

    const fresh = makeStore();
    fresh.importSession(dump);
    expect((fresh.getState().fontset ?? []).map((c) => c.svg)).toStrictEqual(grid);

    await fresh.propagate();
    expect((fresh.getState().fontset ?? []).map((c) => c.svg)).toStrictEqual(grid);
  });
});
