import { spawn, spawnSync } from "node:child_process";
import { existsSync } from "node:fs";
import { fileURLToPath } from "node:url";
import path from "node:path";
import type { TestProject } from "vitest/node";

// Boots a service over a quick-trained bundle for the smoke tests. Set
// GLYPHGEN_URL to point at an already-running service and skip all of this;
// the bundle itself is cached across runs.
const PORT = 8912;
const BUNDLE = process.env.GLYPHGEN_BUNDLE ?? "/tmp/glyphgen_ui_bundle";
const REPO_ROOT = path.resolve(path.dirname(fileURLToPath(import.meta.url)), "..", "..");

async function healthy(url: string): Promise<boolean> {
  try {
    const res = await fetch(`${url}/health`, { signal: AbortSignal.timeout(2000) });
    return res.ok;
  } catch {
    return false;
  }
}

async function waitHealthy(url: string, timeoutMs: number): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    if (await healthy(url)) return;
    await new Promise((r) => setTimeout(r, 500));
  }
  throw new Error(`service at ${url} not healthy after ${timeoutMs}ms`);
}

export default async function setup(project: TestProject): Promise<(() => void) | void> {
  const external = process.env.GLYPHGEN_URL;
  if (external) {
    if (!(await healthy(external))) {
      throw new Error(`GLYPHGEN_URL=${external} is not answering /health`);
    }
    project.provide("serviceUrl", external);
    return;
  }

  if (!existsSync(path.join(BUNDLE, "bundle.json"))) {
    console.log(`building quick bundle at ${BUNDLE} (about a minute, cached after)`);
    const build = spawnSync(
      "python3",
      [path.join(REPO_ROOT, "scripts", "make_toy_bundle.py"), "--out", BUNDLE, "--quick"],
      { cwd: REPO_ROOT, stdio: "inherit", timeout: 600_000 },
    );
    if (build.status !== 0) {
      throw new Error(`make_toy_bundle.py failed with status ${build.status}`);
    }
  }

  const url = `http://127.0.0.1:${PORT}`;
  const child = spawn("glyphgen", ["serve", "--bundle", BUNDLE, "--port", String(PORT)], {
    stdio: "ignore",
  });
  child.on("error", (err) => {
    throw new Error(`failed to start glyphgen serve: ${err.message}`);
  });
  await waitHealthy(url, 60_000);
  project.provide("serviceUrl", url);
  return () => {
    child.kill("SIGTERM");
  };
}

declare module "vitest" {
  export interface ProvidedContext {
    serviceUrl: string;
  }
}
