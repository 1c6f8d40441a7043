import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts", "tests/**/*.test.tsx"],
    globalSetup: ["tests/globalSetup.ts"],
    testTimeout: 120_000,
    hookTimeout: 300_000,
  },
});
