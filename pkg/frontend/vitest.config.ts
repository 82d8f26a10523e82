import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "jsdom",
    // the end-to-end test boots the real HTTP service once per file
    testTimeout: 30_000,
    hookTimeout: 60_000,
  },
});
