import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "jsdom",
    globalSetup: ["tests/global-setup.ts"],
    // One shared server; serial files keep its SQLite writes uncontended.
    fileParallelism: false,
    testTimeout: 30000,
    hookTimeout: 60000,
  },
});
