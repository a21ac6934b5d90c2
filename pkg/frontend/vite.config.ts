import react from "@vitejs/plugin-react";
import { defineConfig } from "vitest/config";

// The bundle is mounted by the manager under /ui, so every asset reference
// must stay relative to index.html rather than the site root.
export default defineConfig({
  plugins: [react()],
  base: "./",
  build: {
    outDir: "dist",
  },
  test: {
    environment: "jsdom",
    setupFiles: ["src/setupTests.ts"],
    include: ["src/__tests__/**/*.test.{ts,tsx}"],
  },
});
