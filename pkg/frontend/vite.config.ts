import { defineConfig } from "vitest/config";
import react from "@vitejs/plugin-react";

export default defineConfig({
  plugins: [react()],
  server: {
    port: 5173,
    proxy: {
      // the review service; `skillweave review-serve` defaults to 8321
      "/api": "http://127.0.0.1:8321",
    },
  },
  test: {
    environment: "node",
    // the integration suite boots the real service as a subprocess
    testTimeout: 60_000,
    hookTimeout: 60_000,
  },
});
