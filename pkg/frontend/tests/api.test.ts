import { afterEach, describe, expect, it, vi } from "vitest";
import { ApiError, ReviewApi } from "../src/api";

type Recorded = { url: string; init?: RequestInit };

function stubFetch(reply: Response): Recorded[] {
  const recorded: Recorded[] = [];
  vi.stubGlobal("fetch", async (url: string, init?: RequestInit) => {
    recorded.push({ url, init });
    return reply;
  });
  return recorded;
}

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("request shapes", () => {
  it("fetches the queue from /api/queue", async () => {
    const recorded = stubFetch(jsonResponse({ entries: [], unclaimed: 0 }));
    const queue = await new ReviewApi().fetchQueue();
    expect(recorded[0].url).toBe("/api/queue");
    expect(queue.unclaimed).toBe(0);
  });

  it("prefixes a configured base url", async () => {
    const recorded = stubFetch(jsonResponse({ entries: [], unclaimed: 0 }));
    await new ReviewApi("http://127.0.0.1:9999").fetchQueue();
    expect(recorded[0].url).toBe("http://127.0.0.1:9999/api/queue");
  });

  it("claims with a JSON annotator body", async () => {
    const recorded = stubFetch(jsonResponse({ entry: null, candidate: null }));
    await new ReviewApi().claim("ann");
    const { url, init } = recorded[0];
    expect(url).toBe("/api/queue/claim");
    expect(init?.method).toBe("POST");
    expect(JSON.parse(String(init?.body))).toEqual({ annotator_id: "ann" });
  });

  it("escapes candidate ids in paths", async () => {
    const recorded = stubFetch(jsonResponse({}));
    await new ReviewApi().fetchCandidate("run/0001");
    expect(recorded[0].url).toBe("/api/candidates/run%2F0001");
  });

  it("posts review submissions as-is", async () => {
    const recorded = stubFetch(
      jsonResponse({ record: {}, state: "reviewed" })
    );
    await new ReviewApi().submitReview("run-0001", {
      annotator_id: "ann",
      verdict: "good",
      question: "edited",
    });
    const body = JSON.parse(String(recorded[0].init?.body));
    expect(body).toEqual({
      annotator_id: "ann",
      verdict: "good",
      question: "edited",
    });
  });
});

describe("error handling", () => {
  it("raises ApiError with the service detail", async () => {
    stubFetch(jsonResponse({ detail: "candidate x already reviewed" }, 409));
    const err = await new ReviewApi()
      .submitReview("x", { annotator_id: "a", verdict: "good" })
      .catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).status).toBe(409);
    expect((err as ApiError).message).toContain("already reviewed");
  });

  it("stringifies structured validation details", async () => {
    stubFetch(
      jsonResponse({ detail: [{ loc: ["body", "verdict"], msg: "bad" }] }, 422)
    );
    const err = await new ReviewApi().claim("").catch((e: unknown) => e);
    expect((err as ApiError).message).toContain("verdict");
  });

  it("falls back to the raw body for non-JSON errors", async () => {
    stubFetch(new Response("gateway timeout", { status: 504 }));
    const err = await new ReviewApi().fetchQueue().catch((e: unknown) => e);
    expect((err as ApiError).message).toBe("gateway timeout");
  });

  it("lets network failures propagate untouched", async () => {
    vi.stubGlobal("fetch", async () => {
      throw new TypeError("fetch failed");
    });
    await expect(new ReviewApi().fetchQueue()).rejects.toThrow("fetch failed");
  });
});

describe("export", () => {
  it("parses NDJSON lines and skips blanks", async () => {
    const body =
      JSON.stringify({ id: "a", question: "q1" }) +
      "\n\n" +
      JSON.stringify({ id: "b", question: "q2" }) +
      "\n";
    const recorded = stubFetch(new Response(body, { status: 200 }));
    const items = await new ReviewApi().fetchExport("good,too_easy");
    expect(recorded[0].url).toBe("/api/export?verdicts=good%2Ctoo_easy");
    expect(items.map((i) => i.id)).toEqual(["a", "b"]);
  });

  it("surfaces unknown-verdict rejections", async () => {
    stubFetch(jsonResponse({ detail: "unknown verdicts: bogus" }, 400));
    const err = await new ReviewApi()
      .fetchExport("bogus")
      .catch((e: unknown) => e);
    expect((err as ApiError).status).toBe(400);
  });
});
