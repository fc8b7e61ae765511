// End-to-end against the real service: an annotator session claims the
// oldest queue item, edits the question, submits a good verdict, and the
// export reflects the edit; concurrent claims admit exactly one winner.

import { afterEach, describe, expect, it } from "vitest";
import { ApiError, ReviewApi } from "../src/api";
import { ReviewSession } from "../src/session";
import { freshDir, startService, writeSurvivorLog, type Service } from "./harness";

let service: Service | null = null;

afterEach(async () => {
  if (service) {
    await service.stop();
    service = null;
  }
});

describe("review round trip", () => {
  it("claim oldest, edit, submit good, export carries the edit", async () => {
    const { path, ids } = writeSurvivorLog(freshDir(), 3);
    service = await startService(path);
    const api = new ReviewApi(service.baseUrl);
    const session = new ReviewSession(api, { annotatorId: "casey" });

    await session.refreshQueue();
    expect(session.getState().queue?.unclaimed).toBe(3);

    await session.claimNext();
    const state = session.getState();
    expect(state.phase).toBe("reviewing");
    expect(state.candidate?.candidate_id).toBe(ids[0]);

    const edited = state.originalQuestion + " State the modulus explicitly.";
    session.editQuestion(edited);
    session.chooseVerdict("good");
    expect(await session.submit()).toBe(true);

    const record = session.getState().lastRecord;
    expect(record?.question_modified).toBe(true);
    expect(record?.solution_modified).toBe(false);
    expect(session.getState().queue?.unclaimed).toBe(2);

    const items = await api.fetchExport("good");
    expect(items).toHaveLength(1);
    expect(items[0].id).toBe(ids[0]);
    expect(items[0].question).toBe(edited);
    expect(items[0].question_modified).toBe(true);
    expect(items[0].solution).toBe("Original solution 0.");
    expect(items[0].generator_model).toBe("gpt-4-turbo");
  });

  it("rejects a duplicate submit for the same candidate", async () => {
    const { path, ids } = writeSurvivorLog(freshDir(), 1);
    service = await startService(path);
    const api = new ReviewApi(service.baseUrl);

    const claim = await api.claim("casey");
    expect(claim.entry?.candidate_id).toBe(ids[0]);
    await api.submitReview(ids[0], {
      annotator_id: "casey",
      verdict: "too_easy",
    });
    const err = await api
      .submitReview(ids[0], { annotator_id: "casey", verdict: "good" })
      .catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).status).toBe(409);
    expect((err as ApiError).message).toContain("already reviewed");
  });
});

describe("claim contention", () => {
  it("a single entry admits exactly one of four concurrent sessions", async () => {
    const { path, ids } = writeSurvivorLog(freshDir(), 1);
    service = await startService(path);

    const claims = await Promise.all(
      ["a", "b", "c", "d"].map((who) =>
        new ReviewApi(service!.baseUrl).claim(who)
      )
    );
    const winners = claims.filter((c) => c.entry !== null);
    expect(winners).toHaveLength(1);
    expect(winners[0].entry?.candidate_id).toBe(ids[0]);
    expect(claims.filter((c) => c.entry === null)).toHaveLength(3);
  });

  it("parallel claims over a full queue hand out distinct candidates", async () => {
    const { path } = writeSurvivorLog(freshDir(), 6);
    service = await startService(path);

    const claims = await Promise.all(
      Array.from({ length: 6 }, (_, i) =>
        new ReviewApi(service!.baseUrl).claim(`ann-${i}`)
      )
    );
    const got = claims
      .map((c) => c.entry?.candidate_id)
      .filter((id): id is string => id !== undefined);
    expect(got).toHaveLength(6);
    expect(new Set(got).size).toBe(6);
  });
});
