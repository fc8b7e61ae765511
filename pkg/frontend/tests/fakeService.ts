// In-memory stand-in for the review service, wired in as a fetch stub so
// component tests can drive the full claim/edit/submit flow without a
// network or a subprocess. Mirrors the real endpoints' shapes and the
// server-side rule that a buffer equal to the original is not a modification.

import type { Candidate, Verdict } from "../src/types";

type ReviewRow = {
  verdict: Verdict;
  annotator_id: string;
  question: string;
  solution: string;
  question_modified: boolean;
  solution_modified: boolean;
  ts: number;
};

export type FakeServer = {
  order: string[];
  candidates: Map<string, Candidate>;
  claims: Map<string, { by: string; at: number }>;
  reviews: Map<string, ReviewRow>;
  failNext: number;
};

export function makeCandidate(id: string, i: number): Candidate {
  return {
    candidate_id: id,
    state: "ready_for_review",
    skills: ["fraction_arithmetic", "modular_arithmetic"],
    generator_model: "gpt-4-turbo",
    question: `Original question ${i}: what is $${i}/7$ as a residue?`,
    draft_solution: `Draft solution ${i}.`,
    attempted_solution: `Unaided attempt ${i}.`,
    final_solution: `Original solution ${i}.`,
    final_answer: String(i % 7),
    validation_votes: [true, true, true, false],
    num_final_traces: 4,
    review_verdict: "",
  };
}

export function makeServer(count: number): FakeServer {
  const server: FakeServer = {
    order: [],
    candidates: new Map(),
    claims: new Map(),
    reviews: new Map(),
    failNext: 0,
  };
  for (let i = 0; i < count; i += 1) {
    const id = `fake-${String(i).padStart(4, "0")}`;
    server.order.push(id);
    server.candidates.set(id, makeCandidate(id, i));
  }
  return server;
}

function reply(status: number, body: unknown, raw = false): Response {
  const text = raw ? String(body) : JSON.stringify(body);
  return {
    ok: status >= 200 && status < 300,
    status,
    text: async () => text,
    json: async () => JSON.parse(text),
  } as unknown as Response;
}

function queuePayload(server: FakeServer) {
  const entries = server.order
    .filter((id) => !server.reviews.has(id))
    .map((id) => {
      const claim = server.claims.get(id);
      return {
        candidate_id: id,
        claimed_by: claim?.by ?? null,
        claimed_at: claim?.at ?? null,
      };
    });
  return {
    entries,
    unclaimed: entries.filter((e) => e.claimed_by === null).length,
  };
}

function statsPayload(server: FakeServer) {
  const rows = [...server.reviews.values()];
  return {
    modified_questions: rows.filter((r) => r.question_modified).length,
    modified_solutions: rows.filter((r) => r.solution_modified).length,
    modified_either: rows.filter(
      (r) => r.question_modified || r.solution_modified
    ).length,
    total: rows.length,
  };
}

export function serverFetch(server: FakeServer): typeof fetch {
  return (async (input: RequestInfo | URL, init?: RequestInit) => {
    if (server.failNext > 0) {
      server.failNext -= 1;
      throw new TypeError("fetch failed");
    }
    const url = String(input);
    const path = url.replace(/^https?:\/\/[^/]+/, "");
    const method = init?.method ?? "GET";
    const body = init?.body ? JSON.parse(String(init.body)) : null;

    if (method === "GET" && path === "/api/queue") {
      return reply(200, queuePayload(server));
    }
    if (method === "POST" && path === "/api/queue/claim") {
      const annotator = body?.annotator_id;
      if (!annotator) {
        return reply(422, { detail: "annotator_id must be nonempty" });
      }
      const next = server.order.find(
        (id) => !server.reviews.has(id) && !server.claims.has(id)
      );
      if (!next) {
        return reply(200, { entry: null, candidate: null });
      }
      const at = Date.now() / 1000;
      server.claims.set(next, { by: annotator, at });
      return reply(200, {
        entry: { candidate_id: next, claimed_by: annotator, claimed_at: at },
        candidate: server.candidates.get(next),
      });
    }
    const review = path.match(/^\/api\/candidates\/([^/]+)\/review$/);
    if (method === "POST" && review) {
      const id = decodeURIComponent(review[1]);
      const candidate = server.candidates.get(id);
      if (!candidate) {
        return reply(404, { detail: `unknown candidate ${id}` });
      }
      if (server.reviews.has(id)) {
        return reply(409, { detail: `candidate ${id} already reviewed` });
      }
      const question = body.question ?? candidate.question;
      const solution = body.solution ?? candidate.final_solution;
      const row: ReviewRow = {
        verdict: body.verdict,
        annotator_id: body.annotator_id,
        question,
        solution,
        question_modified: question !== candidate.question,
        solution_modified: solution !== candidate.final_solution,
        ts: Date.now() / 1000,
      };
      server.reviews.set(id, row);
      server.claims.delete(id);
      return reply(200, {
        record: {
          candidate_id: id,
          verdict: row.verdict,
          annotator_id: row.annotator_id,
          question_modified: row.question_modified,
          solution_modified: row.solution_modified,
          ts: row.ts,
        },
        state: "reviewed",
      });
    }
    const detail = path.match(/^\/api\/candidates\/([^/]+)$/);
    if (method === "GET" && detail) {
      const candidate = server.candidates.get(decodeURIComponent(detail[1]));
      return candidate
        ? reply(200, candidate)
        : reply(404, { detail: "unknown candidate" });
    }
    if (method === "GET" && path === "/api/stats/modifications") {
      return reply(200, statsPayload(server));
    }
    if (method === "GET" && path.startsWith("/api/export")) {
      const wanted = new Set(
        (new URLSearchParams(path.split("?")[1] ?? "").get("verdicts") ?? "good")
          .split(",")
          .filter(Boolean)
      );
      const lines = server.order
        .filter((id) => wanted.has(server.reviews.get(id)?.verdict ?? ""))
        .map((id) => {
          const candidate = server.candidates.get(id)!;
          const row = server.reviews.get(id)!;
          return JSON.stringify({
            id,
            question: row.question,
            solution: row.solution,
            answer: candidate.final_answer,
            skills: candidate.skills,
            generator_model: candidate.generator_model,
            question_modified: row.question_modified,
            solution_modified: row.solution_modified,
          });
        });
      return reply(200, lines.map((l) => l + "\n").join(""), true);
    }
    return reply(404, { detail: `no route for ${method} ${path}` });
  }) as typeof fetch;
}
