import type {
  ClaimPayload,
  Candidate,
  ExportItem,
  ModelPassRate,
  ModificationStats,
  QueuePayload,
  ReviewResult,
  ReviewSubmission,
} from "./types";

export class ApiError extends Error {
  readonly status: number;

  constructor(message: string, status: number) {
    super(message);
    this.name = "ApiError";
    this.status = status;
  }
}

async function detailOf(res: Response): Promise<string> {
  const text = await res.text();
  try {
    const body: unknown = JSON.parse(text);
    if (typeof body === "object" && body !== null && "detail" in body) {
      const detail = (body as { detail: unknown }).detail;
      return typeof detail === "string" ? detail : JSON.stringify(detail);
    }
  } catch {
    // not JSON; fall through to the raw body
  }
  return text || `request failed with status ${res.status}`;
}

export class ReviewApi {
  constructor(private readonly baseUrl: string = "") {}

  private async requestJson<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await fetch(this.baseUrl + path, init);
    if (!res.ok) {
      throw new ApiError(await detailOf(res), res.status);
    }
    return (await res.json()) as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.requestJson<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  fetchQueue(): Promise<QueuePayload> {
    return this.requestJson<QueuePayload>("/api/queue");
  }

  claim(annotatorId: string): Promise<ClaimPayload> {
    return this.post<ClaimPayload>("/api/queue/claim", {
      annotator_id: annotatorId,
    });
  }

  fetchCandidate(candidateId: string): Promise<Candidate> {
    return this.requestJson<Candidate>(
      `/api/candidates/${encodeURIComponent(candidateId)}`
    );
  }

  submitReview(
    candidateId: string,
    body: ReviewSubmission
  ): Promise<ReviewResult> {
    return this.post<ReviewResult>(
      `/api/candidates/${encodeURIComponent(candidateId)}/review`,
      body
    );
  }

  fetchModificationStats(): Promise<ModificationStats> {
    return this.requestJson<ModificationStats>("/api/stats/modifications");
  }

  fetchModelPassRates(): Promise<Record<string, ModelPassRate>> {
    return this.requestJson<Record<string, ModelPassRate>>("/api/stats/models");
  }

  async fetchExport(verdicts: string = "good"): Promise<ExportItem[]> {
    const res = await fetch(
      `${this.baseUrl}/api/export?verdicts=${encodeURIComponent(verdicts)}`
    );
    if (!res.ok) {
      throw new ApiError(await detailOf(res), res.status);
    }
    const text = await res.text();
    return text
      .split("\n")
      .filter((line) => line.trim().length > 0)
      .map((line) => JSON.parse(line) as ExportItem);
  }
}
