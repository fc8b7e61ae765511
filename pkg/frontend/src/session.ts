import { ApiError } from "./api";
import type {
  Candidate,
  ClaimPayload,
  ModificationStats,
  QueueEntry,
  QueuePayload,
  ReviewRecord,
  ReviewResult,
  ReviewSubmission,
  Verdict,
} from "./types";

// The slice of the API client the session depends on; tests stub this.
export type SessionApi = {
  fetchQueue(): Promise<QueuePayload>;
  fetchModificationStats(): Promise<ModificationStats>;
  claim(annotatorId: string): Promise<ClaimPayload>;
  submitReview(candidateId: string, body: ReviewSubmission): Promise<ReviewResult>;
};

export type SessionState = {
  phase: "queue" | "reviewing";
  busy: boolean;
  error: string | null;
  notice: string | null;
  queue: QueuePayload | null;
  stats: ModificationStats | null;
  entry: QueueEntry | null;
  candidate: Candidate | null;
  originalQuestion: string;
  originalSolution: string;
  questionBuffer: string;
  solutionBuffer: string;
  verdict: Verdict | null;
  notes: string;
  lastRecord: ReviewRecord | null;
  alreadyReviewed: boolean;
};

export function initialState(): SessionState {
  return {
    phase: "queue",
    busy: false,
    error: null,
    notice: null,
    queue: null,
    stats: null,
    entry: null,
    candidate: null,
    originalQuestion: "",
    originalSolution: "",
    questionBuffer: "",
    solutionBuffer: "",
    verdict: null,
    notes: "",
    lastRecord: null,
    alreadyReviewed: false,
  };
}

export function questionDirty(state: SessionState): boolean {
  return (
    state.phase === "reviewing" &&
    state.questionBuffer !== state.originalQuestion
  );
}

export function solutionDirty(state: SessionState): boolean {
  return (
    state.phase === "reviewing" &&
    state.solutionBuffer !== state.originalSolution
  );
}

export function canSubmit(state: SessionState): boolean {
  return (
    state.phase === "reviewing" &&
    state.verdict !== null &&
    !state.busy &&
    !state.alreadyReviewed
  );
}

export function leaseSecondsLeft(
  claimedAt: number | null,
  leaseMinutes: number,
  nowSeconds: number
): number | null {
  if (claimedAt === null) {
    return null;
  }
  return claimedAt + leaseMinutes * 60 - nowSeconds;
}

function describeFailure(err: unknown): string {
  return err instanceof Error ? err.message : String(err);
}

export type SessionConfig = {
  annotatorId: string;
  leaseMinutes?: number;
  now?: () => number;
};

export class ReviewSession {
  private state: SessionState = initialState();
  private listeners = new Set<() => void>();
  private readonly leaseMinutes: number;
  private readonly now: () => number;

  constructor(
    private readonly api: SessionApi,
    private readonly config: SessionConfig
  ) {
    this.leaseMinutes = config.leaseMinutes ?? 60;
    this.now = config.now ?? (() => Date.now() / 1000);
  }

  getState = (): SessionState => this.state;

  subscribe = (listener: () => void): (() => void) => {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  };

  private set(patch: Partial<SessionState>): void {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) {
      listener();
    }
  }

  async refreshQueue(): Promise<void> {
    this.set({ busy: true, error: null });
    try {
      const [queue, stats] = await Promise.all([
        this.api.fetchQueue(),
        this.api.fetchModificationStats(),
      ]);
      this.set({ busy: false, queue, stats });
    } catch (err) {
      this.set({ busy: false, error: describeFailure(err) });
    }
  }

  async claimNext(): Promise<void> {
    if (this.state.busy) {
      return;
    }
    this.set({ busy: true, error: null, notice: null });
    let got: ClaimPayload;
    try {
      got = await this.api.claim(this.config.annotatorId);
    } catch (err) {
      this.set({ busy: false, error: describeFailure(err) });
      return;
    }
    if (got.entry === null || got.candidate === null) {
      this.set({ busy: false, notice: "nothing left to claim" });
      await this.refreshQueue();
      return;
    }
    this.set({
      busy: false,
      phase: "reviewing",
      entry: got.entry,
      candidate: got.candidate,
      originalQuestion: got.candidate.question,
      originalSolution: got.candidate.final_solution,
      questionBuffer: got.candidate.question,
      solutionBuffer: got.candidate.final_solution,
      verdict: null,
      notes: "",
      lastRecord: null,
      alreadyReviewed: false,
    });
  }

  editQuestion(text: string): void {
    if (this.state.phase === "reviewing") {
      this.set({ questionBuffer: text });
    }
  }

  editSolution(text: string): void {
    if (this.state.phase === "reviewing") {
      this.set({ solutionBuffer: text });
    }
  }

  chooseVerdict(verdict: Verdict): void {
    if (this.state.phase === "reviewing") {
      this.set({ verdict });
    }
  }

  editNotes(text: string): void {
    if (this.state.phase === "reviewing") {
      this.set({ notes: text });
    }
  }

  async submit(): Promise<boolean> {
    const state = this.state;
    if (!canSubmit(state) || state.candidate === null) {
      return false;
    }
    // Send a buffer only when it was actually edited; the service derives
    // the modification flags from what arrives.
    const body: ReviewSubmission = {
      annotator_id: this.config.annotatorId,
      verdict: state.verdict as Verdict,
    };
    if (questionDirty(state)) {
      body.question = state.questionBuffer;
    }
    if (solutionDirty(state)) {
      body.solution = state.solutionBuffer;
    }
    this.set({ busy: true, error: null });
    try {
      const result = await this.api.submitReview(
        state.candidate.candidate_id,
        body
      );
      this.set({
        busy: false,
        phase: "queue",
        entry: null,
        candidate: null,
        originalQuestion: "",
        originalSolution: "",
        questionBuffer: "",
        solutionBuffer: "",
        verdict: null,
        notes: "",
        lastRecord: result.record,
      });
      await this.refreshQueue();
      return true;
    } catch (err) {
      // Buffers stay untouched so a failed submit never loses edits.
      const duplicate =
        err instanceof ApiError &&
        err.status === 409 &&
        err.message.includes("already reviewed");
      this.set({
        busy: false,
        error: describeFailure(err),
        alreadyReviewed: duplicate,
      });
      return false;
    }
  }

  abandonClaim(): void {
    // Client-side only: the service reclaims the entry when the lease lapses.
    this.set({
      phase: "queue",
      entry: null,
      candidate: null,
      originalQuestion: "",
      originalSolution: "",
      questionBuffer: "",
      solutionBuffer: "",
      verdict: null,
      notes: "",
      alreadyReviewed: false,
    });
    void this.refreshQueue();
  }

  hasUnsavedEdits(): boolean {
    return (
      this.state.phase === "reviewing" &&
      (questionDirty(this.state) ||
        solutionDirty(this.state) ||
        this.state.notes !== "")
    );
  }

  leaseLeft(nowSeconds?: number): number | null {
    if (this.state.entry === null) {
      return null;
    }
    return leaseSecondsLeft(
      this.state.entry.claimed_at,
      this.leaseMinutes,
      nowSeconds ?? this.now()
    );
  }
}
