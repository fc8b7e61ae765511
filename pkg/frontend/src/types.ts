export type Verdict = "good" | "too_easy" | "wrong";

export const VERDICTS: readonly Verdict[] = ["good", "too_easy", "wrong"];

export type QueueEntry = {
  candidate_id: string;
  claimed_by: string | null;
  claimed_at: number | null;
};

export type QueuePayload = {
  entries: QueueEntry[];
  unclaimed: number;
};

export type Candidate = {
  candidate_id: string;
  state: string | null;
  skills: string[];
  generator_model: string;
  question: string;
  draft_solution: string;
  attempted_solution: string;
  final_solution: string;
  final_answer: string;
  validation_votes: boolean[];
  num_final_traces: number;
  review_verdict: string;
};

export type ClaimPayload = {
  entry: QueueEntry | null;
  candidate: Candidate | null;
};

export type ModificationStats = {
  modified_questions: number;
  modified_solutions: number;
  modified_either: number;
  total: number;
};

export type ModelPassRate = {
  annotated: number;
  passed: number;
  rate_pct: number;
};

export type ReviewSubmission = {
  annotator_id: string;
  verdict: Verdict;
  question?: string;
  solution?: string;
};

export type ReviewRecord = {
  candidate_id: string;
  verdict: Verdict;
  annotator_id: string;
  question_modified: boolean;
  solution_modified: boolean;
  ts: number;
};

export type ReviewResult = {
  record: ReviewRecord;
  state: string | null;
};

export type ExportItem = {
  id: string;
  question: string;
  solution: string;
  answer: string;
  skills: string[];
  generator_model: string;
  question_modified: boolean;
  solution_modified: boolean;
};
