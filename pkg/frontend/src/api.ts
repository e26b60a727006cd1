// Typed client for the study service. Non-success responses carry exactly
// one error envelope, which is surfaced verbatim as an ApiError.

import type {
  Annotation,
  ApiErrorBody,
  Case,
  DischargeReport,
  LengthReport,
  OutcomeEntry,
  Page,
  RareActionReport,
  Rollout,
  StateInfo,
  StudyManifest,
  Terminal,
  TerminationReport,
  Trajectory,
  TreatmentEntry,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly code: string,
    message: string,
    readonly status: number,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export type ReportName = "length" | "termination" | "rare_action" | "discharge";

export interface ReportPayloads {
  length: LengthReport;
  termination: TerminationReport;
  rare_action: RareActionReport;
  discharge: DischargeReport;
}

async function parseError(response: Response): Promise<never> {
  let code = "internal";
  let message = `HTTP ${response.status}`;
  try {
    const body = (await response.json()) as ApiErrorBody;
    if (body.error) {
      code = body.error.code;
      message = body.error.message;
    }
  } catch {
    // non-JSON error body: keep the HTTP status message
  }
  throw new ApiError(code, message, response.status);
}

export class StudyClient {
  constructor(
    readonly baseUrl: string = "",
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private async get<T>(path: string): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`);
    if (!response.ok) await parseError(response);
    return (await response.json()) as T;
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!response.ok) await parseError(response);
    return (await response.json()) as T;
  }

  study(): Promise<StudyManifest> {
    return this.get("/api/study");
  }

  treatmentRanking(limit = 50, offset = 0): Promise<Page<TreatmentEntry>> {
    return this.get(`/api/heuristics/treatment?limit=${limit}&offset=${offset}`);
  }

  outcomeRanking(
    limit = 50,
    offset = 0,
  ): Promise<Page<OutcomeEntry> & { skipped_trajectories: number }> {
    return this.get(`/api/heuristics/outcome?limit=${limit}&offset=${offset}`);
  }

  trajectory(id: string): Promise<Trajectory> {
    return this.get(`/api/trajectories/${encodeURIComponent(id)}`);
  }

  state(id: number): Promise<StateInfo> {
    return this.get(`/api/states/${id}`);
  }

  cases(): Promise<{ cases: Case[] }> {
    return this.get("/api/cases");
  }

  caseById(id: string): Promise<Case> {
    return this.get(`/api/cases/${encodeURIComponent(id)}`);
  }

  createCase(
    kind: "treatment" | "outcome",
    anchor: { trajectory_id: string; step_index: number },
    options: { n_rollouts?: number; seed?: number } = {},
  ): Promise<Case> {
    return this.post("/api/cases", { kind, anchor, ...options });
  }

  addRollouts(
    caseId: string,
    n: number,
    seed: number,
  ): Promise<{ case_id: string; rollouts: Rollout[]; total_rollouts: number }> {
    return this.post(`/api/cases/${encodeURIComponent(caseId)}/rollouts`, { n, seed });
  }

  annotate(
    caseId: string,
    author: string,
    text: string,
    verdict: Annotation["verdict"],
  ): Promise<Annotation> {
    return this.post(`/api/cases/${encodeURIComponent(caseId)}/annotations`, {
      author,
      text,
      verdict,
    });
  }

  report<N extends ReportName>(name: N): Promise<ReportPayloads[N]> {
    return this.get(`/api/reports/${name}`);
  }
}

export const TERMINAL_LABELS: Record<Terminal, string> = {
  SURV: "90-day survival",
  DEATH: "90-day mortality",
  TRUNCATED: "maximum length reached",
  DEAD_END: "no data for chosen action",
};
