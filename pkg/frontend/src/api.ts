// Typed client for the evaluation service HTTP API. Every call goes
// through the JSON endpoints; errors carry the server's stable codes.

export interface Panel {
  position: number;
  svg: string;
}

export interface Progress {
  completed: number;
  total: number;
}

export type NextStep =
  | { done: true; completed: number; total: number }
  | {
      done: false;
      lineup_id: string;
      m: number;
      token: string;
      panels: Panel[];
      progress: Progress;
    };

export interface SubmitBody {
  participant: string;
  lineup_id: string;
  token: string;
  selections: number[];
  reason: string;
  rating: number;
}

export interface StoredEvaluation {
  lineup_id: string;
  participant_id: string;
  selections: number[];
  reason: string;
  rating: number;
  timestamp: string;
}

export interface SubmitReply {
  stored: StoredEvaluation;
  replayed: boolean;
  progress: Progress;
}

export interface LineupResult {
  lineup_id: string;
  mode: string;
  alpha: number | null;
  mc_se: number | null;
  K: number;
  c_obs: number;
  p_value: number;
  collected: number;
  filtered_out: number;
  target: number;
  attention_check: boolean;
  revealed: boolean;
  data_position?: number;
  panels?: Panel[];
}

export interface StudyBundleRef {
  id: string;
  target: number;
  attention: boolean;
}

export interface StudyManifest {
  id: string;
  state: string;
  block_size: number;
  mode: string;
  alpha: number | null;
  replications: number;
  bundles: StudyBundleRef[];
}

export interface StudyExport {
  study: StudyManifest;
  evaluations: StoredEvaluation[];
  participants: { participant: string; attention_answered: number; kept: boolean }[];
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function unwrap(resp: Response): Promise<unknown> {
  const text = await resp.text();
  let body: unknown = null;
  if (text) {
    try {
      body = JSON.parse(text);
    } catch {
      body = null;
    }
  }
  if (!resp.ok) {
    const envelope = body as { code?: string; message?: string } | null;
    throw new ApiError(
      resp.status,
      envelope?.code ?? "http_error",
      envelope?.message ?? `HTTP ${resp.status}`,
    );
  }
  return body;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class Client {
  constructor(
    private readonly base: string = "",
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private url(path: string): string {
    return this.base + path;
  }

  private headers(adminToken?: string): Record<string, string> {
    const h: Record<string, string> = { "Content-Type": "application/json" };
    if (adminToken) h["Authorization"] = `Bearer ${adminToken}`;
    return h;
  }

  async nextLineup(studyId: string, participant: string): Promise<NextStep> {
    const q = encodeURIComponent(participant);
    const resp = await this.fetchFn(
      this.url(`/api/studies/${encodeURIComponent(studyId)}/next?participant=${q}`),
    );
    return (await unwrap(resp)) as NextStep;
  }

  // The assignment token makes submission idempotent, so one silent
  // retry on a network failure is safe: the server replays the stored
  // record instead of double-counting.
  async submit(studyId: string, body: SubmitBody): Promise<SubmitReply> {
    const post = async () => {
      const resp = await this.fetchFn(
        this.url(`/api/studies/${encodeURIComponent(studyId)}/evaluations`),
        {
          method: "POST",
          headers: this.headers(),
          body: JSON.stringify(body),
        },
      );
      return (await unwrap(resp)) as SubmitReply;
    };
    try {
      return await post();
    } catch (err) {
      if (err instanceof ApiError) throw err;
      return await post();
    }
  }

  async result(
    studyId: string,
    lineupId: string,
    opts: { reveal?: boolean; panels?: boolean; adminToken?: string } = {},
  ): Promise<LineupResult> {
    const params = new URLSearchParams();
    if (opts.reveal) params.set("reveal", "true");
    if (opts.panels) params.set("include", "panels");
    const qs = params.toString();
    const resp = await this.fetchFn(
      this.url(
        `/api/studies/${encodeURIComponent(studyId)}/lineups/${encodeURIComponent(lineupId)}/result${qs ? "?" + qs : ""}`,
      ),
      { headers: this.headers(opts.adminToken) },
    );
    return (await unwrap(resp)) as LineupResult;
  }

  async exportStudy(studyId: string): Promise<StudyExport> {
    const resp = await this.fetchFn(
      this.url(`/api/studies/${encodeURIComponent(studyId)}/export`),
    );
    return (await unwrap(resp)) as StudyExport;
  }
}
