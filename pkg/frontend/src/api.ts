// Typed client for the /v1 session API. The UI talks to the service through
// this module only; it never re-scores anything locally.

export type BboxArray = [number, number, number, number];

export interface ScoredRegion {
  region_id: number;
  score: number;
  s_pos: number;
  s_neg: number;
}

export interface PresentedRegion {
  region_id: number;
  bbox: BboxArray;
  score: number;
}

export type SessionStatus = 'active' | 'confirmed' | 'unresolved';

export interface SessionHandle {
  session_id: string;
  image_id: string;
  status: SessionStatus;
  turn: number;
  z_pos_size: number;
  z_neg_size: number;
  rejected_region_ids: number[];
}

export interface BStar {
  region_id: number;
  bbox: BboxArray;
}

export interface CreateSessionResponse {
  session: SessionHandle;
  presented: PresentedRegion[];
  ranking: ScoredRegion[];
}

export interface FeedbackResponse {
  session: SessionHandle;
  presented?: PresentedRegion[];
  ranking?: ScoredRegion[];
  b_star?: BStar;
}

export interface FeedbackRequest {
  kind: 'positive-confirmation' | 'positive-refinement' | 'negative';
  region_id?: number;
  new_prompt_embedding?: number[];
  turn?: number;
}

export interface TranscriptFeedback {
  kind: string;
  region_id?: number;
  new_prompt_embedding?: number[];
}

export interface TranscriptTurn {
  turn: number;
  ranking: ScoredRegion[];
  presented: number[];
  feedback: TranscriptFeedback | null;
}

export interface Transcript {
  query_id: string;
  image_id: string;
  outcome: string;
  status?: string;
  turns: TranscriptTurn[];
  confirmed_region_id?: number;
  b_star?: BboxArray;
}

export interface SessionSnapshot {
  session: SessionHandle;
  transcript: Transcript;
}

export interface BundleRegion {
  id: number;
  bbox: BboxArray;
}

export interface BundleInfo {
  bundle_id: string;
  image_uri: string | null;
  dim: number;
  regions: BundleRegion[];
}

export interface QueryEntry {
  text_embedding?: number[];
  ref_image_embedding?: number[];
  text?: string;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

async function parse<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let code = 'unknown';
    let message = response.statusText;
    try {
      const body = (await response.json()) as { code?: string; message?: string };
      code = body.code ?? code;
      message = body.message ?? message;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(response.status, code, message);
  }
  return (await response.json()) as T;
}

export class ApiClient {
  constructor(readonly baseUrl: string) {}

  private url(path: string): string {
    return `${this.baseUrl.replace(/\/$/, '')}${path}`;
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const response = await fetch(this.url(path), {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(body),
    });
    return parse<T>(response);
  }

  private async get<T>(path: string): Promise<T> {
    return parse<T>(await fetch(this.url(path)));
  }

  registerBundle(manifest: unknown): Promise<{ bundle_id: string; regions: number }> {
    return this.post('/v1/bundles', manifest);
  }

  getBundle(bundleId: string): Promise<BundleInfo> {
    return this.get(`/v1/bundles/${encodeURIComponent(bundleId)}`);
  }

  createSession(
    bundleId: string,
    query: QueryEntry,
    config?: Record<string, unknown>,
  ): Promise<CreateSessionResponse> {
    const body: Record<string, unknown> = { bundle_id: bundleId, query };
    if (config) body.config = config;
    return this.post('/v1/sessions', body);
  }

  postFeedback(sessionId: string, feedback: FeedbackRequest): Promise<FeedbackResponse> {
    return this.post(`/v1/sessions/${encodeURIComponent(sessionId)}/feedback`, feedback);
  }

  getSession(sessionId: string): Promise<SessionSnapshot> {
    return this.get(`/v1/sessions/${encodeURIComponent(sessionId)}`);
  }
}
