/**
 * Typed client for the study-service HTTP JSON API.
 *
 * The server is the source of truth for everything: session order, resume
 * position, duplicate detection. This module only moves JSON.
 */

export interface CasePayload {
  case_id: string;
  image_ref: string;
  options: string[];
  /** Present only in round-2 payloads: the model's five ranked suggestions. */
  top5?: string[];
}

export interface SessionProgress {
  answered: number;
  total: number;
}

export interface SessionState {
  reader: string;
  round: number;
  tier: string;
  order: string[];
  progress: SessionProgress;
  completed: boolean;
  next_case: CasePayload | null;
}

export interface ResponseBody {
  reader: string;
  case_id: string;
  round: number;
  label: string;
  confidence: number;
}

export interface SubmitAck {
  status: string;
  case_id: string;
  round: number;
}

/** HTTP-level failure with the server's error text. */
export class ApiError extends Error {
  constructor(public readonly status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }

  get isConflict(): boolean {
    return this.status === 409;
  }
}

async function parseError(resp: Response): Promise<ApiError> {
  let message = `HTTP ${resp.status}`;
  try {
    const body = (await resp.json()) as { error?: string };
    if (body.error) message = body.error;
  } catch {
    /* non-JSON error body: keep the status text */
  }
  return new ApiError(resp.status, message);
}

export class StudyApi {
  constructor(private readonly baseUrl: string = "") {}

  imageUrl(ref: string): string {
    return ref.startsWith("/") ? this.baseUrl + ref : ref;
  }

  async getSession(
    reader: string,
    round: number,
    seed: number,
    tier: string,
  ): Promise<SessionState> {
    const url =
      `${this.baseUrl}/session/${encodeURIComponent(reader)}/${round}` +
      `?seed=${seed}&tier=${encodeURIComponent(tier)}`;
    const resp = await fetch(url);
    if (!resp.ok) throw await parseError(resp);
    return (await resp.json()) as SessionState;
  }

  async submitResponse(body: ResponseBody): Promise<SubmitAck> {
    const resp = await fetch(`${this.baseUrl}/response`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!resp.ok) throw await parseError(resp);
    return (await resp.json()) as SubmitAck;
  }

  async getReport(): Promise<unknown> {
    const resp = await fetch(`${this.baseUrl}/report`);
    if (!resp.ok) throw await parseError(resp);
    return await resp.json();
  }
}
