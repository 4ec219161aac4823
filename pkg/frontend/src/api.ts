/** Typed client for the labeling service `/api/v1` contract. */

export interface BehaviorClass {
  class_id: number;
  name: string;
  exemplar_url: string;
  count: number;
}

export interface NextQuery {
  query_id: number;
  image_id: string;
  image_url: string;
  classes: BehaviorClass[];
}

export interface LabelAck {
  label_id: number;
  class_id: number;
}

export interface Progress {
  labeled: number;
  total: number;
  budget: number;
}

export type LabelChoice =
  | { classId: number }
  | { newClassName: string };

export interface ApiError {
  error: string;
  detail?: string;
}

export class RequestFailed extends Error {
  constructor(readonly status: number, readonly body: ApiError | null) {
    super(`request failed with status ${status}: ${body?.error ?? "unknown"}`);
  }
}

export interface ClientOptions {
  fetchFn?: typeof fetch;
  retries?: number;
  backoffMs?: number;
  sleepFn?: (ms: number) => Promise<void>;
}

const sleep = (ms: number) => new Promise<void>((r) => setTimeout(r, ms));

/**
 * Retries transient failures (network errors, 5xx) with exponential backoff;
 * 4xx responses are surfaced immediately. Duplicate label submissions are
 * safe because the server replays the prior acknowledgment.
 */
export class ApiClient {
  private fetchFn: typeof fetch;
  private retries: number;
  private backoffMs: number;
  private sleepFn: (ms: number) => Promise<void>;

  constructor(readonly baseUrl: string = "", opts: ClientOptions = {}) {
    this.fetchFn = opts.fetchFn ?? fetch.bind(globalThis);
    this.retries = opts.retries ?? 3;
    this.backoffMs = opts.backoffMs ?? 300;
    this.sleepFn = opts.sleepFn ?? sleep;
  }

  url(path: string): string {
    return `${this.baseUrl}/api/v1${path}`;
  }

  private async request(path: string, init?: RequestInit): Promise<Response> {
    let lastError: unknown = null;
    for (let attempt = 0; attempt <= this.retries; attempt++) {
      if (attempt > 0) {
        await this.sleepFn(this.backoffMs * 2 ** (attempt - 1));
      }
      let response: Response;
      try {
        response = await this.fetchFn(this.url(path), init);
      } catch (err) {
        lastError = err; // network failure: retry
        continue;
      }
      if (response.status >= 500) {
        lastError = new RequestFailed(response.status, null);
        continue;
      }
      return response;
    }
    throw lastError ?? new Error("request failed");
  }

  private async json<T>(response: Response): Promise<T> {
    if (!response.ok) {
      let body: ApiError | null = null;
      try {
        body = (await response.json()) as ApiError;
      } catch {
        body = null;
      }
      throw new RequestFailed(response.status, body);
    }
    return (await response.json()) as T;
  }

  /** Next image to label, or null when the pool is exhausted. */
  async nextQuery(): Promise<NextQuery | null> {
    const response = await this.request("/queries/next");
    if (response.status === 204) {
      return null;
    }
    return this.json<NextQuery>(response);
  }

  async submitLabel(queryId: number, choice: LabelChoice): Promise<LabelAck> {
    const body: Record<string, unknown> = { query_id: queryId };
    if ("classId" in choice) {
      body.class_id = choice.classId;
    } else {
      body.new_class_name = choice.newClassName;
    }
    const response = await this.request("/labels", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    return this.json<LabelAck>(response);
  }

  async classes(): Promise<BehaviorClass[]> {
    const response = await this.request("/classes");
    const data = await this.json<{ classes: BehaviorClass[] }>(response);
    return data.classes;
  }

  async progress(): Promise<Progress> {
    const response = await this.request("/progress");
    return this.json<Progress>(response);
  }

  async tripletCount(): Promise<number> {
    const response = await this.request("/triplets/count");
    const data = await this.json<{ count: number }>(response);
    return data.count;
  }
}
