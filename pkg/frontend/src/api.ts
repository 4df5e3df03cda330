/** Typed client for the review service.
 *
 * Every request goes through one promise chain, so at most one request is in
 * flight at a time regardless of how UI events interleave; the server's
 * single-flight iterate contract is never probed by our own concurrency.
 */

import type { IterationRecord, Label, SessionState, TopicCard, TopicDetail } from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(detail || `HTTP ${status}`);
    this.name = "ApiError";
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function bodyOf(response: Response): Promise<unknown> {
  const text = await response.text();
  try {
    return text ? JSON.parse(text) : null;
  } catch {
    return text;
  }
}

function detailOf(body: unknown, status: number): string {
  if (body && typeof body === "object" && "detail" in body) {
    return String((body as { detail: unknown }).detail);
  }
  return typeof body === "string" && body ? body : `HTTP ${status}`;
}

export class ApiClient {
  private chain: Promise<unknown> = Promise.resolve();

  constructor(
    private readonly base = "",
    private readonly fetchImpl: FetchLike = (input, init) => globalThis.fetch(input, init),
  ) {}

  /** Run after every earlier request has settled; failures do not wedge the queue. */
  private enqueue<T>(task: () => Promise<T>): Promise<T> {
    const run = this.chain.then(task, task);
    this.chain = run.then(
      () => undefined,
      () => undefined,
    );
    return run;
  }

  private request<T>(path: string, init?: RequestInit): Promise<T> {
    return this.enqueue(async () => {
      let response: Response;
      try {
        response = await this.fetchImpl(this.base + path, init);
      } catch (err) {
        throw new ApiError(0, `connection failed: ${String(err)}`);
      }
      const body = await bodyOf(response);
      if (!response.ok) {
        throw new ApiError(response.status, detailOf(body, response.status));
      }
      return body as T;
    });
  }

  session(): Promise<SessionState> {
    return this.request("/session");
  }

  history(): Promise<IterationRecord[]> {
    return this.request("/history");
  }

  topic(topicId: number): Promise<TopicDetail> {
    return this.request(`/topics/${topicId}`);
  }

  label(topicId: number, label: Label): Promise<TopicCard> {
    return this.request("/labels", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ topic_id: topicId, label }),
    });
  }

  iterate(): Promise<{ job: string }> {
    return this.request("/iterate", { method: "POST" });
  }
}
