/**
 * Thin typed client over the review-service endpoints.
 *
 * The server owns all state. Grade submission is idempotent per
 * presentation id, so transient network failures are safe to retry with
 * the same body; an out-of-order rejection means our head is stale and
 * the caller should reload it.
 */

import { GradeResponse, GradeSubmission, QueueHeadResponse } from "./types";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class AuthFailure extends Error {
  constructor() {
    super("session token rejected");
  }
}

export class OutOfOrder extends Error {
  constructor(readonly currentHead: string | null) {
    super("submission is not for the queue head");
  }
}

export class RequestFailed extends Error {
  constructor(readonly status: number, detail: string) {
    super(`request failed (${status}): ${detail}`);
  }
}

const sleep = (ms: number) => new Promise((r) => setTimeout(r, ms));

export class ReviewApi {
  constructor(
    private readonly token: string,
    private readonly fetchImpl: FetchLike = (...a) => fetch(...a),
    private readonly base = "",
  ) {}

  private async request(path: string, init: RequestInit = {}): Promise<Response> {
    const response = await this.fetchImpl(this.base + path, {
      ...init,
      headers: {
        Authorization: `Bearer ${this.token}`,
        "Content-Type": "application/json",
        ...(init.headers ?? {}),
      },
    });
    if (response.status === 401) throw new AuthFailure();
    return response;
  }

  async queueHead(): Promise<QueueHeadResponse> {
    const response = await this.request("/api/queue/head");
    if (!response.ok) throw new RequestFailed(response.status, await response.text());
    return (await response.json()) as QueueHeadResponse;
  }

  async submitGrade(grade: GradeSubmission): Promise<GradeResponse> {
    const response = await this.request("/api/grades", {
      method: "POST",
      body: JSON.stringify(grade),
    });
    if (response.status === 409) {
      const body = await response.json().catch(() => ({}));
      throw new OutOfOrder(body?.detail?.current_head ?? null);
    }
    if (!response.ok) throw new RequestFailed(response.status, await response.text());
    return (await response.json()) as GradeResponse;
  }

  /**
   * Retry only connection-level failures (fetch rejections), never HTTP
   * errors, always with the identical body: the server stores at most one
   * grade per presentation id regardless of how many attempts land.
   */
  async submitWithRetry(
    grade: GradeSubmission,
    attempts = 3,
    delayMs = 500,
    wait: (ms: number) => Promise<unknown> = sleep,
  ): Promise<GradeResponse> {
    let lastError: unknown;
    for (let attempt = 0; attempt < attempts; attempt++) {
      try {
        return await this.submitGrade(grade);
      } catch (err) {
        if (err instanceof AuthFailure || err instanceof OutOfOrder || err instanceof RequestFailed) {
          throw err;
        }
        lastError = err; // network-level: queue another identical attempt
        if (attempt + 1 < attempts) await wait(delayMs * (attempt + 1));
      }
    }
    throw lastError;
  }
}
