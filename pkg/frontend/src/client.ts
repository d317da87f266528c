import type { EditPair, EditResponse, ModelInfo } from "./types.js";

export type FetchLike = typeof fetch;

/** Non-2xx reply from the service, with the JSON error body unpacked. */
export class ServiceError extends Error {
  constructor(
    readonly status: number,
    message: string,
    readonly field: string | null = null,
  ) {
    super(message);
    this.name = "ServiceError";
  }
}

/** Thin JSON client; holds nothing but the base URL. */
export class EditingClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = fetch,
  ) {}

  modelInfo(): Promise<ModelInfo> {
    return this.request<ModelInfo>("GET", "/model-info");
  }

  edit(
    image: readonly number[],
    edits: readonly EditPair[],
    signal?: AbortSignal,
  ): Promise<EditResponse> {
    return this.request<EditResponse>("POST", "/edit", { image, edits }, signal);
  }

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
    signal?: AbortSignal,
  ): Promise<T> {
    const response = await this.fetchImpl(this.baseUrl + path, {
      method,
      headers: body === undefined ? undefined : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
      signal,
    });
    const payload = await response.json().catch(() => ({}));
    if (!response.ok) {
      const message =
        typeof payload.error === "string" ? payload.error : `HTTP ${response.status}`;
      const field = typeof payload.field === "string" ? payload.field : null;
      throw new ServiceError(response.status, message, field);
    }
    return payload as T;
  }
}
