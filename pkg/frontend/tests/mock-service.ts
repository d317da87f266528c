import type { FetchLike } from "../src/client.js";
import type { EditPair, ModelInfo } from "../src/types.js";

export const BASE = "http://svc.test";
export const INTERVAL: [number, number] = [-2, 5];
export const BASE_YHAT = [0.25, 0.5, 0.75];

export function makeInfo(overrides: Partial<ModelInfo> = {}): ModelInfo {
  return {
    image_dim: 4,
    image_shape: [2, 2],
    target_dim: 3,
    latent_dim: 2,
    target_kind: "multilabel",
    attribute_names: ["thick", "slanted", "large"],
    editing_interval: INTERVAL,
    image_range: [0, 1],
    ...overrides,
  };
}

/** Deterministic fake renderer so tests can recompute expected pixels. */
export function imageFor(vector: readonly number[], imageDim: number): number[] {
  const out = new Array<number>(imageDim);
  for (let i = 0; i < imageDim; i++) {
    out[i] = vector[i % vector.length] / 10 + i / 100;
  }
  return out;
}

// Plain object, not a real Response: undici bodies settle on macrotasks,
// which would deadlock tests that run under fake timers.
function jsonResponse(status: number, payload: unknown): Response {
  return {
    ok: status >= 200 && status < 300,
    status,
    json: async () => payload,
  } as unknown as Response;
}

interface PendingEdit {
  body: { image: number[]; edits: EditPair[] };
  respond(response: Response): void;
}

/**
 * In-memory stand-in for the editing service. Auto mode answers /edit
 * immediately; manual mode parks each request until release() so tests
 * control settlement order. Abort signals are deliberately ignored:
 * the session must stay consistent even when a fetch it superseded
 * eventually comes back.
 */
export class MockService {
  // body is whatever the client sent, already JSON-parsed
  readonly calls: Array<{ path: string; body: any }> = [];
  readonly parked: PendingEdit[] = [];
  manual = false;
  failNext: { status: number; payload: unknown } | null = null;
  open = 0;
  maxOpen = 0;

  constructor(readonly info: ModelInfo = makeInfo()) {}

  get editCalls(): number {
    return this.calls.filter((c) => c.path === "/edit").length;
  }

  /** Settle the index-th parked request (default: the oldest). */
  release(index = 0, override?: { status: number; payload: unknown }): void {
    const entry = this.parked.splice(index, 1)[0];
    if (!entry) throw new Error(`no parked request at ${index}`);
    entry.respond(
      override
        ? jsonResponse(override.status, override.payload)
        : this.answer(entry.body),
    );
  }

  fetch: FetchLike = (url, init) => {
    const path = new URL(String(url)).pathname;
    const body = init?.body ? JSON.parse(String(init.body)) : null;
    this.calls.push({ path, body });
    if (path === "/model-info") {
      return Promise.resolve(jsonResponse(200, this.info));
    }
    if (path !== "/edit") {
      return Promise.resolve(jsonResponse(404, { error: `no such endpoint ${path}` }));
    }
    this.open += 1;
    this.maxOpen = Math.max(this.maxOpen, this.open);
    const settle = (response: Response): Response => {
      this.open -= 1;
      return response;
    };
    if (this.manual) {
      return new Promise<Response>((resolve) => {
        this.parked.push({ body, respond: (r) => resolve(settle(r)) });
      });
    }
    return Promise.resolve(settle(this.answer(body)));
  };

  private answer(body: { image: number[]; edits: EditPair[] }): Response {
    if (this.failNext) {
      const { status, payload } = this.failNext;
      this.failNext = null;
      return jsonResponse(status, payload);
    }
    const yHat = BASE_YHAT.slice(0, this.info.target_dim);
    const edited = yHat.slice();
    for (const [index, value] of body.edits) {
      if (value < INTERVAL[0] || value > INTERVAL[1]) {
        return jsonResponse(422, {
          error: `edit value ${value} outside the editing interval`,
          field: "edits",
        });
      }
      edited[index] = value;
    }
    return jsonResponse(200, {
      image_out: imageFor(edited, this.info.image_dim),
      shape: this.info.image_shape,
      y_hat: yHat,
      y_hat_edited: edited,
    });
  }
}
