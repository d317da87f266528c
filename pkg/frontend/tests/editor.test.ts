import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { EditingClient } from "../src/client.js";
import { EditorSession } from "../src/editor.js";
import { BASE, BASE_YHAT, MockService, imageFor, makeInfo } from "./mock-service.js";

const IMG = [0.1, 0.2, 0.3, 0.4];
const IMG2 = [0.9, 0.8, 0.7, 0.6];

function makeSession(svc: MockService): EditorSession {
  return new EditorSession(new EditingClient(BASE, svc.fetch));
}

async function readySession(svc: MockService): Promise<EditorSession> {
  const session = makeSession(svc);
  await session.start();
  return session;
}

/** Drain the microtask queue without advancing the fake clock. */
async function flush(): Promise<void> {
  for (let i = 0; i < 8; i++) await Promise.resolve();
}

beforeEach(() => vi.useFakeTimers());
afterEach(() => vi.useRealTimers());

describe("session setup", () => {
  it("becomes ready from model info", async () => {
    const svc = new MockService();
    const session = await readySession(svc);
    const state = session.getState();
    expect(state.phase).toBe("ready");
    expect(state.info?.attribute_names).toEqual(["thick", "slanted", "large"]);
    expect(state.message).toBeNull();
  });

  it("flags an unreachable service and stays disabled", async () => {
    const client = new EditingClient(BASE, () => Promise.reject(new TypeError("no route")));
    const session = new EditorSession(client);
    await session.start();
    const state = session.getState();
    expect(state.phase).toBe("unavailable");
    expect(state.message).toContain("unreachable");
    expect(session.setSlider(0, 1)).toBe(false);
  });

  it("refuses a model without per-attribute sliders", async () => {
    const svc = new MockService(makeInfo({ target_kind: "multiclass" }));
    const session = await readySession(svc);
    expect(session.getState().phase).toBe("unavailable");
    expect(session.getState().message).toContain("multilabel");
  });

  it("stays usable, with a notice, when there is nothing to edit", async () => {
    const svc = new MockService(makeInfo({ target_dim: 0, attribute_names: [] }));
    const session = await readySession(svc);
    expect(session.getState().phase).toBe("ready");
    expect(session.getState().message).toContain("no editable attributes");
  });
});

describe("input selection", () => {
  it("seeds sliders from the encoder and shows the plain reconstruction", async () => {
    const svc = new MockService();
    const session = await readySession(svc);
    expect(await session.selectInput(IMG)).toBe(true);
    expect(svc.calls[1]).toEqual({ path: "/edit", body: { image: IMG, edits: [] } });
    const state = session.getState();
    expect(state.sliders).toEqual(BASE_YHAT);
    expect(state.acknowledged?.sliders).toEqual(BASE_YHAT);
    expect(state.acknowledged?.image).toEqual(imageFor(BASE_YHAT, 4));
    expect(state.busy).toBe(false);
  });

  it("rejects malformed images before any request", async () => {
    const svc = new MockService();
    const session = await readySession(svc);
    expect(await session.selectInput([0.1, 0.2])).toBe(false);
    expect(await session.selectInput([0.1, NaN, 0.3, 0.4])).toBe(false);
    expect(svc.editCalls).toBe(0);
    expect(session.getState().message).toBeTruthy();
  });
});

describe("slider edits", () => {
  it("issues one debounced edit per motion settle", async () => {
    const svc = new MockService();
    const session = await readySession(svc);
    await session.selectInput(IMG);
    expect(session.setSlider(0, 1.25)).toBe(true);
    await vi.advanceTimersByTimeAsync(149);
    expect(svc.editCalls).toBe(1);
    await vi.advanceTimersByTimeAsync(1);
    await flush();
    expect(svc.editCalls).toBe(2);
    expect(svc.calls[2].body).toEqual({
      image: IMG,
      edits: [
        [0, 1.25],
        [1, 0.5],
        [2, 0.75],
      ],
    });
    expect(session.getState().acknowledged?.image).toEqual(
      imageFor([1.25, 0.5, 0.75], 4),
    );
  });

  it("collapses a drag burst into the trailing value", async () => {
    const svc = new MockService();
    const session = await readySession(svc);
    await session.selectInput(IMG);
    for (const v of [0.9, 1.1, 1.3]) {
      session.setSlider(0, v);
      await vi.advanceTimersByTimeAsync(50);
    }
    await vi.advanceTimersByTimeAsync(150);
    await flush();
    expect(svc.editCalls).toBe(2);
    expect(svc.calls[2].body.edits[0]).toEqual([0, 1.3]);
  });

  it("refuses out-of-interval values client-side, issuing no request", async () => {
    const svc = new MockService();
    const session = await readySession(svc);
    await session.selectInput(IMG);
    expect(session.setSlider(0, 99)).toBe(false);
    expect(session.setSlider(0, -2.1)).toBe(false);
    expect(session.getState().message).toContain("editing interval");
    expect(session.getState().sliders).toEqual(BASE_YHAT);
    await vi.advanceTimersByTimeAsync(1000);
    expect(svc.editCalls).toBe(1);
  });

  it("refuses non-finite values", async () => {
    const svc = new MockService();
    const session = await readySession(svc);
    await session.selectInput(IMG);
    expect(session.setSlider(0, NaN)).toBe(false);
    expect(session.setSlider(0, Infinity)).toBe(false);
    await vi.advanceTimersByTimeAsync(1000);
    expect(svc.editCalls).toBe(1);
  });

  it("snaps sliders back when the service answers 422", async () => {
    const svc = new MockService();
    const session = await readySession(svc);
    await session.selectInput(IMG);
    svc.failNext = {
      status: 422,
      payload: { error: "edit outside the editing interval", field: "edits" },
    };
    session.setSlider(0, 3.0);
    await vi.advanceTimersByTimeAsync(150);
    await flush();
    const state = session.getState();
    expect(state.sliders).toEqual(BASE_YHAT);
    expect(state.message).toContain("sliders restored");
    expect(state.acknowledged?.image).toEqual(imageFor(BASE_YHAT, 4));
    expect(state.busy).toBe(false);
    // the session recovers: the next motion goes through
    session.setSlider(0, 1.0);
    await vi.advanceTimersByTimeAsync(150);
    await flush();
    expect(session.getState().acknowledged?.sliders).toEqual([1.0, 0.5, 0.75]);
  });
});

describe("request discipline", () => {
  it("keeps one request outstanding and collapses queued motion", async () => {
    const svc = new MockService();
    svc.manual = true;
    const session = await readySession(svc);
    const selecting = session.selectInput(IMG);
    svc.release();
    await selecting;

    session.setSlider(0, 1.0);
    await vi.advanceTimersByTimeAsync(150);
    expect(svc.parked.length).toBe(1);
    expect(session.getState().busy).toBe(true);

    // second motion while the first request is in flight: queued, not sent
    session.setSlider(1, 2.0);
    await vi.advanceTimersByTimeAsync(150);
    expect(svc.parked.length).toBe(1);
    expect(svc.editCalls).toBe(2);

    svc.release();
    await flush();
    // first acknowledgement shows, then the queued vector goes out
    const mid = session.getState();
    expect(mid.acknowledged?.sliders).toEqual([1.0, 0.5, 0.75]);
    expect(mid.acknowledged?.image).toEqual(imageFor([1.0, 0.5, 0.75], 4));
    expect(svc.parked.length).toBe(1);
    expect(svc.calls[3].body.edits).toEqual([
      [0, 1.0],
      [1, 2.0],
      [2, 0.75],
    ]);

    svc.release();
    await flush();
    const done = session.getState();
    expect(done.acknowledged?.sliders).toEqual([1.0, 2.0, 0.75]);
    expect(done.acknowledged?.image).toEqual(imageFor([1.0, 2.0, 0.75], 4));
    expect(done.busy).toBe(false);
    expect(svc.maxOpen).toBe(1);
  });

  it("drops responses that arrive for a superseded request", async () => {
    const svc = new MockService();
    svc.manual = true;
    const session = await readySession(svc);
    const selecting = session.selectInput(IMG);
    svc.release();
    await selecting;

    // a sweep goes out, then a new input supersedes it mid-flight
    const sweeping = session.runSweep(0, -1, 2, 3);
    expect(svc.parked.length).toBe(1);
    const selecting2 = session.selectInput(IMG2);
    expect(svc.parked.length).toBe(2);

    svc.release(1); // the new input's identity edit
    expect(await selecting2).toBe(true);
    const acked = session.getState().acknowledged;
    expect(session.getState().input).toEqual(IMG2);
    expect(acked?.image).toEqual(imageFor(BASE_YHAT, 4));

    svc.release(0); // the stale sweep response finally lands
    expect(await sweeping).toBe(false);
    await flush();
    const state = session.getState();
    expect(state.acknowledged).toEqual(acked);
    expect(state.sweep).toBeNull();
    expect(state.busy).toBe(false);
  });

  it("matches the acknowledged vector to the sliders once idle", async () => {
    const svc = new MockService();
    const session = await readySession(svc);
    await session.selectInput(IMG);
    for (const [i, v] of [
      [0, -1.5],
      [2, 4.0],
      [1, 0.0],
    ] as const) {
      session.setSlider(i, v);
      await vi.advanceTimersByTimeAsync(150);
      await flush();
      const state = session.getState();
      expect(state.busy).toBe(false);
      expect(state.acknowledged?.sliders).toEqual(state.sliders);
      expect(state.acknowledged?.image).toEqual(imageFor(state.sliders, 4));
    }
  });
});

describe("intensity sweeps", () => {
  it("renders an ordered strip, other sliders held at their values", async () => {
    const svc = new MockService();
    const session = await readySession(svc);
    await session.selectInput(IMG);
    expect(await session.runSweep(1, -1.5, 3, 4)).toBe(true);
    const sweep = session.getState().sweep;
    expect(sweep?.attribute).toBe(1);
    expect(sweep?.values).toEqual([-1.5, 0, 1.5, 3]);
    expect(sweep?.images).toEqual(
      [-1.5, 0, 1.5, 3].map((v) => imageFor([0.25, v, 0.75], 4)),
    );
    expect(svc.editCalls).toBe(5);
    expect(session.getState().busy).toBe(false);
  });

  it("validates sweep parameters client-side", async () => {
    const svc = new MockService();
    const session = await readySession(svc);
    await session.selectInput(IMG);
    expect(await session.runSweep(0, -5, 2, 4)).toBe(false);
    expect(await session.runSweep(0, 0, 1, 1)).toBe(false);
    expect(await session.runSweep(7, 0, 1, 3)).toBe(false);
    expect(await session.runSweep(0, 2, 1, 3)).toBe(false);
    expect(svc.editCalls).toBe(1);
  });
});
