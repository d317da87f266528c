import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { Debouncer } from "../src/debounce.js";

describe("Debouncer", () => {
  beforeEach(() => vi.useFakeTimers());
  afterEach(() => vi.useRealTimers());

  it("fires once, after the full delay", () => {
    const d = new Debouncer(150);
    let calls = 0;
    d.schedule(() => calls++);
    vi.advanceTimersByTime(149);
    expect(calls).toBe(0);
    vi.advanceTimersByTime(1);
    expect(calls).toBe(1);
    vi.advanceTimersByTime(1000);
    expect(calls).toBe(1);
  });

  it("collapses a burst into the last call", () => {
    const d = new Debouncer(150);
    const seen: number[] = [];
    for (const v of [1, 2, 3]) {
      d.schedule(() => seen.push(v));
      vi.advanceTimersByTime(50);
    }
    vi.advanceTimersByTime(150);
    expect(seen).toEqual([3]);
  });

  it("cancel drops the pending call", () => {
    const d = new Debouncer(150);
    let calls = 0;
    d.schedule(() => calls++);
    d.cancel();
    vi.advanceTimersByTime(1000);
    expect(calls).toBe(0);
  });

  it("reports whether a call is pending", () => {
    const d = new Debouncer(150);
    expect(d.pending).toBe(false);
    d.schedule(() => {});
    expect(d.pending).toBe(true);
    vi.advanceTimersByTime(150);
    expect(d.pending).toBe(false);
  });
});
