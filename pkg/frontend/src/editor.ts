import { EditingClient, ServiceError } from "./client.js";
import { Debouncer } from "./debounce.js";
import { intensityGrid } from "./raster.js";
import type { EditPair, ModelInfo } from "./types.js";

export const DEBOUNCE_MS = 150;

/** The last slider vector the service actually rendered. */
export interface Acknowledged {
  sliders: number[];
  image: number[];
  shape: number[];
}

export interface SweepResult {
  attribute: number;
  values: number[];
  images: number[][];
}

export type EditorPhase = "init" | "ready" | "unavailable";

export interface EditorState {
  phase: EditorPhase;
  info: ModelInfo | null;
  input: number[] | null;
  /** Current slider positions; always inside the editing interval. */
  sliders: number[];
  acknowledged: Acknowledged | null;
  sweep: SweepResult | null;
  /** True while an edit request is outstanding (never more than one). */
  busy: boolean;
  message: string | null;
}

function vectorsEqual(a: readonly number[], b: readonly number[]): boolean {
  return a.length === b.length && a.every((v, i) => v === b[i]);
}

/**
 * Editor session: owns the slider vector and keeps the displayed image in
 * step with it. All service traffic funnels through here so the
 * concurrency rules hold:
 *
 * - slider motion is debounced; at most one edit request is in flight,
 *   further changes queue and collapse into a single follow-up request;
 * - every request carries an epoch; a response whose epoch is no longer
 *   current is dropped without touching the display;
 * - selecting a new input or starting a sweep supersedes (and aborts)
 *   whatever is in flight.
 *
 * The whole UI is reconstructible from (input, sliders): replaying those
 * against a fresh session yields the same acknowledged image.
 */
export class EditorSession {
  private readonly state: EditorState = {
    phase: "init",
    info: null,
    input: null,
    sliders: [],
    acknowledged: null,
    sweep: null,
    busy: false,
    message: null,
  };
  private readonly debouncer: Debouncer;
  private epoch = 0;
  private dirty = false;
  private pending: AbortController | null = null;

  constructor(
    private readonly client: EditingClient,
    private readonly onChange: (state: Readonly<EditorState>) => void = () => {},
    debounceMs: number = DEBOUNCE_MS,
  ) {
    this.debouncer = new Debouncer(debounceMs);
  }

  getState(): Readonly<EditorState> {
    return this.state;
  }

  /** Fetch model info and build the slider layout. */
  async start(): Promise<void> {
    try {
      const info = await this.client.modelInfo();
      if (info.target_kind !== "multilabel") {
        this.state.phase = "unavailable";
        this.state.message =
          "this editor drives per-attribute sliders and needs a multilabel model";
      } else {
        this.state.info = info;
        this.state.phase = "ready";
        this.state.message =
          info.target_dim === 0 ? "model exposes no editable attributes" : null;
      }
    } catch (err) {
      this.state.phase = "unavailable";
      this.state.message = `service unreachable: ${describe(err)}`;
    }
    this.emit();
  }

  /**
   * Select the working image. An identity edit (no replacements) returns
   * both the encoded soft targets and the plain reconstruction, so one
   * request seeds the sliders and the display together.
   */
  async selectInput(image: readonly number[]): Promise<boolean> {
    const info = this.state.info;
    if (!info) {
      return this.refuse("no model loaded");
    }
    if (image.length !== info.image_dim) {
      return this.refuse(
        `input needs ${info.image_dim} pixels, got ${image.length}`,
      );
    }
    if (!Array.from(image).every(Number.isFinite)) {
      return this.refuse("input pixels must be finite numbers");
    }
    const epoch = this.supersede();
    this.debouncer.cancel();
    this.dirty = false;
    this.state.input = image.slice();
    this.state.sliders = [];
    this.state.sweep = null;
    this.state.acknowledged = null;
    this.state.busy = true;
    this.state.message = null;
    this.emit();
    try {
      const resp = await this.send(this.state.input, []);
      if (epoch !== this.epoch) return false;
      this.state.sliders = resp.y_hat.slice();
      this.state.acknowledged = {
        sliders: resp.y_hat.slice(),
        image: resp.image_out,
        shape: resp.shape,
      };
    } catch (err) {
      if (epoch !== this.epoch) return false;
      this.state.message = describe(err);
    } finally {
      if (epoch === this.epoch) {
        this.state.busy = false;
        this.emit();
      }
    }
    return this.state.message === null;
  }

  /**
   * Move one slider. Out-of-interval and non-finite values are refused
   * here, before any request is made; accepted values schedule a
   * debounced edit.
   */
  setSlider(index: number, value: number): boolean {
    const info = this.state.info;
    if (!info || this.state.input === null) {
      return this.refuse("select an input image first");
    }
    if (!Number.isInteger(index) || index < 0 || index >= this.state.sliders.length) {
      return this.refuse(`no attribute at index ${index}`);
    }
    if (!Number.isFinite(value)) {
      return this.refuse("slider value must be a finite number");
    }
    const [lo, hi] = info.editing_interval;
    if (value < lo || value > hi) {
      return this.refuse(
        `value ${value} outside the editing interval [${lo}, ${hi}]`,
      );
    }
    this.state.sliders[index] = value;
    this.state.message = null;
    this.debouncer.schedule(() => void this.pushSliders());
    this.emit();
    return true;
  }

  /**
   * Render a strip of synthesized images varying one attribute across an
   * evenly spaced grid; every other slider stays at its current value.
   */
  async runSweep(
    attribute: number,
    lo: number,
    hi: number,
    steps: number,
  ): Promise<boolean> {
    const info = this.state.info;
    const input = this.state.input;
    if (!info || input === null) {
      return this.refuse("select an input image first");
    }
    if (!Number.isInteger(attribute) || attribute < 0 || attribute >= info.target_dim) {
      return this.refuse(`no attribute at index ${attribute}`);
    }
    if (!Number.isInteger(steps) || steps < 2) {
      return this.refuse("sweep needs an integer step count of at least 2");
    }
    const [ilo, ihi] = info.editing_interval;
    if (!Number.isFinite(lo) || !Number.isFinite(hi) || lo > hi) {
      return this.refuse("sweep range must be finite with lo <= hi");
    }
    if (lo < ilo || hi > ihi) {
      return this.refuse(
        `sweep range [${lo}, ${hi}] outside the editing interval [${ilo}, ${ihi}]`,
      );
    }
    const epoch = this.supersede();
    const values = intensityGrid(lo, hi, steps);
    const sweep: SweepResult = { attribute, values: [], images: [] };
    this.state.sweep = sweep;
    this.state.busy = true;
    this.state.message = null;
    this.emit();
    try {
      for (const value of values) {
        const vector = this.state.sliders.slice();
        vector[attribute] = value;
        const resp = await this.send(input, vector.map(pair));
        if (epoch !== this.epoch) return false;
        sweep.values.push(value);
        sweep.images.push(resp.image_out);
        this.emit();
      }
    } catch (err) {
      if (epoch !== this.epoch) return false;
      this.state.sweep = null;
      this.state.message = describe(err);
    } finally {
      if (epoch === this.epoch) {
        this.state.busy = false;
        this.emit();
        this.flushDirty();
      }
    }
    return this.state.sweep === sweep;
  }

  /** Sends the current slider vector; queues if a request is in flight. */
  private async pushSliders(): Promise<void> {
    const input = this.state.input;
    if (input === null) return;
    if (this.state.busy) {
      // one request at a time: remember that the vector moved and send
      // the latest values once the outstanding request settles
      this.dirty = true;
      return;
    }
    const epoch = ++this.epoch;
    const vector = this.state.sliders.slice();
    this.state.busy = true;
    this.emit();
    try {
      const resp = await this.send(input, vector.map(pair));
      if (epoch !== this.epoch) return;
      this.state.acknowledged = {
        sliders: vector,
        image: resp.image_out,
        shape: resp.shape,
      };
    } catch (err) {
      if (epoch !== this.epoch) return;
      if (err instanceof ServiceError && err.status === 422) {
        // the service refused the vector: snap the sliders back to the
        // last state it accepted
        const fallback = this.state.acknowledged?.sliders ?? [];
        this.state.sliders = fallback.slice();
        this.state.message = `edit rejected, sliders restored: ${err.message}`;
      } else {
        this.state.message = describe(err);
      }
    } finally {
      if (epoch === this.epoch) {
        this.state.busy = false;
        this.emit();
        this.flushDirty();
      }
    }
  }

  private send(input: readonly number[], edits: readonly EditPair[]) {
    this.pending = new AbortController();
    return this.client.edit(input, edits, this.pending.signal);
  }

  /** Invalidate whatever is in flight; its response will be dropped. */
  private supersede(): number {
    this.pending?.abort();
    this.pending = null;
    return ++this.epoch;
  }

  private flushDirty(): void {
    if (!this.dirty) return;
    this.dirty = false;
    const acked = this.state.acknowledged?.sliders;
    if (acked && vectorsEqual(this.state.sliders, acked)) return;
    void this.pushSliders();
  }

  private refuse(message: string): false {
    this.state.message = message;
    this.emit();
    return false;
  }

  private emit(): void {
    this.onChange(this.state);
  }
}

function pair(value: number, index: number): EditPair {
  return [index, value];
}

function describe(err: unknown): string {
  return err instanceof Error ? err.message : String(err);
}
