import type { EditingClient } from "./client.js";
import { EditorSession, EditorState } from "./editor.js";
import { grayscaleToRgba } from "./raster.js";

/** Pixel magnification for the output canvases. */
const SCALE = 12;
const SWEEP_SCALE = 6;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function paint(
  canvas: HTMLCanvasElement,
  image: readonly number[],
  shape: readonly number[],
  scale: number,
  range: readonly [number, number],
): void {
  const [height, width] = shape.length === 2 ? shape : [1, shape[0]];
  const bytes = grayscaleToRgba(image as number[], width, height, scale, range);
  canvas.width = width * scale;
  canvas.height = height * scale;
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.putImageData(new ImageData(bytes, width * scale, height * scale), 0, 0);
}

/**
 * Build the editor page under `root`: message banner, image input, one
 * slider per attribute, output canvas, sweep controls. All logic lives
 * in EditorSession; this file only reflects its state into the DOM.
 */
export function mountEditor(root: HTMLElement, client: EditingClient): EditorSession {
  const banner = el("div", "banner");
  const inputPanel = el("div", "panel");
  const sliderPanel = el("div", "panel sliders");
  const outputPanel = el("div", "panel output");
  const sweepPanel = el("div", "panel sweep");
  root.append(banner, inputPanel, sliderPanel, outputPanel, sweepPanel);

  const session = new EditorSession(client, (state) => render(state));

  // -- input: paste a flat JSON pixel array, or load it from a file ----
  const pasteBox = el("textarea");
  pasteBox.placeholder = "flat JSON array of pixel values, row-major";
  pasteBox.rows = 3;
  const useButton = el("button", undefined, "use pasted image");
  const fileInput = el("input");
  fileInput.type = "file";
  fileInput.accept = "application/json,.json";
  inputPanel.append(
    el("h2", undefined, "input image"),
    pasteBox,
    useButton,
    fileInput,
  );

  const readPixels = (text: string): number[] | null => {
    try {
      const parsed = JSON.parse(text);
      if (Array.isArray(parsed) && parsed.every((v) => typeof v === "number")) {
        return parsed;
      }
    } catch {
      // fall through to the error banner
    }
    banner.textContent = "could not parse a JSON number array";
    return null;
  };
  useButton.addEventListener("click", () => {
    const pixels = readPixels(pasteBox.value);
    if (pixels) void session.selectInput(pixels);
  });
  fileInput.addEventListener("change", async () => {
    const file = fileInput.files?.[0];
    if (!file) return;
    const pixels = readPixels(await file.text());
    if (pixels) void session.selectInput(pixels);
  });

  // -- sliders, one per attribute, built once model info arrives -------
  sliderPanel.append(el("h2", undefined, "attributes"));
  const sliderRows = el("div");
  sliderPanel.append(sliderRows);
  const sliderInputs: HTMLInputElement[] = [];
  const sliderReadouts: HTMLSpanElement[] = [];

  const buildSliders = (state: Readonly<EditorState>): void => {
    const info = state.info;
    if (!info || sliderInputs.length === info.target_dim) return;
    sliderRows.replaceChildren();
    sliderInputs.length = 0;
    sliderReadouts.length = 0;
    if (info.target_dim === 0) {
      sliderRows.append(el("p", undefined, "no editable attributes"));
      return;
    }
    const [lo, hi] = info.editing_interval;
    info.attribute_names.forEach((name, i) => {
      const row = el("div", "slider-row");
      const label = el("label", undefined, name);
      const slider = el("input");
      slider.type = "range";
      slider.min = String(lo);
      slider.max = String(hi);
      slider.step = "any";
      slider.disabled = true;
      const readout = el("span", "readout", "-");
      slider.addEventListener("input", () => {
        session.setSlider(i, Number(slider.value));
      });
      row.append(label, slider, readout);
      sliderRows.append(row);
      sliderInputs.push(slider);
      sliderReadouts.push(readout);
    });
  };

  // -- output canvas ----------------------------------------------------
  outputPanel.append(el("h2", undefined, "synthesis"));
  const canvas = el("canvas");
  outputPanel.append(canvas);

  // -- sweep controls ----------------------------------------------------
  sweepPanel.append(el("h2", undefined, "intensity sweep"));
  const attrSelect = el("select");
  const loBox = el("input");
  const hiBox = el("input");
  const stepsBox = el("input");
  for (const [box, value] of [
    [loBox, "-1.5"],
    [hiBox, "3"],
    [stepsBox, "5"],
  ] as const) {
    box.type = "number";
    box.value = value;
  }
  const sweepButton = el("button", undefined, "render strip");
  const strip = el("div", "strip");
  sweepPanel.append(attrSelect, loBox, hiBox, stepsBox, sweepButton, strip);
  sweepButton.addEventListener("click", () => {
    void session.runSweep(
      attrSelect.selectedIndex,
      Number(loBox.value),
      Number(hiBox.value),
      Number(stepsBox.value),
    );
  });

  const buildSweepOptions = (state: Readonly<EditorState>): void => {
    const info = state.info;
    if (!info || attrSelect.options.length === info.target_dim) return;
    attrSelect.replaceChildren();
    for (const name of info.attribute_names) {
      attrSelect.append(new Option(name));
    }
  };

  // -- render loop -------------------------------------------------------
  let paintedSweep: unknown = null;
  const render = (state: Readonly<EditorState>): void => {
    banner.textContent =
      state.message ?? (state.busy ? "working..." : state.phase);
    banner.classList.toggle("error", state.message !== null);
    buildSliders(state);
    buildSweepOptions(state);

    const enabled = state.phase === "ready" && state.input !== null;
    sliderInputs.forEach((slider, i) => {
      slider.disabled = !enabled;
      const value = state.sliders[i];
      if (value !== undefined && Number(slider.value) !== value) {
        slider.value = String(value);
      }
      sliderReadouts[i].textContent =
        value === undefined ? "-" : value.toFixed(3);
    });
    sweepButton.disabled = !enabled;
    useButton.disabled = state.phase !== "ready";

    const range = state.info?.image_range ?? [0, 1];
    if (state.acknowledged) {
      paint(canvas, state.acknowledged.image, state.acknowledged.shape, SCALE, range);
    }
    if (state.sweep !== paintedSweep || state.sweep === null) {
      paintedSweep = state.sweep;
      strip.replaceChildren();
    }
    const shape = state.acknowledged?.shape ?? state.info?.image_shape ?? [];
    if (state.sweep) {
      // cells are appended as sweep responses arrive, never repainted
      for (let i = strip.children.length; i < state.sweep.images.length; i++) {
        const cell = el("figure", "cell");
        const tile = el("canvas");
        paint(tile, state.sweep.images[i], shape, SWEEP_SCALE, range);
        cell.append(tile, el("figcaption", undefined, state.sweep.values[i].toFixed(2)));
        strip.append(cell);
      }
    }
  };

  render(session.getState());
  void session.start();
  return session;
}
