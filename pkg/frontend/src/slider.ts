// The 0-5 rating slider with a hard 0.1 grid.

export const SCORE_MIN = 0;
export const SCORE_MAX = 5;
export const SCORE_STEP = 0.1;

/** Clamp into [0, 5] and snap to the nearest 0.1 (one decimal, exact). */
export function snapToGrid(value: number): number {
  const clamped = Math.min(SCORE_MAX, Math.max(SCORE_MIN, value));
  return Math.round(clamped * 10) / 10;
}

export function isOnGrid(value: number): boolean {
  return (
    value >= SCORE_MIN &&
    value <= SCORE_MAX &&
    Math.abs(value * 10 - Math.round(value * 10)) < 1e-9
  );
}

export interface ScoreSlider {
  root: HTMLElement;
  input: HTMLInputElement;
  /** Current value, always on the grid. */
  value(): number;
  reset(): void;
}

export function createScoreSlider(doc: Document): ScoreSlider {
  const root = doc.createElement("div");
  root.className = "score-slider";

  const input = doc.createElement("input");
  input.type = "range";
  input.min = String(SCORE_MIN);
  input.max = String(SCORE_MAX);
  input.step = String(SCORE_STEP);
  input.value = "2.5";

  const readout = doc.createElement("output");
  readout.textContent = "2.5";

  const labels = doc.createElement("div");
  labels.className = "score-labels";
  labels.textContent = "0 bad · 1 poor · 2 fair · 3 good · 4 excellent · 5";

  // mouse/touch only: keyboard scoring is disabled by design
  input.addEventListener("keydown", (event) => event.preventDefault());
  input.addEventListener("input", () => {
    input.value = snapToGrid(Number(input.value)).toFixed(1);
    readout.textContent = input.value;
  });

  root.append(input, readout, labels);
  return {
    root,
    input,
    value: () => snapToGrid(Number(input.value)),
    reset: () => {
      input.value = "2.5";
      readout.textContent = "2.5";
    },
  };
}
