/** Movement-index heatmap with row virtualization plus a per-larva trace view.
 *
 * Rows are plain divs whose background is a CSS gradient built from the
 * index values (blue = still, red = strong movement); only the rows inside
 * the viewport (plus a buffer) exist in the DOM, so hundreds of larvae
 * scroll smoothly. Clicking a row opens an SVG trace with the detected
 * event intervals shaded.
 */

import { ApiClient, MovementMatrix } from "./api.js";

const ROW_HEIGHT = 14;
const BUFFER_ROWS = 6;
const MAX_GRADIENT_STOPS = 200;

export interface Interval {
  start: number;
  end: number;
}

/** Threshold runs in a series: above `extent` with a peak above `peak`. */
export function thresholdRuns(
  values: (number | null)[],
  peak: number,
  extent: number
): Interval[] {
  const runs: Interval[] = [];
  let start: number | null = null;
  let best = -Infinity;
  const flush = (end: number) => {
    if (start !== null && best > peak) {
      runs.push({ start, end });
    }
    start = null;
    best = -Infinity;
  };
  values.forEach((v, i) => {
    if (v !== null && v > extent) {
      if (start === null) {
        start = i;
      }
      best = Math.max(best, v);
    } else {
      flush(i - 1);
    }
  });
  flush(values.length - 1);
  return runs;
}

function robustStats(values: (number | null)[]): { median: number; mad: number } {
  const finite = values.filter((v): v is number => v !== null).sort((a, b) => a - b);
  if (finite.length === 0) {
    return { median: 0, mad: 0 };
  }
  const median = finite[Math.floor(finite.length / 2)];
  const deviations = finite.map((v) => Math.abs(v - median)).sort((a, b) => a - b);
  return { median, mad: deviations[Math.floor(deviations.length / 2)] };
}

function heatColor(fraction: number): string {
  const f = Math.max(0, Math.min(1, fraction));
  const r = Math.round(40 + 215 * f);
  const b = Math.round(255 - 215 * f);
  return `rgb(${r},60,${b})`;
}

export class HeatmapView {
  readonly root: HTMLElement;
  private viewport: HTMLElement;
  private canvasArea: HTMLElement;
  private trace: HTMLElement;
  private matrix: MovementMatrix | null = null;
  private low = 0;
  private high = 1;
  private rendered = new Map<number, HTMLElement>();

  constructor(
    private api: ApiClient,
    doc: Document = document,
    private viewportHeight = 420
  ) {
    this.root = doc.createElement("section");
    this.root.className = "heatmap";

    this.viewport = doc.createElement("div");
    this.viewport.className = "heatmap-viewport";
    this.viewport.style.height = `${viewportHeight}px`;
    this.viewport.style.overflowY = "auto";
    this.viewport.style.position = "relative";
    this.viewport.addEventListener("scroll", () => this.renderVisible());
    this.root.appendChild(this.viewport);

    this.canvasArea = doc.createElement("div");
    this.canvasArea.className = "heatmap-rows";
    this.canvasArea.style.position = "relative";
    this.viewport.appendChild(this.canvasArea);

    this.trace = doc.createElement("div");
    this.trace.className = "trace hidden";
    this.root.appendChild(this.trace);
  }

  get totalRows(): number {
    return this.matrix ? this.matrix.n_eggs : 0;
  }

  get renderedRowCount(): number {
    return this.rendered.size;
  }

  async start(): Promise<void> {
    this.matrix = await this.api.movementIndex();
    const finite = this.matrix.values
      .flat()
      .filter((v): v is number => v !== null)
      .sort((a, b) => a - b);
    if (finite.length) {
      this.low = finite[Math.floor(0.02 * (finite.length - 1))];
      this.high = finite[Math.floor(0.98 * (finite.length - 1))];
      if (this.high <= this.low) {
        this.high = this.low + 1;
      }
    }
    this.canvasArea.style.height = `${this.totalRows * ROW_HEIGHT}px`;
    this.renderVisible();
  }

  /** Create row elements for the viewport range, drop the rest. */
  renderVisible(): void {
    if (!this.matrix) {
      return;
    }
    const top = this.viewport.scrollTop;
    const first = Math.max(Math.floor(top / ROW_HEIGHT) - BUFFER_ROWS, 0);
    const last = Math.min(
      Math.ceil((top + this.viewportHeight) / ROW_HEIGHT) + BUFFER_ROWS,
      this.totalRows - 1
    );
    for (const [index, element] of [...this.rendered]) {
      if (index < first || index > last) {
        element.remove();
        this.rendered.delete(index);
      }
    }
    for (let i = first; i <= last; i++) {
      if (!this.rendered.has(i)) {
        const row = this.buildRow(i);
        this.canvasArea.appendChild(row);
        this.rendered.set(i, row);
      }
    }
  }

  private buildRow(index: number): HTMLElement {
    const doc = this.root.ownerDocument;
    const row = doc.createElement("div");
    row.className = "heatmap-row";
    row.dataset.egg = String(index);
    row.style.position = "absolute";
    row.style.top = `${index * ROW_HEIGHT}px`;
    row.style.height = `${ROW_HEIGHT - 1}px`;
    row.style.width = "100%";
    row.style.background = this.rowGradient(this.matrix!.values[index]);
    row.title = `larva ${index}`;
    row.addEventListener("click", () => this.openTrace(index));
    return row;
  }

  private rowGradient(values: (number | null)[]): string {
    const step = Math.max(1, Math.ceil(values.length / MAX_GRADIENT_STOPS));
    const stops: string[] = [];
    for (let i = 0; i < values.length; i += step) {
      const v = values[i];
      const fraction =
        v === null ? 0 : (v - this.low) / (this.high - this.low);
      const pct = (100 * i) / values.length;
      stops.push(`${v === null ? "#222" : heatColor(fraction)} ${pct.toFixed(2)}%`);
    }
    return `linear-gradient(to right, ${stops.join(", ")})`;
  }

  /** SVG index trace of one larva with detected event intervals shaded. */
  openTrace(index: number): void {
    if (!this.matrix) {
      return;
    }
    const values = this.matrix.values[index];
    const { median, mad } = robustStats(values);
    const runs = thresholdRuns(values, median + 8 * mad, median + 3 * mad);

    const doc = this.root.ownerDocument;
    const svgNs = "http://www.w3.org/2000/svg";
    const width = 640;
    const height = 160;
    const svg = doc.createElementNS(svgNs, "svg");
    svg.setAttribute("viewBox", `0 0 ${width} ${height}`);
    svg.setAttribute("class", "trace-plot");

    const finite = values.filter((v): v is number => v !== null);
    const max = finite.length ? Math.max(...finite) : 1;
    const x = (i: number) => (i / Math.max(values.length - 1, 1)) * width;
    const y = (v: number) => height - (v / (max || 1)) * (height - 4);

    for (const run of runs) {
      const rect = doc.createElementNS(svgNs, "rect");
      rect.setAttribute("class", "event-shade");
      rect.setAttribute("x", String(x(run.start)));
      rect.setAttribute("width", String(Math.max(x(run.end) - x(run.start), 1)));
      rect.setAttribute("y", "0");
      rect.setAttribute("height", String(height));
      rect.setAttribute("fill", "rgba(220,80,60,0.25)");
      svg.appendChild(rect);
    }

    const points = values
      .map((v, i) => (v === null ? null : `${x(i).toFixed(1)},${y(v).toFixed(1)}`))
      .filter((p): p is string => p !== null)
      .join(" ");
    const line = doc.createElementNS(svgNs, "polyline");
    line.setAttribute("points", points);
    line.setAttribute("fill", "none");
    line.setAttribute("stroke", "#3060c0");
    svg.appendChild(line);

    this.trace.innerHTML = "";
    const title = doc.createElement("div");
    title.textContent = `larva ${index}: ${runs.length} movement event(s)`;
    this.trace.appendChild(title);
    this.trace.appendChild(svg as unknown as Node);
    this.trace.classList.remove("hidden");
  }
}
