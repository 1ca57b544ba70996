import { beforeEach, describe, expect, it, vi } from "vitest";

import { ApiClient } from "../src/api.js";
import { HeatmapView, thresholdRuns } from "../src/heatmap.js";
import { installMockService } from "./mockService.js";

async function settled() {
  // response bodies parse on macrotasks, so tick real timers, not just microtasks
  for (let i = 0; i < 8; i++) {
    await new Promise((resolve) => setTimeout(resolve, 0));
  }
}

function cohortMatrix(nEggs: number, nFrames = 120) {
  const values: (number | null)[][] = [];
  for (let egg = 0; egg < nEggs; egg++) {
    const row: (number | null)[] = [];
    for (let k = 0; k < nFrames; k++) {
      let v = 100 + 3 * Math.sin(k * 0.7 + egg);
      if (egg % 3 === 0 && k >= 40 && k < 55) {
        v += 400; // planted movement burst
      }
      row.push(k === 10 ? null : v);
    }
    values.push(row);
  }
  return { n_eggs: nEggs, n_frames: nFrames, values };
}

describe("heatmap view", () => {
  beforeEach(() => {
    vi.unstubAllGlobals();
    document.body.innerHTML = "";
  });

  it("handles a 425-larva cohort with row virtualization", async () => {
    installMockService({ queue: [], movement: cohortMatrix(425) });
    const view = new HeatmapView(new ApiClient(""), document, 420);
    document.body.appendChild(view.root);
    await view.start();
    await settled();

    expect(view.totalRows).toBe(425);
    // only the viewport slice is in the DOM, not all 425 rows
    expect(view.renderedRowCount).toBeGreaterThan(10);
    expect(view.renderedRowCount).toBeLessThan(90);
    const area = view.root.querySelector<HTMLElement>(".heatmap-rows")!;
    expect(area.style.height).toBe(`${425 * 14}px`);
  });

  it("scrolling materializes rows further down", async () => {
    installMockService({ queue: [], movement: cohortMatrix(425) });
    const view = new HeatmapView(new ApiClient(""), document, 420);
    document.body.appendChild(view.root);
    await view.start();
    await settled();

    const viewport = view.root.querySelector<HTMLElement>(".heatmap-viewport")!;
    viewport.scrollTop = 300 * 14;
    viewport.dispatchEvent(new Event("scroll"));
    const rows = [...view.root.querySelectorAll<HTMLElement>(".heatmap-row")];
    const indices = rows.map((r) => Number(r.dataset.egg));
    expect(Math.max(...indices)).toBeGreaterThan(300);
  });

  it("clicking a row with one burst shades exactly one interval", async () => {
    installMockService({ queue: [], movement: cohortMatrix(6) });
    const view = new HeatmapView(new ApiClient(""), document, 420);
    document.body.appendChild(view.root);
    await view.start();
    await settled();

    const row = view.root.querySelector<HTMLElement>('[data-egg="3"]')!;
    row.click();
    const shades = view.root.querySelectorAll(".event-shade");
    expect(shades.length).toBe(1);
    expect(view.root.querySelector(".trace")!.textContent).toContain(
      "1 movement event"
    );
  });

  it("empty project shows an empty state without errors", async () => {
    installMockService({
      queue: [],
      movement: { n_eggs: 0, n_frames: 0, values: [] },
    });
    const view = new HeatmapView(new ApiClient(""), document, 420);
    document.body.appendChild(view.root);
    await view.start();
    await settled();
    expect(view.totalRows).toBe(0);
    expect(view.renderedRowCount).toBe(0);
  });
});

describe("threshold runs", () => {
  it("finds a planted run with hysteresis semantics", () => {
    const values = Array(100).fill(1) as (number | null)[];
    for (let k = 30; k < 45; k++) {
      values[k] = 50;
    }
    const runs = thresholdRuns(values, 10, 5);
    expect(runs).toEqual([{ start: 30, end: 44 }]);
  });

  it("ignores runs whose peak stays below the peak threshold", () => {
    const values = Array(50).fill(0) as (number | null)[];
    values[10] = 7; // above extent, below peak
    expect(thresholdRuns(values, 10, 5)).toEqual([]);
  });

  it("splits runs at gaps", () => {
    const values: (number | null)[] = [0, 20, 20, null, 20, 20, 0];
    expect(thresholdRuns(values, 10, 5)).toEqual([
      { start: 1, end: 2 },
      { start: 4, end: 5 },
    ]);
  });
});
