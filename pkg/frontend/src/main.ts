import { ApiClient } from "./api.js";
import { HeatmapView } from "./heatmap.js";
import { LabelQueueView } from "./labelQueue.js";
import { SegmentationTunerView } from "./tuner.js";

const TABS: Record<string, (api: ApiClient) => { root: HTMLElement; start: () => Promise<void> }> = {
  label: (api) =>
    new LabelQueueView(api, {
      endpoint: "coagulation",
      classes: ["yes", "no"],
    }),
  tune: (api) => new SegmentationTunerView(api),
  heatmap: (api) => new HeatmapView(api),
};

function boot(): void {
  const api = new ApiClient("");
  const nav = document.getElementById("nav")!;
  const outlet = document.getElementById("outlet")!;

  const open = (name: keyof typeof TABS) => {
    outlet.innerHTML = "";
    const view = TABS[name](api);
    outlet.appendChild(view.root);
    view.start().catch((err) => {
      const banner = document.createElement("div");
      banner.className = "banner";
      banner.textContent = `failed to load ${name}: ${err}`;
      outlet.prepend(banner);
    });
    if (view.root instanceof HTMLElement) {
      view.root.focus?.();
    }
  };

  for (const name of Object.keys(TABS) as (keyof typeof TABS)[]) {
    const button = document.createElement("button");
    button.textContent = name;
    button.addEventListener("click", () => open(name));
    nav.appendChild(button);
  }
  open("label");
}

document.addEventListener("DOMContentLoaded", boot);
