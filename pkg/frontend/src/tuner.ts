/** Live segmentation preview: sliders re-fetch the overlay frame with the
 * current parameters; "apply" persists them to the project. Superseded
 * overlay loads are canceled by the browser when the image source changes. */

import { ApiClient, SegmentationParams } from "./api.js";

const DEFAULTS: SegmentationParams = {
  rMin: 20,
  rMax: 30,
  accumThreshold: 500,
  grayMin: 50,
  grayMax: 200,
};

interface SliderSpec {
  key: keyof SegmentationParams;
  label: string;
  min: number;
  max: number;
}

const SLIDERS: SliderSpec[] = [
  { key: "rMin", label: "radius min", min: 5, max: 60 },
  { key: "rMax", label: "radius max", min: 5, max: 60 },
  { key: "accumThreshold", label: "vote threshold", min: 50, max: 2000 },
  { key: "grayMin", label: "interior gray min", min: 0, max: 255 },
  { key: "grayMax", label: "interior gray max", min: 0, max: 255 },
];

export class SegmentationTunerView {
  readonly root: HTMLElement;
  readonly params: SegmentationParams = { ...DEFAULTS };
  private image: HTMLImageElement;
  private inputs = new Map<keyof SegmentationParams, HTMLInputElement>();
  private wellSelect: HTMLSelectElement;
  private frame = 0;
  private applyButton: HTMLButtonElement;
  private message: HTMLElement;

  constructor(
    private api: ApiClient,
    doc: Document = document
  ) {
    this.root = doc.createElement("section");
    this.root.className = "tuner";

    this.wellSelect = doc.createElement("select");
    this.wellSelect.className = "well-select";
    this.wellSelect.addEventListener("change", () => this.refresh());
    this.root.appendChild(this.wellSelect);

    this.image = doc.createElement("img");
    this.image.className = "overlay-frame";
    this.image.alt = "segmentation preview";
    this.root.appendChild(this.image);

    const controls = doc.createElement("div");
    controls.className = "sliders";
    for (const spec of SLIDERS) {
      const row = doc.createElement("label");
      row.textContent = spec.label;
      const input = doc.createElement("input");
      input.type = "range";
      input.min = String(spec.min);
      input.max = String(spec.max);
      input.value = String(this.params[spec.key]);
      input.dataset.param = spec.key;
      input.addEventListener("input", () => {
        this.setParam(spec.key, Number(input.value));
      });
      this.inputs.set(spec.key, input);
      row.appendChild(input);
      controls.appendChild(row);
    }
    this.root.appendChild(controls);

    this.applyButton = doc.createElement("button");
    this.applyButton.textContent = "apply to project";
    this.applyButton.addEventListener("click", () => void this.apply());
    this.root.appendChild(this.applyButton);

    this.message = doc.createElement("div");
    this.message.className = "tuner-message";
    this.root.appendChild(this.message);
  }

  async start(): Promise<void> {
    const wells = await this.api.listWells();
    for (const well of wells.filter((w) => w.has_image)) {
      const option = this.wellSelect.ownerDocument.createElement("option");
      option.value = well.well_id;
      option.textContent = well.well_id;
      this.wellSelect.appendChild(option);
    }
    this.refresh();
  }

  /** Set one parameter; an invalid range (min > max) is rejected and the
   * slider snapped back instead of being sent to the service. */
  setParam(key: keyof SegmentationParams, value: number): void {
    const next = { ...this.params, [key]: value };
    if (next.rMin > next.rMax || next.grayMin > next.grayMax) {
      const input = this.inputs.get(key);
      if (input) {
        input.value = String(this.params[key]);
      }
      this.message.textContent = "range minimum may not exceed maximum";
      return;
    }
    this.message.textContent = "";
    this.params[key] = value;
    this.refresh();
  }

  refresh(): void {
    const wellId = this.wellSelect.value;
    if (wellId) {
      this.image.src = this.api.frameUrl(wellId, this.frame, this.params);
    }
  }

  private async apply(): Promise<void> {
    try {
      await this.api.saveSegmentationParams(this.params);
      this.message.textContent = "parameters saved to project";
    } catch (err) {
      this.message.textContent = (err as Error).message;
    }
  }
}
