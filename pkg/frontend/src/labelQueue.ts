/** Keyboard-driven labeling queue: shows a random unlabeled well, number keys
 * assign classes, undo restores the previous label of the last labeled well. */

import { ApiClient } from "./api.js";

export interface LabelQueueOptions {
  endpoint: string;
  classes: string[];
  seed?: number;
}

interface UndoEntry {
  wellId: string;
  previousLabel: string | null;
}

export class LabelQueueView {
  readonly root: HTMLElement;
  private image: HTMLImageElement;
  private scrubber: HTMLInputElement;
  private status: HTMLElement;
  private keyHelp: HTMLElement;
  private banner: HTMLElement;
  private undoStack: UndoEntry[] = [];
  private labeled = 0;
  private currentWell: string | null = null;
  private labels = new Map<string, string>();
  private posting = false; // single in-flight label mutation
  private keyListener: (event: KeyboardEvent) => void;

  constructor(
    private api: ApiClient,
    private options: LabelQueueOptions,
    doc: Document = document
  ) {
    this.root = doc.createElement("section");
    this.root.className = "label-queue";

    this.banner = doc.createElement("div");
    this.banner.className = "banner hidden";
    this.root.appendChild(this.banner);

    this.status = doc.createElement("div");
    this.status.className = "queue-status";
    this.root.appendChild(this.status);

    this.image = doc.createElement("img");
    this.image.className = "well-frame";
    this.image.alt = "well frame";
    this.root.appendChild(this.image);

    this.scrubber = doc.createElement("input");
    this.scrubber.type = "range";
    this.scrubber.min = "0";
    this.scrubber.max = "0";
    this.scrubber.value = "0";
    this.scrubber.addEventListener("input", () => this.showFrame());
    this.root.appendChild(this.scrubber);

    this.keyHelp = doc.createElement("div");
    this.keyHelp.className = "key-help";
    this.keyHelp.textContent = this.options.classes
      .map((cls, i) => `[${i + 1}] ${cls}`)
      .concat(["[u] undo"])
      .join("   ");
    this.root.appendChild(this.keyHelp);

    this.keyListener = (event) => this.onKey(event);
    this.root.tabIndex = 0;
    this.root.addEventListener("keydown", this.keyListener);
  }

  async start(nFrames = 1): Promise<void> {
    this.scrubber.max = String(Math.max(nFrames - 1, 0));
    await this.advance();
  }

  private async advance(): Promise<void> {
    try {
      const next = await this.api.nextUnlabeled(
        this.options.seed ?? 0,
        this.options.endpoint
      );
      this.banner.classList.add("hidden");
      if (next === null) {
        this.currentWell = null;
        this.image.removeAttribute("src");
        this.status.textContent = `All wells labeled (${this.labeled} in this session).`;
        this.root.classList.add("complete");
        return;
      }
      this.currentWell = next.well_id;
      this.status.textContent = `well ${next.well_id} — ${next.remaining} unlabeled`;
      this.showFrame();
    } catch (err) {
      this.showBanner(`service unreachable: ${(err as Error).message}`);
    }
  }

  private showFrame(): void {
    if (this.currentWell !== null) {
      this.image.src = this.api.frameUrl(
        this.currentWell,
        Number(this.scrubber.value)
      );
    }
  }

  private showBanner(message: string): void {
    this.banner.textContent = `${message} — press r to retry`;
    this.banner.classList.remove("hidden");
  }

  private onKey(event: KeyboardEvent): void {
    if (event.key === "u") {
      void this.undo();
      return;
    }
    if (event.key === "r") {
      void this.advance();
      return;
    }
    const index = Number(event.key) - 1;
    if (Number.isInteger(index) && index >= 0 && index < this.options.classes.length) {
      void this.assign(this.options.classes[index]);
    }
  }

  private async assign(cls: string): Promise<void> {
    if (this.currentWell === null || this.posting) {
      return;
    }
    this.posting = true;
    const wellId = this.currentWell;
    try {
      const previous = this.labels.get(wellId) ?? null;
      await this.api.label(wellId, this.options.endpoint, cls);
      this.undoStack.push({ wellId, previousLabel: previous });
      this.labels.set(wellId, cls);
      this.labeled += 1;
      await this.advance();
    } catch (err) {
      this.showBanner((err as Error).message);
    } finally {
      this.posting = false;
    }
  }

  private async undo(): Promise<void> {
    const entry = this.undoStack.pop();
    if (!entry || this.posting) {
      return;
    }
    this.posting = true;
    try {
      if (entry.previousLabel !== null) {
        await this.api.label(entry.wellId, this.options.endpoint, entry.previousLabel);
        this.labels.set(entry.wellId, entry.previousLabel);
      }
      // show the well again so the analyst can relabel it
      this.currentWell = entry.wellId;
      this.labeled = Math.max(this.labeled - 1, 0);
      this.root.classList.remove("complete");
      this.status.textContent = `well ${entry.wellId} — undo`;
      this.showFrame();
    } catch (err) {
      this.showBanner((err as Error).message);
    } finally {
      this.posting = false;
    }
  }
}
