/** Typed client for the labeling / preview API. The UI holds no state of its
 * own: every mutation round-trips through these calls and re-renders from the
 * response. */

export interface WellSummary {
  well_id: string;
  factors: Record<string, unknown>;
  validity: string[];
  labels: Record<string, string>;
  predictions: Record<string, [string, number]>;
  has_image: boolean;
  n_features: number;
}

export interface QueueEntry {
  well_id: string;
  remaining: number;
}

export interface TrainResult {
  endpoint: string;
  features: string[];
  model_version: number;
  relevance: { features: string[]; score: number }[] | null;
  cv: { error_mean: number; error_std: number };
}

export interface MovementMatrix {
  n_eggs: number;
  n_frames: number;
  values: (number | null)[][];
}

export interface SegmentationParams {
  rMin: number;
  rMax: number;
  accumThreshold: number;
  grayMin: number;
  grayMax: number;
}

async function asJson<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = await response.json();
      detail = JSON.stringify(body.detail ?? body);
    } catch {
      /* not json */
    }
    throw new Error(`${response.status}: ${detail}`);
  }
  return response.json() as Promise<T>;
}

export class ApiClient {
  constructor(private base: string = "") {}

  async listWells(filter = ""): Promise<WellSummary[]> {
    const q = filter ? `?filter=${encodeURIComponent(filter)}` : "";
    const body = await asJson<{ wells: WellSummary[] }>(
      await fetch(`${this.base}/api/wells${q}`)
    );
    return body.wells;
  }

  /** URL of a raw or segmentation-overlaid frame; used as an <img> source so
   * the browser cancels superseded loads on its own. */
  frameUrl(wellId: string, frame: number, params?: SegmentationParams): string {
    const url = new URLSearchParams();
    if (params) {
      url.set("overlay", "segmentation");
      url.set("radius", `${params.rMin}:${params.rMax}`);
      url.set("accum_threshold", String(params.accumThreshold));
      url.set("gray_min", String(params.grayMin));
      url.set("gray_max", String(params.grayMax));
    }
    const q = url.toString();
    return `${this.base}/api/wells/${encodeURIComponent(wellId)}/frame/${frame}${
      q ? "?" + q : ""
    }`;
  }

  async label(wellId: string, endpoint: string, label: string): Promise<WellSummary> {
    return asJson<WellSummary>(
      await fetch(`${this.base}/api/wells/${encodeURIComponent(wellId)}/label`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ endpoint, label }),
      })
    );
  }

  /** Next unlabeled well, or null when the queue is exhausted (204). */
  async nextUnlabeled(seed: number, endpoint: string): Promise<QueueEntry | null> {
    const response = await fetch(
      `${this.base}/api/label-queue?strategy=random&seed=${seed}&endpoint=${encodeURIComponent(endpoint)}`
    );
    if (response.status === 204) {
      return null;
    }
    return asJson<QueueEntry>(response);
  }

  async train(endpoint: string, folds = 5): Promise<TrainResult> {
    return asJson<TrainResult>(
      await fetch(`${this.base}/api/train`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ endpoint, folds }),
      })
    );
  }

  async movementIndex(): Promise<MovementMatrix> {
    return asJson<MovementMatrix>(await fetch(`${this.base}/api/movement-index`));
  }

  async saveSegmentationParams(params: SegmentationParams): Promise<void> {
    await asJson(
      await fetch(`${this.base}/api/segmentation-params`, {
        method: "PUT",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({
          radius: `${params.rMin}:${params.rMax}`,
          accum_threshold: params.accumThreshold,
          gray_min: params.grayMin,
          gray_max: params.grayMax,
        }),
      })
    );
  }
}
