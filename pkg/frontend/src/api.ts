// Typed client for the campaign service JSON API. Every number shown in the
// UI comes from these payloads untouched; the client adds no arithmetic.

export interface Recommendation {
  point_id: string;
  index: number;
  features: number[];
  score: number | null;
  mean: number;
  sd: number;
}

export interface DisplayInfo {
  x_label: string;
  y_label: string;
  coords: [number, number][];
}

export interface CampaignSummary {
  campaign_id: string;
  status: "active" | "budget_exhausted" | "closed";
  budget: number;
  observed_count: number;
  config: Record<string, unknown>;
  pool_size: number;
  has_reference_labels: boolean;
  display: DisplayInfo;
  recommendation: Recommendation | null;
}

export interface CampaignListEntry {
  campaign_id: string;
  status: string;
  observed_count: number;
  budget: number;
}

export interface PredictionPoint {
  point_id: string;
  mean: number;
  sd: number;
  observed: boolean;
}

export interface PredictionsPayload {
  campaign_id: string;
  status: string;
  points: PredictionPoint[];
}

export interface StepEntry {
  step: number;
  point_id: string;
  value: number;
  override: boolean;
  score: number | null;
  wall_time: number;
  theta: Record<string, unknown>;
  smse?: number;
  cc?: number;
}

export interface MetricsPayload {
  campaign_id: string;
  status: string;
  budget: number;
  observed_count: number;
  steps: StepEntry[];
}

export interface WhatIfPoint {
  point_id: string;
  mean: number;
  sd: number;
  sd_reduction: number;
}

export interface WhatIfResult {
  campaign_id: string;
  hypothetical: { point_id: string; value: number };
  projected_recommendation: { point_id: string; score: number | null } | null;
  points: WhatIfPoint[];
  total_sd_reduction: number;
}

export interface SubmitResult {
  campaign_id: string;
  status: string;
  step: StepEntry;
  theta: Record<string, unknown>;
  recommendation: Recommendation | null;
}

export interface ApiErrorBody {
  code: string;
  message: string;
  details: Record<string, unknown>;
}

export class ApiRequestError extends Error {
  readonly status: number;
  readonly body: ApiErrorBody;

  constructor(status: number, body: ApiErrorBody) {
    super(body.message);
    this.status = status;
    this.body = body;
  }
}

async function parseError(resp: Response): Promise<ApiRequestError> {
  let body: ApiErrorBody;
  try {
    body = (await resp.json()) as ApiErrorBody;
  } catch {
    body = { code: "unknown_error", message: resp.statusText, details: {} };
  }
  return new ApiRequestError(resp.status, body);
}

export class ApiClient {
  constructor(private readonly baseUrl: string = "") {}

  private async get<T>(path: string): Promise<T> {
    const resp = await fetch(this.baseUrl + path);
    if (!resp.ok) throw await parseError(resp);
    return (await resp.json()) as T;
  }

  private async send<T>(method: string, path: string, payload?: unknown): Promise<T> {
    const resp = await fetch(this.baseUrl + path, {
      method,
      headers: { "content-type": "application/json" },
      body: payload === undefined ? undefined : JSON.stringify(payload),
    });
    if (!resp.ok) throw await parseError(resp);
    return (await resp.json()) as T;
  }

  listCampaigns(): Promise<{ campaigns: CampaignListEntry[] }> {
    return this.get("/campaigns");
  }

  getCampaign(id: string): Promise<CampaignSummary> {
    return this.get(`/campaigns/${id}`);
  }

  getRecommendation(id: string): Promise<Recommendation> {
    return this.get(`/campaigns/${id}/recommendation`);
  }

  getPredictions(id: string): Promise<PredictionsPayload> {
    return this.get(`/campaigns/${id}/predictions`);
  }

  getMetrics(id: string): Promise<MetricsPayload> {
    return this.get(`/campaigns/${id}/metrics`);
  }

  submitLabel(
    id: string,
    pointId: string,
    value: number,
    override = false,
  ): Promise<SubmitResult> {
    return this.send("POST", `/campaigns/${id}/labels`, {
      point_id: pointId,
      value,
      override,
    });
  }

  whatIf(id: string, pointId: string, value: number): Promise<WhatIfResult> {
    return this.send("POST", `/campaigns/${id}/what-if`, { point_id: pointId, value });
  }

  closeCampaign(id: string): Promise<{ campaign_id: string; status: string }> {
    return this.send("DELETE", `/campaigns/${id}`);
  }
}
