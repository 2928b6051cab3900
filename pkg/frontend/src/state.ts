// View state and the flows that mutate it. Flows only talk to the server
// through the ApiClient; every state change follows a server acknowledgment.

import {
  ApiClient,
  ApiRequestError,
  CampaignSummary,
  MetricsPayload,
  PredictionsPayload,
  WhatIfResult,
} from "./api.js";

export interface ViewState {
  campaignId: string | null;
  summary: CampaignSummary | null;
  predictions: PredictionsPayload | null;
  metrics: MetricsPayload | null;
  whatIf: WhatIfResult | null;
  draftLabel: string;
  overrideEnabled: boolean;
  error: string | null;
  busy: boolean;
}

export function initialState(): ViewState {
  return {
    campaignId: null,
    summary: null,
    predictions: null,
    metrics: null,
    whatIf: null,
    draftLabel: "",
    overrideEnabled: false,
    error: null,
    busy: false,
  };
}

export function draftIsNumeric(draft: string): boolean {
  if (draft.trim() === "") return false;
  return Number.isFinite(Number(draft));
}

export function submitEnabled(state: ViewState): boolean {
  return (
    !state.busy &&
    state.summary !== null &&
    state.summary.status === "active" &&
    draftIsNumeric(state.draftLabel)
  );
}

function describeError(err: unknown): string {
  if (err instanceof ApiRequestError) {
    // surface the server's message verbatim
    return `${err.body.code}: ${err.body.message}`;
  }
  return err instanceof Error ? `network error: ${err.message}` : String(err);
}

export async function refresh(client: ApiClient, state: ViewState): Promise<ViewState> {
  if (!state.campaignId) return state;
  try {
    const [summary, predictions, metrics] = await Promise.all([
      client.getCampaign(state.campaignId),
      client.getPredictions(state.campaignId),
      client.getMetrics(state.campaignId),
    ]);
    return { ...state, summary, predictions, metrics, error: null };
  } catch (err) {
    return { ...state, error: describeError(err) };
  }
}

export async function selectCampaign(
  client: ApiClient,
  state: ViewState,
  campaignId: string,
): Promise<ViewState> {
  return refresh(client, { ...initialState(), campaignId });
}

/**
 * Submit the drafted label for `pointId`.
 *
 * Optimistic lock: the submitted point must still be the pending
 * recommendation unless the operator explicitly enabled override.  On
 * conflict the server error is surfaced verbatim and state is re-fetched.
 */
export async function submitLabelFlow(
  client: ApiClient,
  state: ViewState,
  pointId: string,
): Promise<ViewState> {
  if (!state.campaignId || !state.summary) return state;
  if (!draftIsNumeric(state.draftLabel)) {
    return { ...state, error: "label must be numeric before submit" };
  }
  const pending = state.summary.recommendation;
  const override = state.overrideEnabled;
  if (!override && (!pending || pending.point_id !== pointId)) {
    return {
      ...state,
      error: "point is no longer the pending recommendation; enable override to submit anyway",
    };
  }
  const busyState = { ...state, busy: true, error: null };
  try {
    await client.submitLabel(state.campaignId, pointId, Number(state.draftLabel), override);
    const refreshed = await refresh(client, busyState);
    return {
      ...refreshed,
      busy: false,
      draftLabel: "",
      overrideEnabled: false,
      whatIf: null,
    };
  } catch (err) {
    const refreshed = await refresh(client, busyState);
    return { ...refreshed, busy: false, error: describeError(err) };
  }
}

/** Fetch a hypothetical-label projection; never touches campaign state. */
export async function whatIfFlow(
  client: ApiClient,
  state: ViewState,
  pointId: string,
  value: number,
): Promise<ViewState> {
  if (!state.campaignId) return state;
  try {
    const whatIf = await client.whatIf(state.campaignId, pointId, value);
    return { ...state, whatIf, error: null };
  } catch (err) {
    return { ...state, error: describeError(err) };
  }
}

export function closeWhatIf(state: ViewState): ViewState {
  return { ...state, whatIf: null };
}
