// Browser wiring: campaign picker, 2 s polling loop, label entry, what-if
// panel, and the convergence trace. All displayed numbers come from server
// payloads via verbatim(); this file only moves them into the DOM.

import { ApiClient } from "./api.js";
import { computeMarks, computeOverlay, applyMarks, verbatim } from "./render.js";
import {
  ViewState,
  initialState,
  refresh,
  selectCampaign,
  submitEnabled,
  submitLabelFlow,
  whatIfFlow,
  closeWhatIf,
} from "./state.js";

const POLL_MS = 2000;

const client = new ApiClient("");
let state: ViewState = initialState();

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function renderStatus(): void {
  const s = state.summary;
  el("status").textContent = s
    ? `${s.campaign_id} - ${s.status} - ${s.observed_count}/${s.budget} labels`
    : "no campaign selected";
  el("error").textContent = state.error ?? "";
}

function renderRecommendation(): void {
  const rec = state.summary?.recommendation ?? null;
  const panel = el("recommendation");
  if (!rec) {
    panel.textContent = state.summary ? `no recommendation (${state.summary.status})` : "";
    return;
  }
  panel.innerHTML = "";
  const head = document.createElement("div");
  head.textContent = `next inspection: point ${rec.point_id}`;
  head.className = "rec-head";
  const detail = document.createElement("div");
  detail.textContent =
    `score=${verbatim(rec.score)} prediction=${verbatim(rec.mean)} ` +
    String.fromCharCode(177) + verbatim(rec.sd);
  panel.append(head, detail);
}

function renderScatter(): void {
  if (!state.summary || !state.predictions) return;
  const svg = el<HTMLElement>("scatter") as unknown as SVGSVGElement;
  const marks = computeMarks(state.summary, state.predictions);
  const overlay = state.whatIf ? computeOverlay(state.whatIf) : [];
  applyMarks(svg, marks, overlay);
  el("x-label").textContent = state.summary.display.x_label;
  el("y-label").textContent = state.summary.display.y_label;
}

function renderTrace(): void {
  const steps = state.metrics?.steps ?? [];
  const rows = steps
    .slice(-12)
    .map(
      (s) =>
        `<tr><td>${s.step}</td><td>${s.point_id}</td><td>${verbatim(s.value)}</td>` +
        `<td>${verbatim(s.score)}</td><td>${s.smse === undefined ? "-" : verbatim(s.smse)}</td></tr>`,
    )
    .join("");
  el("trace-body").innerHTML = rows;
  const svg = el<HTMLElement>("trace-spark") as unknown as SVGSVGElement;
  while (svg.firstChild) svg.removeChild(svg.firstChild);
  const series = steps.filter((s) => s.smse !== undefined).map((s) => s.smse as number);
  if (series.length >= 2) {
    const w = 280;
    const h = 60;
    const max = series.reduce((a, b) => (b > a ? b : a), 0) || 1;
    const pts = series
      .map((v, i) => `${(i / (series.length - 1)) * w},${h - (v / max) * (h - 4)}`)
      .join(" ");
    const line = document.createElementNS("http://www.w3.org/2000/svg", "polyline");
    line.setAttribute("points", pts);
    line.setAttribute("class", "spark");
    svg.appendChild(line);
  }
}

function renderAll(): void {
  renderStatus();
  renderRecommendation();
  renderScatter();
  renderTrace();
  const submit = el<HTMLButtonElement>("submit-label");
  submit.disabled = !submitEnabled(state);
  el<HTMLButtonElement>("whatif-close").style.display = state.whatIf ? "inline" : "none";
}

async function setState(next: ViewState): Promise<void> {
  state = next;
  renderAll();
}

async function loadCampaignList(): Promise<void> {
  const listing = await client.listCampaigns();
  const select = el<HTMLSelectElement>("campaign-select");
  select.innerHTML = "";
  for (const c of listing.campaigns) {
    const option = document.createElement("option");
    option.value = c.campaign_id;
    option.textContent = `${c.campaign_id} (${c.status}, ${c.observed_count}/${c.budget})`;
    select.appendChild(option);
  }
  if (listing.campaigns.length && !state.campaignId) {
    await setState(await selectCampaign(client, state, listing.campaigns[0].campaign_id));
  }
}

function wire(): void {
  el<HTMLSelectElement>("campaign-select").addEventListener("change", async (ev) => {
    const id = (ev.target as HTMLSelectElement).value;
    await setState(await selectCampaign(client, state, id));
  });
  el<HTMLInputElement>("label-input").addEventListener("input", (ev) => {
    state = { ...state, draftLabel: (ev.target as HTMLInputElement).value };
    renderAll();
  });
  el<HTMLInputElement>("override-toggle").addEventListener("change", (ev) => {
    state = { ...state, overrideEnabled: (ev.target as HTMLInputElement).checked };
    renderAll();
  });
  el<HTMLButtonElement>("submit-label").addEventListener("click", async () => {
    const rec = state.summary?.recommendation;
    const target = el<HTMLInputElement>("target-point").value || rec?.point_id;
    if (!target) return;
    await setState(await submitLabelFlow(client, state, target));
  });
  el<HTMLButtonElement>("whatif-run").addEventListener("click", async () => {
    const point = el<HTMLInputElement>("whatif-point").value;
    const value = Number(el<HTMLInputElement>("whatif-value").value);
    if (!point || !Number.isFinite(value)) return;
    await setState(await whatIfFlow(client, state, point, value));
  });
  el<HTMLButtonElement>("whatif-close").addEventListener("click", async () => {
    await setState(closeWhatIf(state));
  });
}

async function poll(): Promise<void> {
  if (state.campaignId && !state.busy) {
    await setState(await refresh(client, state));
  }
  window.setTimeout(poll, POLL_MS);
}

wire();
loadCampaignList().then(() => poll());
