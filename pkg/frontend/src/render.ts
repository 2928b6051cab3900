// Pure mark computation for the pool scatter plus helpers that format
// payload numbers for display. Numbers are rendered verbatim (String of the
// payload value); only mark geometry (position, radius, color) is scaled.

import { CampaignSummary, PredictionsPayload, WhatIfResult } from "./api.js";

export interface Mark {
  pointId: string;
  x: number; // pixel position
  y: number;
  radius: number;
  halo: number; // uncertainty halo radius, >= radius
  fill: string;
  classes: string[];
  tooltip: string;
}

export interface Frame {
  width: number;
  height: number;
  pad: number;
}

export const DEFAULT_FRAME: Frame = { width: 640, height: 420, pad: 24 };

export function verbatim(value: number | null | undefined): string {
  return value === null || value === undefined ? "-" : String(value);
}

function extent(values: number[]): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of values) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  if (!Number.isFinite(lo) || !Number.isFinite(hi)) return [0, 1];
  if (lo === hi) return [lo - 1, hi + 1];
  return [lo, hi];
}

function rescale(value: number, [lo, hi]: [number, number], out0: number, out1: number): number {
  const t = (value - lo) / (hi - lo);
  return out0 + t * (out1 - out0);
}

/** Blue-to-red color for a mean value within the given bounds. */
export function colorFor(mean: number, bounds: [number, number]): string {
  const t = Math.min(1, Math.max(0, (mean - bounds[0]) / (bounds[1] - bounds[0] || 1)));
  const r = Math.round(40 + t * 180);
  const g = Math.round(70 + (1 - Math.abs(t - 0.5) * 2) * 90);
  const b = Math.round(220 - t * 180);
  return `rgb(${r},${g},${b})`;
}

export function computeMarks(
  summary: CampaignSummary,
  predictions: PredictionsPayload,
  frame: Frame = DEFAULT_FRAME,
  colorBounds?: [number, number],
): Mark[] {
  const coords = summary.display.coords;
  const xs = extent(coords.map((c) => c[0]));
  const ys = extent(coords.map((c) => c[1]));
  const means = predictions.points.map((p) => p.mean);
  const bounds = colorBounds ?? extent(means);
  const sds = predictions.points.map((p) => p.sd);
  const maxSd = sds.reduce((a, b) => (b > a ? b : a), 0);
  const recommended = summary.recommendation?.point_id ?? null;

  return predictions.points.map((p, i) => {
    const classes = ["point"];
    if (p.observed) classes.push("observed");
    if (p.point_id === recommended) classes.push("recommended");
    const halo = maxSd > 0 ? 4 + (p.sd / maxSd) * 12 : 4;
    return {
      pointId: p.point_id,
      x: rescale(coords[i][0], xs, frame.pad, frame.width - frame.pad),
      y: rescale(coords[i][1], ys, frame.height - frame.pad, frame.pad),
      radius: p.observed ? 5 : 4,
      halo,
      fill: colorFor(p.mean, bounds),
      classes,
      tooltip: `${p.point_id}: mean=${verbatim(p.mean)} sd=${verbatim(p.sd)}`,
    };
  });
}

export interface OverlayMark {
  pointId: string;
  ringRadius: number;
  tooltip: string;
}

/** What-if overlay: ring size tracks the projected sd reduction. */
export function computeOverlay(whatIf: WhatIfResult): OverlayMark[] {
  const reductions = whatIf.points.map((p) => p.sd_reduction);
  const maxRed = reductions.reduce((a, b) => (b > a ? b : a), 0);
  return whatIf.points
    .filter((p) => p.sd_reduction > 0)
    .map((p) => ({
      pointId: p.point_id,
      ringRadius: 5 + (maxRed > 0 ? (p.sd_reduction / maxRed) * 10 : 0),
      tooltip:
        `hypothetical ${whatIf.hypothetical.point_id}=${verbatim(whatIf.hypothetical.value)}: ` +
        `${p.point_id} sd ${verbatim(p.sd)} (reduction ${verbatim(p.sd_reduction)})`,
    }));
}

const SVG_NS = "http://www.w3.org/2000/svg";

/** Apply marks to an SVG element (browser side; tests work on Mark[]). */
export function applyMarks(svg: SVGSVGElement, marks: Mark[], overlay: OverlayMark[] = []): void {
  while (svg.firstChild) svg.removeChild(svg.firstChild);
  const byId = new Map(marks.map((m) => [m.pointId, m]));
  for (const mark of marks) {
    const halo = document.createElementNS(SVG_NS, "circle");
    halo.setAttribute("cx", String(mark.x));
    halo.setAttribute("cy", String(mark.y));
    halo.setAttribute("r", String(mark.halo));
    halo.setAttribute("class", "halo");
    svg.appendChild(halo);
  }
  for (const om of overlay) {
    const base = byId.get(om.pointId);
    if (!base) continue;
    const ring = document.createElementNS(SVG_NS, "circle");
    ring.setAttribute("cx", String(base.x));
    ring.setAttribute("cy", String(base.y));
    ring.setAttribute("r", String(om.ringRadius));
    ring.setAttribute("class", "whatif-ring");
    const title = document.createElementNS(SVG_NS, "title");
    title.textContent = om.tooltip;
    ring.appendChild(title);
    svg.appendChild(ring);
  }
  for (const mark of marks) {
    const dot = document.createElementNS(SVG_NS, "circle");
    dot.setAttribute("cx", String(mark.x));
    dot.setAttribute("cy", String(mark.y));
    dot.setAttribute("r", String(mark.radius));
    dot.setAttribute("fill", mark.fill);
    dot.setAttribute("class", mark.classes.join(" "));
    dot.setAttribute("data-point-id", mark.pointId);
    const title = document.createElementNS(SVG_NS, "title");
    title.textContent = mark.tooltip;
    dot.appendChild(title);
    svg.appendChild(dot);
  }
}
