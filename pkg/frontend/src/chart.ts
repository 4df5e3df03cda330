/** Good-topic percentage over iterations, drawn as a small SVG line chart.
 * Every value comes from the fetched history records; nothing is recomputed
 * client-side. */

import type { IterationRecord } from "./types.js";

export interface ChartPoint {
  iteration: number;
  pct: number;
  x: number;
  y: number;
}

export interface ChartModel {
  width: number;
  height: number;
  points: ChartPoint[];
  /** SVG path through the points; empty string when there is nothing to draw. */
  path: string;
  /** y of the horizontal quota guide, when a quota percentage was given. */
  quotaY: number | null;
  yTicks: { pct: number; y: number }[];
}

export interface ChartOptions {
  width?: number;
  height?: number;
  pad?: number;
  /** Good-topic quota as a percentage of all topics, for the guide line. */
  quotaPct?: number | null;
}

const Y_TICK_PCTS = [0, 25, 50, 75, 100];

export function buildChart(history: IterationRecord[], options: ChartOptions = {}): ChartModel {
  const width = options.width ?? 560;
  const height = options.height ?? 180;
  const pad = options.pad ?? 28;

  const innerW = width - 2 * pad;
  const innerH = height - 2 * pad;
  const yOf = (pct: number) => height - pad - (Math.min(100, Math.max(0, pct)) / 100) * innerH;

  const iterations = history.map((r) => r.iteration);
  const maxIter = iterations.length > 0 ? Math.max(1, ...iterations) : 1;
  const xOf = (iteration: number) => pad + (iteration / maxIter) * innerW;

  const points: ChartPoint[] = history.map((record) => {
    const pct = record.metrics["tplus_pct"] ?? 0;
    return { iteration: record.iteration, pct, x: xOf(record.iteration), y: yOf(pct) };
  });

  const path = points
    .map((p, i) => `${i === 0 ? "M" : "L"} ${p.x.toFixed(1)} ${p.y.toFixed(1)}`)
    .join(" ");

  const quotaPct = options.quotaPct ?? null;
  return {
    width,
    height,
    points,
    path,
    quotaY: quotaPct === null ? null : yOf(quotaPct),
    yTicks: Y_TICK_PCTS.map((pct) => ({ pct, y: yOf(pct) })),
  };
}

const esc = (value: string) =>
  value.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");

/** Render the model to an SVG string; the caller owns DOM insertion. */
export function chartSvg(model: ChartModel): string {
  const parts: string[] = [];
  parts.push(
    `<svg class="history-chart" viewBox="0 0 ${model.width} ${model.height}" ` +
      `width="${model.width}" height="${model.height}" role="img" ` +
      `aria-label="good topics percentage by iteration">`,
  );
  for (const tick of model.yTicks) {
    parts.push(
      `<line class="grid" x1="28" x2="${model.width - 28}" y1="${tick.y.toFixed(1)}" y2="${tick.y.toFixed(1)}"/>`,
      `<text class="tick" x="24" y="${(tick.y + 3).toFixed(1)}" text-anchor="end">${tick.pct}</text>`,
    );
  }
  if (model.quotaY !== null) {
    parts.push(
      `<line class="quota" x1="28" x2="${model.width - 28}" ` +
        `y1="${model.quotaY.toFixed(1)}" y2="${model.quotaY.toFixed(1)}"/>`,
    );
  }
  if (model.path) {
    parts.push(`<path class="series" d="${esc(model.path)}" fill="none"/>`);
  }
  for (const p of model.points) {
    parts.push(
      `<circle class="pt" cx="${p.x.toFixed(1)}" cy="${p.y.toFixed(1)}" r="3">` +
        `<title>${esc(`iteration ${p.iteration}: ${p.pct.toFixed(1)}%`)}</title></circle>`,
    );
  }
  parts.push("</svg>");
  return parts.join("");
}
