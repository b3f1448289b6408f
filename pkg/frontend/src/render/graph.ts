import { signColor } from "../color.js";
import { formatNum } from "../format.js";
import type { SurrogateJson } from "../types.js";

// Class -> feature graph for the prediction panel: each shown class links
// to its five largest-weight features, the weight printed on the line.
// Selecting which five is display ordering; the numbers shown are the
// fit's coefficients verbatim.

export const GRAPH_TOP_K = 5;

export interface GraphClass {
  cls: number;
  tag: string; // "predicted" | "true"
}

/** Feature ids ranked by |coefficient|, ties toward the lower id. */
export function topWeighted(coefficients: number[], k: number): number[] {
  return coefficients
    .map((c, i) => ({ a: Math.abs(c), i }))
    .sort((x, y) => y.a - x.a || x.i - y.i)
    .slice(0, k)
    .map((e) => e.i);
}

const ROW = 46;
const CLASS_X = 80;
const FEATURE_X = 340;
const TOP = 30;

export function renderClassGraph(
  fit: SurrogateJson,
  classes: GraphClass[],
): string {
  const edges: { cls: number; feature: number; weight: number }[] = [];
  const featureOrder: number[] = [];
  for (const { cls } of classes) {
    const cf = fit.class_fits[cls];
    if (!cf) continue;
    for (const j of topWeighted(cf.coefficients, GRAPH_TOP_K)) {
      edges.push({ cls, feature: j, weight: cf.coefficients[j] });
      if (!featureOrder.includes(j)) featureOrder.push(j);
    }
  }
  const rows = Math.max(classes.length, featureOrder.length, 1);
  const height = TOP + rows * ROW;
  const classY = (i: number) => TOP + (i + 0.5) * ((rows * ROW) / classes.length);
  const featY = (i: number) => TOP + (i + 0.5) * ((rows * ROW) / Math.max(featureOrder.length, 1));

  const parts: string[] = [];
  for (const e of edges) {
    const ci = classes.findIndex((c) => c.cls === e.cls);
    const fi = featureOrder.indexOf(e.feature);
    const y1 = classY(ci);
    const y2 = featY(fi);
    const mx = (CLASS_X + FEATURE_X) / 2;
    const my = (y1 + y2) / 2;
    parts.push(
      `<line x1="${CLASS_X}" y1="${y1}" x2="${FEATURE_X}" y2="${y2}" ` +
        `stroke="${signColor(e.weight)}" stroke-width="1.5" data-edge="${e.cls}:${e.feature}"/>`,
      `<text x="${mx}" y="${my - 4}" class="edge-label" text-anchor="middle" ` +
        `data-edge-label="${e.cls}:${e.feature}">${formatNum(e.weight)}</text>`,
    );
  }
  classes.forEach((c, i) => {
    const y = classY(i);
    parts.push(
      `<circle cx="${CLASS_X}" cy="${y}" r="14" class="class-node" data-class-node="${c.cls}"/>`,
      `<text x="${CLASS_X}" y="${y + 4}" text-anchor="middle" class="node-text">${c.cls}</text>`,
      `<text x="${CLASS_X}" y="${y + 28}" text-anchor="middle" class="node-tag">${c.tag}</text>`,
    );
  });
  featureOrder.forEach((j, i) => {
    const y = featY(i);
    parts.push(
      `<circle cx="${FEATURE_X}" cy="${y}" r="12" class="feature-node" data-feature="${j}"/>`,
      `<text x="${FEATURE_X}" y="${y + 4}" text-anchor="middle" class="node-text" data-feature="${j}">f${j}</text>`,
    );
  });
  return (
    `<svg class="class-graph" viewBox="0 0 420 ${height}" width="420" height="${height}" ` +
    `role="img" aria-label="class to feature weights">${parts.join("")}</svg>`
  );
}
