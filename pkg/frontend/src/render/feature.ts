import { escapeHtml, formatNum } from "../format.js";
import type { FeaturePayload, ImportanceMapJson } from "../types.js";
import { renderStrip } from "./strips.js";

// Feature page: local maps for the current point on top, then the global
// exemplars for the feature, direction switchable, annotations editable.

function mapsBlock(maps: Record<string, ImportanceMapJson>, idPrefix: string): string {
  return Object.keys(maps)
    .sort()
    .map((m) => renderStrip(m, maps[m].scores, { id: `${idPrefix}:${m}` }))
    .join("");
}

function annotationsBlock(annotations: string[]): string {
  const items = annotations
    .map((a) => `<li class="annotation">${escapeHtml(a)}</li>`)
    .join("");
  const list = annotations.length
    ? `<ul class="annotations">${items}</ul>`
    : `<p class="annotations-empty">no concepts recorded yet</p>`;
  return (
    `<div class="annotation-box">${list}` +
    `<form class="annotation-form" data-action="annotate">` +
    `<input name="concept" type="text" placeholder="name this concept" aria-label="concept"/>` +
    `<button type="submit">add concept</button></form></div>`
  );
}

export function renderFeaturePage(
  payload: FeaturePayload,
  pointIndex: number,
): string {
  const prof = payload.profile;
  const dirButtons =
    `<div class="direction-toggle">` +
    `<button data-dir="pos" aria-pressed="${prof.direction === "pos"}">max</button>` +
    `<button data-dir="neg" aria-pressed="${prof.direction === "neg"}">min</button>` +
    `</div>`;
  const header =
    `<header class="page-header"><h1>feature ${prof.feature} ` +
    `<span class="layer-note">(${escapeHtml(prof.layer)})</span></h1>` +
    annotationsBlock(payload.annotations) +
    `</header>`;
  const local =
    `<section class="panel" data-section="local"><h2>Local analysis ` +
    `<span class="point-note">point ${pointIndex}</span></h2>` +
    mapsBlock(payload.local, "local") +
    `</section>`;
  const entries = prof.top
    .map((e, i) => {
      const maps = prof.local_maps
        ? mapsBlock(prof.local_maps[i], `global:${i}`)
        : "";
      return (
        `<div class="exemplar" data-exemplar="${e.index}">` +
        `<span class="exemplar-head">#${i + 1} point ${e.index}, activation ` +
        `${formatNum(e.activation)}, label ${e.label}, predicted ${e.predicted}</span>` +
        maps +
        `</div>`
      );
    })
    .join("");
  const global =
    `<section class="panel" data-section="global"><h2>Global analysis ` +
    `<span class="direction-note">direction: ${escapeHtml(prof.direction)}</span></h2>` +
    dirButtons +
    entries +
    `</section>`;
  return `<div class="page page-feature">${header}${local}${global}</div>`;
}
