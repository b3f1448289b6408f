import { escapeHtml, formatNum } from "../format.js";
import type {
  DecompositionJson,
  ImportanceMapJson,
  OverviewBundle,
  Stage,
} from "../types.js";
import { ALL_STAGES } from "../types.js";
import { renderClassGraph } from "./graph.js";
import { stagePanel } from "./panels.js";
import { renderStrip } from "./strips.js";

// Overview page: header, stage toggles, then one panel per stage. A panel
// shows stage content only when the toggle is on AND the bundle carries
// that stage; otherwise a placeholder. Pure function of its inputs.

function mapsBlock(maps: Record<string, ImportanceMapJson>, idPrefix: string): string {
  return Object.keys(maps)
    .sort()
    .map((m) => renderStrip(m, maps[m].scores, { id: `${idPrefix}:${m}` }))
    .join("");
}

function renderU(bundle: OverviewBundle): string {
  const u = bundle.U!;
  return (
    `<p class="method-note">method: ${escapeHtml(u.method)}</p>` +
    mapsBlock(u.maps, "U")
  );
}

function decompositionBlock(d: DecompositionJson): string {
  const line =
    `<p class="decomp-values">value ${formatNum(d.value)} = additive ` +
    `${formatNum(d.additive_value)} + interaction ${formatNum(d.residual_value)}</p>`;
  return (
    `<div class="decomposition">${line}` +
    `<h4>additive part</h4>` +
    mapsBlock(d.additive_maps, "C:add") +
    `<h4>interaction part</h4>` +
    mapsBlock(d.residual_maps, "C:res") +
    `</div>`
  );
}

function renderC(bundle: OverviewBundle): string {
  const c = bundle.C!;
  const pairs = c.pairs
    .map((p) => {
      const title = `${p.query_modality} atoms [${p.query_atoms.join(", ")}] → ${p.response_modality}`;
      const zero = p.structural_zero
        ? `<p class="no-interaction">no interaction detected (structurally zero)</p>`
        : "";
      const regions = p.region_ranking
        ? `<p class="region-ranking">regions by response: ${p.region_ranking
            .map((r) => escapeHtml(r))
            .join(" &gt; ")}</p>`
        : "";
      return (
        `<div class="pair" data-pair="${p.query_modality}:${p.response_modality}">` +
        `<h3>${escapeHtml(title)}</h3>` +
        renderStrip(p.response_modality, p.scores, {
          id: `C:${p.query_modality}:${p.response_modality}`,
        }) +
        zero +
        regions +
        `</div>`
      );
    })
    .join("");
  const emap = c.emap
    ? `<p class="emap-line">interaction energy ${formatNum(c.emap.interaction_energy)} ` +
      `over ${c.emap.sample_size} points (per class: ${c.emap.per_class_energy
        .map(formatNum)
        .join(", ")})</p>`
    : "";
  const decomp = c.local_decomposition
    ? decompositionBlock(c.local_decomposition)
    : "";
  return pairs + emap + decomp;
}

function featureLink(feature: number, layer: string): string {
  return (
    `<button class="feature-link" data-feature-link="${feature}" ` +
    `data-layer="${escapeHtml(layer)}">feature ${feature}</button>`
  );
}

function renderRl(bundle: OverviewBundle): string {
  const rl = bundle.Rl!;
  const entries = rl.features
    .map((f) => {
      const w =
        f.surrogate_weight === null
          ? ""
          : `<span class="weight-note">surrogate weight ${formatNum(f.surrogate_weight)}</span>`;
      return (
        `<div class="feature-entry" data-rl-feature="${f.feature}">` +
        `<h3>${featureLink(f.feature, rl.layer)} ${w}</h3>` +
        mapsBlock(f.maps, `Rl:${f.feature}`) +
        `</div>`
      );
    })
    .join("");
  return `<p class="layer-note">layer: ${escapeHtml(rl.layer)}</p>` + entries;
}

function renderRg(bundle: OverviewBundle): string {
  const rg = bundle.Rg!;
  const entries = rg.features
    .map((f) => {
      const prof = f.profile;
      const w =
        f.surrogate_weight === null
          ? ""
          : `<span class="weight-note">surrogate weight ${formatNum(f.surrogate_weight)}</span>`;
      const rows = prof.top
        .map((e, i) => {
          const maps = prof.local_maps
            ? mapsBlock(prof.local_maps[i], `Rg:${f.feature}:${i}`)
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
      return (
        `<div class="feature-entry" data-rg-feature="${f.feature}">` +
        `<h3>${featureLink(f.feature, rg.layer)} ${w} ` +
        `<span class="direction-note">direction: ${escapeHtml(prof.direction)}</span></h3>` +
        rows +
        `</div>`
      );
    })
    .join("");
  return `<p class="layer-note">layer: ${escapeHtml(rg.layer)}</p>` + entries;
}

function renderP(bundle: OverviewBundle): string {
  const p = bundle.P!;
  const classes = [{ cls: bundle.target.class, tag: "predicted" }];
  if (bundle.point.label !== bundle.target.class) {
    classes.push({ cls: bundle.point.label, tag: "true" });
  }
  const summary =
    `<p class="fit-summary">surrogate (&lambda;1 ${formatNum(p.lambda1)}, ` +
    `&lambda;2 ${formatNum(p.lambda2)}) fit on ${escapeHtml(p.fit_split)}: ` +
    `agreement ${formatNum(p.agreement_with_model)}, ` +
    `${p.nonzero_count} nonzero weights, ` +
    `KKT residual ${formatNum(p.kkt_residual)}, ` +
    `${p.converged ? "converged" : "not converged"}</p>`;
  return summary + renderClassGraph(p, classes);
}

const STAGE_BODIES: Record<Stage, (b: OverviewBundle) => string> = {
  U: renderU,
  C: renderC,
  Rl: renderRl,
  Rg: renderRg,
  P: renderP,
};

export function renderToggleBar(toggles: ReadonlySet<Stage>): string {
  const buttons = ALL_STAGES.map(
    (s) =>
      `<button class="toggle" data-stage="${s}" aria-pressed="${toggles.has(s)}">${s}</button>`,
  ).join("");
  return `<nav class="toggle-bar" aria-label="stage toggles">${buttons}</nav>`;
}

export function renderOverview(
  bundle: OverviewBundle,
  toggles: ReadonlySet<Stage>,
): string {
  const t = bundle.target;
  const predicted =
    `predicted class ${t.class} (${t.source})` +
    (t.model_prediction !== t.class ? `, model says ${t.model_prediction}` : "");
  const truth =
    bundle.point.label === t.class
      ? `true class ${bundle.point.label}`
      : `<strong class="mismatch">true class ${bundle.point.label}</strong>`;
  const header =
    `<header class="page-header"><h1>point ${bundle.point.index} ` +
    `(${escapeHtml(bundle.point.split)} split)</h1>` +
    `<p class="target-line">${predicted} &middot; ${truth}</p></header>`;
  const panels = ALL_STAGES.map((s) => {
    const on = toggles.has(s) && bundle[s] !== undefined;
    return stagePanel(s, on, on ? STAGE_BODIES[s](bundle) : "");
  }).join("");
  return (
    `<div class="page page-overview">` +
    header +
    renderToggleBar(toggles) +
    panels +
    `</div>`
  );
}
