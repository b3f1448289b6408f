import { escapeHtml } from "../format.js";
import type { InteractionMapJson, SchemaJson } from "../types.js";
import { renderStrip } from "./strips.js";

// Live interaction request: pick query atoms in one modality, submit, and
// the returned map over the response modality renders with rank badges on
// the two strongest atoms.

export interface SogSelection {
  queryModality: string;
  atoms: ReadonlySet<number>;
  responseModality: string;
}

export function renderSogForm(schema: SchemaJson, sel: SogSelection): string {
  const query = schema.modalities.find((m) => m.name === sel.queryModality);
  const modalityOptions = (selected: string) =>
    schema.modalities
      .map(
        (m) =>
          `<option value="${escapeHtml(m.name)}"${m.name === selected ? " selected" : ""}>` +
          `${escapeHtml(m.name)}</option>`,
      )
      .join("");
  const boxes = query
    ? Array.from({ length: query.atom_count }, (_, i) => {
        const checked = sel.atoms.has(i) ? " checked" : "";
        return (
          `<label class="atom-pick"><input type="checkbox" data-sog-atom="${i}"${checked}/>` +
          `${i}</label>`
        );
      }).join("")
    : "";
  const disabled = sel.atoms.size === 0 ? " disabled" : "";
  return (
    `<form class="sog-form" data-action="sog-submit">` +
    `<label>query <select data-sog-query>${modalityOptions(sel.queryModality)}</select></label>` +
    `<span class="atom-picks">${boxes}</span>` +
    `<label>response <select data-sog-response>${modalityOptions(sel.responseModality)}</select></label>` +
    `<button type="submit"${disabled}>compute interaction</button>` +
    `</form>`
  );
}

export function renderSogResult(map: InteractionMapJson): string {
  const title =
    `${map.query_modality} atoms [${map.query_atoms.join(", ")}] → ` +
    `${map.response_modality} (${map.mode}` +
    (map.target_class === null ? "" : `, class ${map.target_class}`) +
    `)`;
  const zero = map.structural_zero || map.scores.every((s) => s === 0);
  const body = zero
    ? renderStrip(map.response_modality, map.scores, { id: "sog" }) +
      `<p class="no-interaction">no interaction detected</p>`
    : renderStrip(map.response_modality, map.scores, { id: "sog", badges: true });
  return (
    `<div class="sog-result"><h3>${escapeHtml(title)}</h3>${body}</div>`
  );
}

export function renderSogTimeout(): string {
  return (
    `<div class="banner timeout-banner" role="alert">` +
    `interaction request timed out after 10 s</div>`
  );
}
