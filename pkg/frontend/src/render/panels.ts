import { escapeHtml } from "../format.js";
import type { Stage } from "../types.js";

export const STAGE_TITLES: Record<Stage, string> = {
  U: "Unimodal importance",
  C: "Cross-modal interactions",
  Rl: "Local feature analysis",
  Rg: "Global feature analysis",
  P: "Prediction weights",
};

/**
 * Panel shell. With the stage off (toggle or absent from the bundle) the
 * body is a placeholder and carries nothing derived from stage JSON.
 */
export function stagePanel(stage: Stage, on: boolean, body: string): string {
  if (!on) {
    return (
      `<section class="panel placeholder" data-stage-panel="${stage}" data-state="off">` +
      `<h2>${STAGE_TITLES[stage]}</h2><p class="disabled-note">stage disabled</p></section>`
    );
  }
  return (
    `<section class="panel" data-stage-panel="${stage}" data-state="on">` +
    `<h2>${STAGE_TITLES[stage]}</h2>${body}</section>`
  );
}

/** 4xx/5xx and transport failures render a visible panel, never a blank. */
export function renderError(status: number | string, detail: string): string {
  return (
    `<div class="error-panel" role="alert">` +
    `<strong>request failed (${escapeHtml(String(status))})</strong>` +
    `<span class="error-detail">${escapeHtml(detail)}</span></div>`
  );
}
