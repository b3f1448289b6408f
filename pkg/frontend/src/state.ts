import type { Stage } from "./types.js";
import { ALL_STAGES } from "./types.js";

// View state: where the user is and which stages are visible. Toggles
// persist for the session; everything else lives in the URL hash.

export type Page =
  | { kind: "overview" }
  | { kind: "feature"; layer: string; feature: number };

export interface ViewState {
  dataset: string;
  model: string;
  split: string;
  index: number;
  page: Page;
  toggles: Set<Stage>;
  direction: "pos" | "neg";
}

const TOGGLE_KEY = "mviz.toggles";

export function loadToggles(): Set<Stage> {
  try {
    const raw = sessionStorage.getItem(TOGGLE_KEY);
    if (raw) {
      const parsed = JSON.parse(raw) as string[];
      const valid = parsed.filter((s): s is Stage =>
        (ALL_STAGES as string[]).includes(s),
      );
      return new Set(valid);
    }
  } catch {
    // storage unavailable: fall through to the default
  }
  return new Set(ALL_STAGES);
}

export function saveToggles(toggles: ReadonlySet<Stage>): void {
  try {
    sessionStorage.setItem(TOGGLE_KEY, JSON.stringify([...toggles]));
  } catch {
    // best effort only
  }
}

/** #/overview/ds/model/split/i or #/feature/ds/model/split/i/layer/j */
export function parseHash(hash: string): Partial<ViewState> | null {
  const parts = hash.replace(/^#\/?/, "").split("/").filter(Boolean);
  if (parts.length === 0) return null;
  if (parts[0] === "overview" && parts.length === 5) {
    const index = Number(parts[4]);
    if (!Number.isInteger(index) || index < 0) return null;
    return {
      dataset: decodeURIComponent(parts[1]),
      model: decodeURIComponent(parts[2]),
      split: decodeURIComponent(parts[3]),
      index,
      page: { kind: "overview" },
    };
  }
  if (parts[0] === "feature" && parts.length === 7) {
    const index = Number(parts[4]);
    const feature = Number(parts[6]);
    if (!Number.isInteger(index) || index < 0) return null;
    if (!Number.isInteger(feature) || feature < 0) return null;
    return {
      dataset: decodeURIComponent(parts[1]),
      model: decodeURIComponent(parts[2]),
      split: decodeURIComponent(parts[3]),
      index,
      page: { kind: "feature", layer: decodeURIComponent(parts[5]), feature },
    };
  }
  return null;
}

export function toHash(v: ViewState): string {
  const base = [
    encodeURIComponent(v.dataset),
    encodeURIComponent(v.model),
    encodeURIComponent(v.split),
    String(v.index),
  ].join("/");
  if (v.page.kind === "feature") {
    return `#/feature/${base}/${encodeURIComponent(v.page.layer)}/${v.page.feature}`;
  }
  return `#/overview/${base}`;
}
