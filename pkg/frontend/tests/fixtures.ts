import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import type {
  FeaturePayload,
  InteractionMapJson,
  OverviewBundle,
} from "../src/types.js";

const here = dirname(fileURLToPath(import.meta.url));

export function fixture<T>(name: string): T {
  const raw = readFileSync(join(here, "fixtures", name), "utf8");
  return JSON.parse(raw) as T;
}

export const overviewFixture = (name: string): OverviewBundle =>
  fixture<OverviewBundle>(name);

export const featureFixture = (name: string): FeaturePayload =>
  fixture<FeaturePayload>(name);

export const sogFixture = (name: string): InteractionMapJson =>
  fixture<InteractionMapJson>(name);

/** The five stage settings, named after the bundles captured for them. */
export const ABLATIONS: { file: string; stages: string[] }[] = [
  { file: "overview_U.json", stages: ["U"] },
  { file: "overview_U_C.json", stages: ["U", "C"] },
  { file: "overview_U_C_Rl.json", stages: ["U", "C", "Rl"] },
  { file: "overview_U_C_Rl_Rg.json", stages: ["U", "C", "Rl", "Rg"] },
  { file: "overview_U_C_Rl_Rg_P.json", stages: ["U", "C", "Rl", "Rg", "P"] },
];

/** Slice one stage panel out of a rendered page. */
export function panelOf(html: string, stage: string): string {
  const start = html.indexOf(`data-stage-panel="${stage}"`);
  if (start < 0) return "";
  const open = html.lastIndexOf("<section", start);
  const end = html.indexOf("</section>", start);
  return html.slice(open, end + "</section>".length);
}
