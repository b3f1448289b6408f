import { divergingColor, mapBound } from "../color.js";
import { escapeHtml, formatNum } from "../format.js";

// Heat strip: one colored cell per atom, signed diverging scale centered
// on 0, bounds = max |score| of this map (noted on screen).

export interface StripOptions {
  /** Rank badges on the top-2 nonzero atoms (for live interaction maps). */
  badges?: boolean;
  /** data- attribute namespace so tests can address a strip. */
  id?: string;
}

/** Indices of the top-2 atoms by |score|, ties toward the lower index. */
export function topTwo(scores: number[]): number[] {
  const order = scores
    .map((s, i) => ({ a: Math.abs(s), i }))
    .sort((x, y) => y.a - x.a || x.i - y.i);
  return order
    .filter((e) => e.a > 0)
    .slice(0, 2)
    .map((e) => e.i);
}

export function renderStrip(
  label: string,
  scores: number[],
  opts: StripOptions = {},
): string {
  const bound = mapBound(scores);
  const ranks = opts.badges ? topTwo(scores) : [];
  const cells = scores
    .map((s, i) => {
      const color = divergingColor(s, bound);
      const rank = ranks.indexOf(i);
      const badge =
        rank >= 0
          ? `<span class="badge rank${rank + 1}" data-rank="${rank + 1}">${rank + 1}</span>`
          : "";
      return (
        `<span class="cell" data-atom="${i}" style="background:${color}" ` +
        `title="atom ${i}: ${formatNum(s)}">${badge}<span class="cell-index">${i}</span></span>`
      );
    })
    .join("");
  const idAttr = opts.id ? ` data-strip="${escapeHtml(opts.id)}"` : "";
  return (
    `<div class="strip"${idAttr}>` +
    `<span class="strip-label">${escapeHtml(label)}</span>` +
    `<span class="strip-cells">${cells}</span>` +
    `<span class="scale-note">scale &plusmn;${formatNum(bound)}</span>` +
    `</div>`
  );
}
