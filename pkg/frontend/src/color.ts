// Diverging color scale with the midpoint pinned at 0. The only
// arithmetic the UI performs: map bound and per-cell color.

const NEUTRAL = { r: 248, g: 248, b: 248 };
const POSITIVE = { r: 203, g: 54, b: 44 }; // red end
const NEGATIVE = { r: 42, g: 86, b: 178 }; // blue end

/** Scale bound for one map: max |score|, the per-map normalization. */
export function mapBound(scores: number[]): number {
  let b = 0;
  for (const s of scores) {
    const a = Math.abs(s);
    if (a > b) b = a;
  }
  return b;
}

function mix(t: number, end: { r: number; g: number; b: number }): string {
  const r = Math.round(NEUTRAL.r + (end.r - NEUTRAL.r) * t);
  const g = Math.round(NEUTRAL.g + (end.g - NEUTRAL.g) * t);
  const b = Math.round(NEUTRAL.b + (end.b - NEUTRAL.b) * t);
  return `rgb(${r},${g},${b})`;
}

/**
 * Color for a signed value on a scale symmetric about 0 with the given
 * bound. Zero (or a zero bound, i.e. an all-zero map) is neutral.
 */
export function divergingColor(value: number, bound: number): string {
  if (bound <= 0 || value === 0) return mix(0, POSITIVE);
  const t = Math.min(1, Math.abs(value) / bound);
  return value > 0 ? mix(t, POSITIVE) : mix(t, NEGATIVE);
}

/** Edge stroke for the class graph: sign only, fixed saturation. */
export function signColor(value: number): string {
  if (value === 0) return "rgb(160,160,160)";
  return value > 0 ? mix(1, POSITIVE) : mix(1, NEGATIVE);
}
