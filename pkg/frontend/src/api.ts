import type {
  AnnotationReply,
  DatapointJson,
  FeaturePayload,
  InteractionMapJson,
  OverviewBundle,
  RegistryJson,
} from "./types.js";

// Thin fetch layer over the analysis service. GET responses are cached by
// URL; every call carries a sequence number so stale responses can be
// dropped by the caller.

declare global {
  interface Window {
    MVIZ_API_BASE?: string;
  }
}

const base = (): string =>
  (typeof window !== "undefined" && window.MVIZ_API_BASE) || "";

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(`${status}: ${detail}`);
  }
}

const cache = new Map<string, unknown>();

async function getJson<T>(path: string, useCache = true): Promise<T> {
  const url = base() + path;
  if (useCache && cache.has(url)) return cache.get(url) as T;
  const r = await fetch(url);
  const body = await r.json().catch(() => ({}));
  if (!r.ok) {
    throw new ApiError(r.status, (body as { detail?: string }).detail ?? r.statusText);
  }
  if (useCache) cache.set(url, body);
  return body as T;
}

async function postJson<T>(
  path: string,
  payload: unknown,
  signal?: AbortSignal,
): Promise<T> {
  const r = await fetch(base() + path, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(payload),
    signal,
  });
  const body = await r.json().catch(() => ({}));
  if (!r.ok) {
    throw new ApiError(r.status, (body as { detail?: string }).detail ?? r.statusText);
  }
  return body as T;
}

export function invalidate(prefix: string): void {
  for (const url of [...cache.keys()]) {
    if (url.includes(prefix)) cache.delete(url);
  }
}

export const api = {
  registry: () => getJson<RegistryJson>("/api/registry"),
  datapoint: (ds: string, split: string, i: number) =>
    getJson<DatapointJson>(`/api/dp/${ds}/${split}/${i}`),
  overview: (ds: string, model: string, i: number, split: string) =>
    getJson<OverviewBundle>(
      `/api/analysis/${ds}/${model}/${i}/overview?split=${split}`,
    ),
  feature: (
    ds: string,
    model: string,
    i: number,
    split: string,
    layer: string,
    feature: number,
    dir: "pos" | "neg",
  ) =>
    getJson<FeaturePayload>(
      `/api/analysis/${ds}/${model}/${i}/feature/${layer}/${feature}` +
        `?split=${split}&dir=${dir}`,
      false,
    ),
  sog: (
    ds: string,
    model: string,
    i: number,
    split: string,
    queryModality: string,
    atoms: number[],
    responseModality: string,
    signal: AbortSignal,
  ) =>
    postJson<InteractionMapJson>(
      `/api/analysis/${ds}/${model}/${i}/sog`,
      {
        split,
        query_modality: queryModality,
        query_atoms: atoms,
        response_modality: responseModality,
        mode: "absolute",
      },
      signal,
    ),
  annotate: (layer: string, feature: number, concept: string) =>
    postJson<AnnotationReply>("/api/annotations", { layer, feature, concept }),
};
