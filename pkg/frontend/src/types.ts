// JSON payload shapes served by the analysis service. Mirrors the wire
// format exactly; the UI never derives numbers beyond color mapping.

export type Stage = "U" | "C" | "Rl" | "Rg" | "P";

export const ALL_STAGES: Stage[] = ["U", "C", "Rl", "Rg", "P"];

export interface ImportanceMapJson {
  modality: string;
  method: string;
  target_class: number | null;
  scores: number[];
  details: Record<string, unknown>;
}

export interface InteractionMapJson {
  query_modality: string;
  query_atoms: number[];
  response_modality: string;
  target_class: number | null;
  mode: string;
  scores: number[];
  structural_zero: boolean;
  details: Record<string, unknown>;
  region_ranking?: string[];
}

export interface EmapJson {
  interaction_energy: number;
  per_class_energy: number[];
  sample_size: number;
}

export interface DecompositionJson {
  target_class: number;
  value: number;
  additive_value: number;
  residual_value: number;
  additive_maps: Record<string, ImportanceMapJson>;
  residual_maps: Record<string, ImportanceMapJson>;
}

export interface ClassFitJson {
  target_class: number;
  coefficients: number[];
  intercept: number;
  kkt_residual: number;
  converged: boolean;
  passes: number;
}

export interface SurrogateJson {
  lambda1: number;
  lambda2: number;
  constant_columns: number[];
  converged: boolean;
  kkt_residual: number;
  class_fits: ClassFitJson[];
  fit_split: string;
  agreement_with_model: number;
  nonzero_count: number;
}

export interface ExemplarJson {
  index: number;
  activation: number;
  label: number;
  predicted: number;
}

export interface ProfileJson {
  layer: string;
  feature: number;
  direction: string;
  top: ExemplarJson[];
  local_maps: Record<string, ImportanceMapJson>[] | null;
}

export interface RlFeatureJson {
  feature: number;
  surrogate_weight: number | null;
  maps: Record<string, ImportanceMapJson>;
}

export interface RgFeatureJson {
  feature: number;
  surrogate_weight: number | null;
  profile: ProfileJson;
}

export interface OverviewBundle {
  stages: Stage[];
  stage_order: Stage[];
  point: { split: string; index: number; label: number };
  config: Record<string, unknown>;
  target: {
    class: number;
    source: "surrogate" | "model";
    model_prediction: number;
    logits: number[];
  };
  U?: { method: string; maps: Record<string, ImportanceMapJson> };
  C?: {
    pairs: InteractionMapJson[];
    emap?: EmapJson;
    local_decomposition?: DecompositionJson;
  };
  Rl?: { layer: string; features: RlFeatureJson[] };
  Rg?: { layer: string; features: RgFeatureJson[] };
  P?: SurrogateJson;
}

export interface FeaturePayload {
  profile: ProfileJson;
  local: Record<string, ImportanceMapJson>;
  annotations: string[];
}

export interface ModalitySchemaJson {
  name: string;
  atom_count: number;
  atom_dim: number;
  kind: string;
  vocab_size: number;
}

export interface SchemaJson {
  modalities: ModalitySchemaJson[];
  num_classes: number;
  regions: Record<string, Record<string, number[]>>;
}

export interface RegistryJson {
  datasets: Record<
    string,
    { splits: Record<string, number>; schema: SchemaJson } | { error: string }
  >;
  models: Record<
    string,
    | { architecture: string; digest: string; layers: string[]; info: Record<string, unknown> }
    | { error: string }
  >;
}

export interface DatapointJson {
  modalities: Record<string, number[][]>;
  label: number;
  meta: Record<string, unknown>;
}

export interface AnnotationReply {
  layer: string;
  feature: number;
  concepts: string[];
}
