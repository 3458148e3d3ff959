/** Wire types shared with the inference service (see ../docs/openapi.json). */

export interface SchemaInfo {
  classes: string[];
  n_max: number;
}

export interface HealthInfo {
  status: string;
  schema: { name: string; classes: string[]; n_max: number };
  T: number;
}

export interface ConditionItem {
  index: number;
  class?: string;
  box?: [number, number, number, number];
  size_only?: boolean;
}

export interface GenerateRequest {
  n_components: number;
  condition: ConditionItem[];
  seed?: number;
  num_samples?: number;
  edit_only?: boolean;
}

export interface WireComponent {
  class: string;
  bbox: [number, number, number, number];
}

export interface WireLayout {
  canvas: [number, number];
  components: WireComponent[];
}

export interface GenerateResponse {
  seed: number;
  layouts: WireLayout[];
}

export interface ScoreRow {
  overlap: number;
  piou: number;
  alignment: number;
  docsim?: number;
}

export interface ApiError {
  error: string;
  field?: string;
}
