// Payload shapes of the campaign HTTP API. The client renders these
// verbatim; it never recomputes model quantities.

export interface SpaceVariable {
  name: string;
  unit: string;
  lo: number;
  hi: number;
  step: number;
}

export interface CampaignSummary {
  id: string;
  status: "ready_to_suggest" | "awaiting_results" | "finished";
  round_index: number;
  schedule: string[];
  batch_size: number;
  space: SpaceVariable[];
  observation_count: number;
  best: { condition_id: number | null; values: number[]; pce_pct: number } | null;
  window: SpaceVariable[] | null;
}

export interface PlanCondition {
  slot: number;
  values: number[];
}

export interface RoundPlan {
  round_index: number;
  method: string;
  conditions: PlanCondition[];
  variable_names: string[];
}

export interface ResultRow {
  condition_id?: number | null;
  values: number[];
  pce_pct: number | null;
  film_pass: boolean;
}

export interface ManifoldView {
  xi: number;
  xj: number;
  xi_name: string;
  xj_name: string;
  reduce: string;
  seed: number;
  xi_values: number[];
  xj_values: number[];
  matrix: number[][];
  overlays: { pass: [number, number][]; fail: [number, number][] };
}

export interface HistoryPoint {
  index: number;
  condition_id: number | null;
  round_index: number;
  pce_pct: number | null;
  film_pass: boolean;
  best_so_far: number | null;
}

export interface RoundHistogram {
  round_index: number;
  method: string;
  histograms: Record<string, { levels: number[]; counts: number[] }>;
}

export interface HistoryView {
  best_so_far: HistoryPoint[];
  rounds: RoundHistogram[];
}
