// Payload shapes for the study service API. The workbench never computes
// statistics: every number it shows comes straight from one of these fields.

export interface StudyManifest {
  format_version: number;
  study_id: string;
  created_at: string;
  seeds: Record<string, number>;
  config: {
    k: number;
    min_count: number;
    gamma: number;
    tol: number;
    max_sweeps: number;
    freq_threshold: number;
    n_rollouts: number;
    censor_mode: string;
    max_steps: number;
  };
  hashes: Record<string, string>;
}

export interface Anchor {
  trajectory_id: string;
  step_index: number;
}

export interface TreatmentEntry {
  state: number;
  rl_action: number;
  rl_action_freq: number;
  rl_action_count: number;
  common_action: number;
  common_action_freq: number;
  common_action_count: number;
  aggressiveness: number;
  state_visits: number;
  fluid_bin: number;
  vaso_bin: number;
  common_fluid_bin: number;
  common_vaso_bin: number;
  anchor: Anchor | null;
}

export interface OutcomeEntry {
  initial_state: number;
  mean_rollout_reward: number;
  observed_mean_reward: number;
  gap: number;
  n_trajectories: number;
  anchor: Anchor | null;
}

export interface Page<T> {
  entries: T[];
  total: number;
  limit: number;
  offset: number;
}

export type Terminal = "SURV" | "DEATH" | "TRUNCATED" | "DEAD_END";

export interface Rollout {
  start_state: number;
  seed: number;
  policy_tag: string;
  steps: [number, number][];
  terminal: Terminal;
  reward: number | null;
}

export interface Annotation {
  timestamp: string;
  author: string;
  text: string;
  verdict: "plausible" | "suspicious" | "implausible";
}

export interface Case {
  case_id: string;
  kind: "treatment" | "outcome";
  trajectory_id: string;
  step_index: number;
  anchor_state: number;
  seed: number;
  rollouts: Rollout[];
  annotations: Annotation[];
}

export interface TrajectoryStep {
  state: number;
  action: number;
  fluid_bin: number;
  vaso_bin: number;
  t_hours?: number;
  features?: number[];
  fluid_dose?: number;
  vaso_dose?: number;
}

export interface Trajectory {
  id: string;
  terminal: "SURV" | "DEATH" | null;
  censored: boolean;
  reward: number | null;
  record_text: string | null;
  steps: TrajectoryStep[];
}

export interface StateInfo {
  state: number;
  median_features: number[] | null;
  feature_names: string[];
}

export interface LengthReport {
  train_histogram: number[];
  rollout_histogram: number[];
  total_variation_distance: number;
  censored_fraction_train: number;
  n_train: number;
  n_rollouts: number;
  dead_end_rollouts: number;
  max_steps: number;
}

export interface StepBias {
  step: number;
  n_remaining: number;
  actual: number | null;
  actual_lo: number | null;
  actual_hi: number | null;
  predicted: number | null;
  predicted_lo: number | null;
  predicted_hi: number | null;
}

export interface TerminationReport {
  steps: StepBias[];
  overall_prefinal: StepBias;
  n_bootstrap: number;
  confidence: number;
  excluded_observations: number;
  max_steps: number;
}

export interface RareActionReport {
  top_n: number;
  n_states_used: number;
  avg_rl_action_freq: number;
  avg_rl_action_count: number;
  avg_common_action_freq: number;
  avg_common_action_count: number;
  transition_mass_fraction: number;
  common_zero_vaso_count: number;
  rl_vaso_count: number;
  rl_large_vaso_count: number;
}

export interface PopulationDischarge {
  n: number;
  frac_nonzero_vaso_at_end: number | null;
  frac_large_vaso_at_end: number | null;
}

export interface DischargeReport {
  train_uncensored_survivors: PopulationDischarge;
  train_censored_survivors: PopulationDischarge;
  rollout_survivors: PopulationDischarge;
}

export interface ApiErrorBody {
  error: { code: "not_found" | "invalid_input" | "conflict" | "internal"; message: string };
}
