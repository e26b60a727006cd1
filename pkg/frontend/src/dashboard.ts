// Diagnostics dashboard: the four bundle reports, rendered read-only with
// every number taken verbatim from the report payloads.

import { ApiError } from "./api.js";
import { biasCells, lengthHistograms, terminationChart } from "./charts.js";
import { el, formatNumber } from "./dom.js";
import type {
  DischargeReport,
  LengthReport,
  PopulationDischarge,
  RareActionReport,
  TerminationReport,
} from "./types.js";

export interface DashboardData {
  length: LengthReport | ApiError;
  termination: TerminationReport | ApiError;
  rare_action: RareActionReport | ApiError;
  discharge: DischargeReport | ApiError;
}

function missing(name: string, error: ApiError): HTMLElement {
  return el(
    "p",
    { class: "report-missing", "data-report": name },
    error.code === "not_found"
      ? `Report not computed yet. Run: trajscope report ${name} --bundle <dir>`
      : `Could not load report: ${error.code}: ${error.message}`,
  );
}

function statRow(label: string, field: string, value: number | string): HTMLElement {
  return el(
    "tr",
    {},
    el("td", {}, label),
    el("td", { class: "stat", "data-field": field }, String(value)),
  );
}

function lengthSection(report: LengthReport | ApiError): HTMLElement {
  const section = el("section", { class: "report report-length" },
    el("h3", {}, "Trajectory length distributions"));
  if (report instanceof ApiError) {
    section.append(missing("length", report));
    return section;
  }
  section.append(lengthHistograms(report));
  const table = el("table", { class: "report-stats" });
  table.append(
    statRow("total variation distance", "total_variation_distance",
            report.total_variation_distance),
    statRow("censored fraction (train)", "censored_fraction_train",
            report.censored_fraction_train),
    statRow("training trajectories", "n_train", report.n_train),
    statRow("roll-outs", "n_rollouts", report.n_rollouts),
    statRow("dead-end roll-outs", "dead_end_rollouts", report.dead_end_rollouts),
  );
  section.append(table);
  return section;
}

function terminationSection(report: TerminationReport | ApiError): HTMLElement {
  const section = el("section", { class: "report report-termination" },
    el("h3", {}, "Termination probability: actual vs predicted"));
  if (report instanceof ApiError) {
    section.append(missing("termination", report));
    return section;
  }
  section.append(terminationChart(report));
  const overall = report.overall_prefinal;
  const table = el("table", { class: "report-stats" });
  table.append(
    statRow("pre-final actual", "overall_actual", formatNumber(overall.actual, 6)),
    statRow("pre-final predicted", "overall_predicted", formatNumber(overall.predicted, 6)),
    statRow("bootstrap resamples", "n_bootstrap", report.n_bootstrap),
    statRow("confidence", "confidence", report.confidence),
  );
  const detail = el("table", { class: "bias-table" },
    el("thead", {}, el("tr", {},
      el("th", {}, "step"),
      el("th", {}, "actual"), el("th", {}, "lo"), el("th", {}, "hi"),
      el("th", {}, "predicted"), el("th", {}, "lo"), el("th", {}, "hi"),
    )),
  );
  const body = el("tbody", {});
  for (const step of report.steps) {
    const cells = biasCells(step).map((text) => el("td", {}, text));
    body.append(el("tr", { "data-step": step.step }, el("td", {}, String(step.step)), ...cells));
  }
  detail.append(body);
  section.append(table, detail);
  return section;
}

function rareActionSection(report: RareActionReport | ApiError): HTMLElement {
  const section = el("section", { class: "report report-rare-action" },
    el("h3", {}, "States with the rarest recommended actions"));
  if (report instanceof ApiError) {
    section.append(missing("rare_action", report));
    return section;
  }
  const table = el("table", { class: "report-stats" });
  table.append(
    statRow("states used", "n_states_used", report.n_states_used),
    statRow("avg policy-action frequency", "avg_rl_action_freq", report.avg_rl_action_freq),
    statRow("avg policy-action count", "avg_rl_action_count", report.avg_rl_action_count),
    statRow("avg common-action frequency", "avg_common_action_freq", report.avg_common_action_freq),
    statRow("avg common-action count", "avg_common_action_count", report.avg_common_action_count),
    statRow("share of training transitions", "transition_mass_fraction",
            report.transition_mass_fraction),
    statRow("states where common practice is zero vaso", "common_zero_vaso_count",
            report.common_zero_vaso_count),
    statRow("states where the policy gives vaso", "rl_vaso_count", report.rl_vaso_count),
    statRow("…with large doses", "rl_large_vaso_count", report.rl_large_vaso_count),
  );
  section.append(table);
  return section;
}

function dischargeRow(name: string, pop: PopulationDischarge): HTMLElement {
  const f = (v: number | null) => (v === null ? "–" : String(v));
  return el(
    "tr",
    { "data-population": name },
    el("td", {}, name.replaceAll("_", " ")),
    el("td", { class: "stat", "data-field": `${name}.n` }, String(pop.n)),
    el("td", { class: "stat", "data-field": `${name}.frac_nonzero_vaso_at_end` },
       f(pop.frac_nonzero_vaso_at_end)),
    el("td", { class: "stat", "data-field": `${name}.frac_large_vaso_at_end` },
       f(pop.frac_large_vaso_at_end)),
  );
}

function dischargeSection(report: DischargeReport | ApiError): HTMLElement {
  const section = el("section", { class: "report report-discharge" },
    el("h3", {}, "Survivors still on vasopressors at the final step"));
  if (report instanceof ApiError) {
    section.append(missing("discharge", report));
    return section;
  }
  const table = el("table", { class: "discharge-table" },
    el("thead", {}, el("tr", {},
      el("th", {}, "population"),
      el("th", {}, "n"),
      el("th", {}, "nonzero vaso"),
      el("th", {}, "large vaso"),
    )),
    el("tbody", {},
      dischargeRow("train_uncensored_survivors", report.train_uncensored_survivors),
      dischargeRow("train_censored_survivors", report.train_censored_survivors),
      dischargeRow("rollout_survivors", report.rollout_survivors),
    ),
  );
  section.append(table);
  return section;
}

export function renderDashboard(data: DashboardData): HTMLElement {
  return el(
    "section",
    { class: "dashboard" },
    el("h2", {}, "Diagnostics"),
    lengthSection(data.length),
    terminationSection(data.termination),
    rareActionSection(data.rare_action),
    dischargeSection(data.discharge),
  );
}
