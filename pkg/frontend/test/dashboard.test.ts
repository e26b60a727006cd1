// Diagnostics dashboard contract tests: every displayed number is the
// API fixture's value, verbatim.

import { describe, expect, it } from "vitest";

import { ApiError } from "../src/api.js";
import { renderDashboard, type DashboardData } from "../src/dashboard.js";
import type {
  DischargeReport,
  LengthReport,
  RareActionReport,
  TerminationReport,
} from "../src/types.js";

import lengthFixture from "./fixtures/length.json";
import terminationFixture from "./fixtures/termination.json";
import rareActionFixture from "./fixtures/rare_action.json";
import dischargeFixture from "./fixtures/discharge.json";

const data: DashboardData = {
  length: lengthFixture as unknown as LengthReport,
  termination: terminationFixture as unknown as TerminationReport,
  rare_action: rareActionFixture as unknown as RareActionReport,
  discharge: dischargeFixture as unknown as DischargeReport,
};

function dashboard() {
  return renderDashboard(data);
}

describe("length report section", () => {
  it("renders bar heights from the exact JSON counts", () => {
    const node = dashboard();
    const report = data.length as LengthReport;
    for (const [side, counts] of [
      ["train", report.train_histogram],
      ["rollout", report.rollout_histogram],
    ] as const) {
      const bars = [...node.querySelectorAll(`svg[data-side='${side}'] rect.histogram-bar`)];
      expect(bars.map((b) => Number(b.getAttribute("data-count")))).toEqual(counts);
      const peak = Math.max(...report.train_histogram, ...report.rollout_histogram);
      bars.forEach((bar, i) => {
        expect(Number(bar.getAttribute("height"))).toBeCloseTo((counts[i] / peak) * 110, 6);
      });
    }
  });

  it("shows the TV distance and censored fraction verbatim", () => {
    const node = dashboard();
    const report = data.length as LengthReport;
    expect(
      node.querySelector("[data-field='total_variation_distance']")?.textContent,
    ).toBe(String(report.total_variation_distance));
    expect(
      node.querySelector("[data-field='censored_fraction_train']")?.textContent,
    ).toBe(String(report.censored_fraction_train));
  });
});

describe("termination report section", () => {
  it("keeps CI bands bracketing the point line", () => {
    const report = data.termination as TerminationReport;
    for (const step of report.steps) {
      for (const key of ["actual", "predicted"] as const) {
        const point = step[key];
        if (point === null) continue;
        expect(step[`${key}_lo`]).not.toBeNull();
        expect(step[`${key}_lo`]!).toBeLessThanOrEqual(point);
        expect(step[`${key}_hi`]!).toBeGreaterThanOrEqual(point);
      }
    }
    const node = dashboard();
    expect(node.querySelectorAll(".termination-chart polygon.ci-band")).toHaveLength(2);
    const rendered = [...node.querySelectorAll("circle.bias-point-actual")].map((c) =>
      Number(c.getAttribute("data-value")),
    );
    expect(rendered).toEqual(report.steps.filter((s) => s.actual !== null).map((s) => s.actual));
  });

  it("shows step-20 actual at 1.0 under terminal-reward preprocessing", () => {
    const report = data.termination as TerminationReport;
    const last = report.steps[report.steps.length - 1];
    expect(last.step).toBe(20);
    expect(last.actual).toBe(1.0);
    const node = dashboard();
    const row = node.querySelector(".bias-table tr[data-step='20']")!;
    expect(row.children[1].textContent).toBe("1.0000");
  });

  it("shows the bootstrap settings verbatim", () => {
    const node = dashboard();
    const report = data.termination as TerminationReport;
    expect(node.querySelector("[data-field='n_bootstrap']")?.textContent).toBe(
      String(report.n_bootstrap),
    );
    expect(node.querySelector("[data-field='confidence']")?.textContent).toBe(
      String(report.confidence),
    );
  });
});

describe("rare-action report section", () => {
  it("shows every statistic exactly as served", () => {
    const node = dashboard();
    const report = data.rare_action as RareActionReport;
    const fields: (keyof RareActionReport)[] = [
      "n_states_used",
      "avg_rl_action_freq",
      "avg_rl_action_count",
      "avg_common_action_freq",
      "avg_common_action_count",
      "transition_mass_fraction",
      "common_zero_vaso_count",
      "rl_vaso_count",
      "rl_large_vaso_count",
    ];
    for (const field of fields) {
      const cell = node.querySelector(`[data-field='${field}']`);
      expect(cell, field).not.toBeNull();
      expect(cell!.textContent).toBe(String(report[field]));
    }
  });
});

describe("discharge report section", () => {
  it("shows all three populations exactly as served", () => {
    const node = dashboard();
    const report = data.discharge as DischargeReport;
    for (const population of [
      "train_uncensored_survivors",
      "train_censored_survivors",
      "rollout_survivors",
    ] as const) {
      const pop = report[population];
      expect(node.querySelector(`[data-field='${population}.n']`)?.textContent).toBe(
        String(pop.n),
      );
      const nonzero = node.querySelector(
        `[data-field='${population}.frac_nonzero_vaso_at_end']`,
      );
      expect(nonzero?.textContent).toBe(
        pop.frac_nonzero_vaso_at_end === null ? "–" : String(pop.frac_nonzero_vaso_at_end),
      );
    }
  });
});

describe("missing reports", () => {
  it("names the CLI command that computes the report", () => {
    const node = renderDashboard({
      ...data,
      termination: new ApiError("not_found", "report 'termination' not in bundle", 404),
    });
    const message = node.querySelector(".report-missing[data-report='termination']");
    expect(message?.textContent).toContain("trajscope report termination");
  });
});
