// Case view contract tests: one series per roll-out plus the black actual
// series, terminal markers by outcome, controls wired to handlers.

import { describe, expect, it, vi } from "vitest";

import { deriveCaseView, renderCaseView } from "../src/caseview.js";
import type { Case, StateInfo, Trajectory } from "../src/types.js";

import caseFixture from "./fixtures/case.json";
import trajectoryFixture from "./fixtures/trajectory.json";
import statesFixture from "./fixtures/states.json";

const caseData = caseFixture as unknown as Case;
const trajectory = trajectoryFixture as unknown as Trajectory;
const states = new Map<number, StateInfo>(
  Object.entries(statesFixture as Record<string, StateInfo>).map(([k, v]) => [Number(k), v]),
);
const featureNames = [...states.values()][0].feature_names;

const handlers = { onMoreRollouts: () => {}, onAnnotate: () => {} };

function view() {
  return deriveCaseView(caseData, trajectory, states, featureNames);
}

describe("derived case view", () => {
  it("keeps series lengths equal to the underlying step counts", () => {
    const v = view();
    for (const series of v.actualFeatures) {
      expect(series.length).toBe(trajectory.steps.length);
    }
    v.rolloutFeatures.forEach((features, i) => {
      for (const series of features) {
        expect(series.length).toBe(caseData.rollouts[i].steps.length);
      }
    });
    expect(v.rolloutTerminals).toEqual(caseData.rollouts.map((r) => r.terminal));
  });

  it("uses the served cluster medians for roll-out vitals", () => {
    const v = view();
    const rollout = caseData.rollouts[0];
    const [firstState] = rollout.steps[0];
    const medians = states.get(firstState)!.median_features!;
    featureNames.forEach((_, f) => {
      expect(v.rolloutFeatures[0][f][0]).toBe(medians[f]);
    });
  });
});

describe("rendered case view", () => {
  it("renders one colored series per roll-out plus the black actual series", () => {
    const node = renderCaseView(view(), handlers);
    const firstPanel = node.querySelector(".series-panel")!;
    expect(firstPanel.querySelectorAll("path.series-actual")).toHaveLength(1);
    expect(firstPanel.querySelectorAll("path.series-rollout")).toHaveLength(
      caseData.rollouts.length,
    );
    const actual = firstPanel.querySelector("path.series-actual")!;
    expect(actual.getAttribute("stroke")).toBe("#000000");
  });

  it("marks terminals: green dot survival, red cross mortality, grey dot truncation", () => {
    const v = view();
    // The fixture mixes SURV and DEATH; force one TRUNCATED to cover Fig 4's
    // grey marker as well.
    v.rolloutTerminals[1] = "TRUNCATED";
    const node = renderCaseView(v, handlers);
    const panel = node.querySelector(".series-panel")!;
    const survivors = panel.querySelectorAll("circle.terminal-surv");
    const deaths = panel.querySelectorAll("g.terminal-death");
    const truncated = panel.querySelectorAll("circle.terminal-truncated");
    const expectedSurv = v.rolloutTerminals.filter((t) => t === "SURV").length +
      (v.actualTerminal === "SURV" ? 1 : 0);
    expect(survivors).toHaveLength(expectedSurv);
    expect(deaths.length).toBeGreaterThanOrEqual(1);
    expect(truncated).toHaveLength(1);
    expect(truncated[0].getAttribute("fill")).toBe("#9e9e9e");
  });

  it("renders a panel per feature plus the two action panels", () => {
    const node = renderCaseView(view(), handlers);
    const titles = [...node.querySelectorAll(".series-panel")].map((p) =>
      p.getAttribute("data-title"),
    );
    expect(titles).toEqual([...featureNames, "fluid dose bin", "vasopressor dose bin"]);
  });

  it("requests five more roll-outs from the control", () => {
    const onMoreRollouts = vi.fn();
    const node = renderCaseView(view(), { ...handlers, onMoreRollouts });
    (node.querySelector("button.more-rollouts") as HTMLButtonElement).click();
    expect(onMoreRollouts).toHaveBeenCalledTimes(1);
  });

  it("shows existing annotations and posts new ones with the chosen verdict", () => {
    const onAnnotate = vi.fn();
    const node = renderCaseView(view(), { ...handlers, onAnnotate });
    const notes = [...node.querySelectorAll("ul.annotations li")];
    expect(notes).toHaveLength(caseData.annotations.length);
    expect(notes[0].textContent).toContain(caseData.annotations[0].author);
    expect(notes[0].textContent).toContain(caseData.annotations[0].text);

    (node.querySelector(".annotation-author") as HTMLInputElement).value = "dr-ui";
    (node.querySelector(".annotation-text") as HTMLTextAreaElement).value = "odd course";
    (node.querySelector("button.verdict-implausible") as HTMLButtonElement).click();
    expect(onAnnotate).toHaveBeenCalledWith("dr-ui", "odd course", "implausible");
  });

  it("shows the record text panel", () => {
    const node = renderCaseView(view(), handlers);
    const pre = node.querySelector(".record-text pre")!;
    expect(pre.textContent).toBe(
      trajectory.record_text ?? "(no record text supplied)",
    );
  });
});
