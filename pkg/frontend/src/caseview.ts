// Case view: the actual hospital course side by side with model-based
// roll-outs. Roll-out vitals are the cluster median features served by the
// API; the actual series comes from the recorded feature values.

import { rolloutColor, seriesPanel, type Series } from "./charts.js";
import { clear, el, formatNumber } from "./dom.js";
import { TERMINAL_LABELS } from "./api.js";
import type { Annotation, Case, StateInfo, Terminal, Trajectory } from "./types.js";

export interface CaseView {
  caseId: string;
  kind: string;
  anchorStep: number;
  featureNames: string[];
  /** Per feature: the actual values over the trajectory's steps. */
  actualFeatures: number[][];
  /** Per roll-out, per feature: cluster-median values over its steps. */
  rolloutFeatures: number[][][];
  rolloutTerminals: Terminal[];
  actualTerminal: Terminal | null;
  actualFluidBins: number[];
  actualVasoBins: number[];
  rolloutFluidBins: number[][];
  rolloutVasoBins: number[][];
  recordText: string | null;
  annotations: Annotation[];
  xMax: number;
}

export function deriveCaseView(
  caseData: Case,
  trajectory: Trajectory,
  states: Map<number, StateInfo>,
  featureNames: string[],
): CaseView {
  const nFeatures = featureNames.length;
  const actualFeatures: number[][] = Array.from({ length: nFeatures }, () => []);
  for (const step of trajectory.steps) {
    (step.features ?? []).forEach((v, f) => actualFeatures[f]?.push(v));
  }
  const median = (state: number): number[] | null =>
    states.get(state)?.median_features ?? null;

  const rolloutFeatures = caseData.rollouts.map((rollout) =>
    Array.from({ length: nFeatures }, (_, f) =>
      rollout.steps.map(([state]) => median(state)?.[f] ?? NaN),
    ),
  );
  const xMax = Math.max(
    trajectory.steps.length,
    ...caseData.rollouts.map((r) => caseData.step_index + r.steps.length),
    1,
  );
  return {
    caseId: caseData.case_id,
    kind: caseData.kind,
    anchorStep: caseData.step_index,
    featureNames,
    actualFeatures,
    rolloutFeatures,
    rolloutTerminals: caseData.rollouts.map((r) => r.terminal),
    actualTerminal: trajectory.terminal,
    actualFluidBins: trajectory.steps.map((s) => s.fluid_bin),
    actualVasoBins: trajectory.steps.map((s) => s.vaso_bin),
    rolloutFluidBins: caseData.rollouts.map((r) => r.steps.map(([, a]) => Math.floor(a / 5))),
    rolloutVasoBins: caseData.rollouts.map((r) => r.steps.map(([, a]) => a % 5)),
    recordText: trajectory.record_text,
    annotations: caseData.annotations,
    xMax,
  };
}

function featureSeries(view: CaseView, f: number): Series[] {
  const list: Series[] = [
    {
      values: view.actualFeatures[f],
      startIndex: 0,
      color: "#000000",
      cls: "series-actual",
      dashed: true,
      terminal: view.actualTerminal ?? undefined,
    },
  ];
  view.rolloutFeatures.forEach((features, i) => {
    list.push({
      values: features[f].map((v) => (Number.isNaN(v) ? null : v)),
      startIndex: view.anchorStep,
      color: rolloutColor(i),
      cls: `series-rollout series-rollout-${i}`,
      terminal: view.rolloutTerminals[i],
    });
  });
  return list;
}

function actionSeries(view: CaseView, drug: "fluid" | "vaso"): Series[] {
  const actual = drug === "fluid" ? view.actualFluidBins : view.actualVasoBins;
  const rollouts = drug === "fluid" ? view.rolloutFluidBins : view.rolloutVasoBins;
  const list: Series[] = [
    { values: actual, startIndex: 0, color: "#000000", cls: "series-actual", dashed: true },
  ];
  rollouts.forEach((bins, i) => {
    list.push({
      values: bins,
      startIndex: view.anchorStep,
      color: rolloutColor(i),
      cls: `series-rollout series-rollout-${i}`,
    });
  });
  return list;
}

export interface CaseViewHandlers {
  onMoreRollouts(): void;
  onAnnotate(author: string, text: string, verdict: Annotation["verdict"]): void;
}

export function renderCaseView(view: CaseView, handlers: CaseViewHandlers): HTMLElement {
  const root = el("section", { class: "case-view", "data-case-id": view.caseId });
  root.append(
    el(
      "header",
      {},
      el("h2", {}, `Case ${view.caseId}`),
      el(
        "p",
        { class: "case-meta" },
        `${view.kind} case, anchored at step ${view.anchorStep}; ` +
          `${view.rolloutFeatures.length} roll-outs; actual outcome: ` +
          (view.actualTerminal ? TERMINAL_LABELS[view.actualTerminal] : "censored, unlabeled"),
      ),
    ),
  );

  const panels = el("div", { class: "feature-panels" });
  view.featureNames.forEach((name, f) => {
    panels.append(seriesPanel(featureSeries(view, f), { title: name, xMax: view.xMax }));
  });
  panels.append(
    seriesPanel(actionSeries(view, "fluid"), { title: "fluid dose bin", xMax: view.xMax }),
    seriesPanel(actionSeries(view, "vaso"), { title: "vasopressor dose bin", xMax: view.xMax }),
  );
  root.append(panels);

  const more = el(
    "button",
    { class: "more-rollouts", type: "button" },
    "Generate 5 more roll-outs",
  );
  more.addEventListener("click", () => handlers.onMoreRollouts());
  root.append(more);

  root.append(
    el(
      "section",
      { class: "record-text" },
      el("h3", {}, "Record"),
      el("pre", {}, view.recordText ?? "(no record text supplied)"),
    ),
  );

  const list = el("ul", { class: "annotations" });
  for (const note of view.annotations) {
    list.append(
      el(
        "li",
        { class: `annotation verdict-${note.verdict}` },
        el("strong", {}, note.author),
        ` [${note.verdict}] ${note.text} `,
        el("time", { datetime: note.timestamp }, note.timestamp),
      ),
    );
  }

  const author = el("input", { class: "annotation-author", placeholder: "reviewer" });
  const text = el("textarea", { class: "annotation-text", placeholder: "what looks off?" });
  const form = el("div", { class: "annotation-form" }, author, text);
  for (const verdict of ["plausible", "suspicious", "implausible"] as const) {
    const button = el(
      "button",
      { class: `verdict-button verdict-${verdict}`, type: "button" },
      verdict,
    );
    button.addEventListener("click", () =>
      handlers.onAnnotate(author.value, text.value, verdict),
    );
    form.append(button);
  }
  root.append(
    el("section", { class: "annotation-section" }, el("h3", {}, "Annotations"), list, form),
  );
  return root;
}

export function updateAnnotations(root: HTMLElement, annotations: Annotation[]): void {
  const list = root.querySelector("ul.annotations");
  if (!list) return;
  clear(list);
  for (const note of annotations) {
    const item = document.createElement("li");
    item.className = `annotation verdict-${note.verdict}`;
    item.textContent = `${note.author} [${note.verdict}] ${note.text} ${note.timestamp}`;
    list.append(item);
  }
}

export function describeGap(meanRollout: number, observed: number): string {
  return `${formatNumber(meanRollout, 1)} predicted vs ${formatNumber(observed, 1)} observed`;
}
