// SVG chart builders. Values are plotted exactly as served; tests assert
// the rendered data attributes against the API payloads.

import { svg } from "./dom.js";
import type { LengthReport, StepBias, Terminal, TerminationReport } from "./types.js";

export const ROLLOUT_PALETTE = [
  "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

export function rolloutColor(index: number): string {
  return ROLLOUT_PALETTE[index % ROLLOUT_PALETTE.length];
}

export interface Series {
  values: (number | null)[];
  /** x position of values[0] on the shared step axis. */
  startIndex: number;
  color: string;
  cls: string;
  terminal?: Terminal;
  dashed?: boolean;
}

interface Scale {
  x(i: number): number;
  y(v: number): number;
}

const WIDTH = 320;
const HEIGHT = 120;
const PAD = { left: 34, right: 14, top: 8, bottom: 18 };

function makeScale(xMax: number, yMin: number, yMax: number): Scale {
  const spanY = yMax - yMin || 1;
  return {
    x: (i) => PAD.left + (i / Math.max(xMax, 1)) * (WIDTH - PAD.left - PAD.right),
    y: (v) => HEIGHT - PAD.bottom - ((v - yMin) / spanY) * (HEIGHT - PAD.top - PAD.bottom),
  };
}

function pathFor(series: Series, scale: Scale): string {
  const parts: string[] = [];
  series.values.forEach((value, i) => {
    if (value === null) return;
    const x = scale.x(series.startIndex + i);
    const y = scale.y(value);
    parts.push(`${parts.length ? "L" : "M"}${x.toFixed(1)},${y.toFixed(1)}`);
  });
  return parts.join(" ");
}

export function terminalMarker(
  terminal: Terminal,
  x: number,
  y: number,
): SVGElement {
  // Green dot: survival. Red cross: mortality. Grey dot: maximum length.
  if (terminal === "DEATH") {
    const group = svg("g", { class: "terminal terminal-death", "data-terminal": terminal });
    const arm = 4;
    group.append(
      svg("line", { x1: x - arm, y1: y - arm, x2: x + arm, y2: y + arm, stroke: "#d62728", "stroke-width": 2 }),
      svg("line", { x1: x - arm, y1: y + arm, x2: x + arm, y2: y - arm, stroke: "#d62728", "stroke-width": 2 }),
    );
    return group;
  }
  const fill = terminal === "SURV" ? "#2ca02c" : "#9e9e9e";
  const cls = terminal === "SURV" ? "terminal terminal-surv" : "terminal terminal-truncated";
  return svg("circle", { class: cls, "data-terminal": terminal, cx: x, cy: y, r: 4, fill });
}

export interface SeriesPanelOptions {
  title: string;
  xMax: number;
  referenceRange?: [number, number];
  yLabel?: string;
}

export function seriesPanel(seriesList: Series[], options: SeriesPanelOptions): SVGElement {
  const finite = seriesList.flatMap((s) => s.values.filter((v): v is number => v !== null));
  if (options.referenceRange) finite.push(...options.referenceRange);
  const yMin = finite.length ? Math.min(...finite) : 0;
  const yMax = finite.length ? Math.max(...finite) : 1;
  const scale = makeScale(options.xMax, yMin, yMax);

  const root = svg("svg", {
    class: "series-panel",
    width: WIDTH,
    height: HEIGHT,
    "data-title": options.title,
  });
  root.append(
    svg("text", { x: PAD.left, y: PAD.top + 4, class: "panel-title", "font-size": 10 }, options.title),
  );
  if (options.referenceRange) {
    const [lo, hi] = options.referenceRange;
    for (const bound of [lo, hi]) {
      root.append(
        svg("line", {
          class: "reference-range",
          x1: scale.x(0), x2: scale.x(options.xMax),
          y1: scale.y(bound), y2: scale.y(bound),
          stroke: "#d62728", "stroke-dasharray": "3,3", "stroke-width": 0.8, opacity: 0.7,
        }),
      );
    }
  }
  for (const series of seriesList) {
    const path = pathFor(series, scale);
    if (!path) continue;
    root.append(
      svg("path", {
        class: series.cls,
        d: path,
        fill: "none",
        stroke: series.color,
        "stroke-width": 1.5,
        "stroke-dasharray": series.dashed ? "4,3" : null,
      }),
    );
    if (series.terminal) {
      let lastIdx = -1;
      series.values.forEach((v, i) => {
        if (v !== null) lastIdx = i;
      });
      if (lastIdx >= 0) {
        const value = series.values[lastIdx] as number;
        root.append(
          terminalMarker(series.terminal, scale.x(series.startIndex + lastIdx), scale.y(value)),
        );
      }
    }
  }
  return root;
}

export function lengthHistograms(report: LengthReport): HTMLElement {
  const container = document.createElement("div");
  container.className = "length-histograms";
  const peak = Math.max(...report.train_histogram, ...report.rollout_histogram, 1);
  const specs: [string, number[], string][] = [
    ["Training trajectories", report.train_histogram, "train"],
    ["Model-based roll-outs (behavior policy)", report.rollout_histogram, "rollout"],
  ];
  for (const [title, counts, side] of specs) {
    const panel = svg("svg", {
      class: `histogram histogram-${side}`,
      width: 300,
      height: 140,
      "data-side": side,
    });
    panel.append(svg("text", { x: 8, y: 12, "font-size": 10 }, title));
    const barWidth = 280 / counts.length;
    counts.forEach((count, i) => {
      const h = (count / peak) * 110;
      panel.append(
        svg("rect", {
          class: "histogram-bar",
          "data-length": i + 1,
          "data-count": count,
          x: 10 + i * barWidth,
          y: 130 - h,
          width: Math.max(barWidth - 1.5, 1),
          height: h,
          fill: side === "train" ? "#1f77b4" : "#ff7f0e",
        }),
      );
    });
    container.append(panel);
  }
  return container;
}

export function terminationChart(report: TerminationReport): SVGElement {
  const width = 420;
  const height = 180;
  const pad = { left: 40, right: 12, top: 10, bottom: 22 };
  const steps = report.steps;
  const peak = Math.max(
    ...steps.flatMap((s) => [s.actual_hi ?? 0, s.predicted_hi ?? 0]),
    0.05,
  );
  const x = (step: number) =>
    pad.left + ((step - 1) / Math.max(report.max_steps - 1, 1)) * (width - pad.left - pad.right);
  const y = (v: number) => height - pad.bottom - (v / peak) * (height - pad.top - pad.bottom);

  const root = svg("svg", {
    class: "termination-chart",
    width,
    height,
    "data-n-bootstrap": report.n_bootstrap,
  });

  const drawSeries = (
    key: "actual" | "predicted",
    color: string,
  ) => {
    const present = steps.filter((s) => s[key] !== null);
    const band = present.filter(
      (s) => s[`${key}_lo`] !== null && s[`${key}_hi`] !== null,
    );
    if (band.length > 1) {
      const upper = band.map((s) => `${x(s.step).toFixed(1)},${y(s[`${key}_hi`] as number).toFixed(1)}`);
      const lower = [...band]
        .reverse()
        .map((s) => `${x(s.step).toFixed(1)},${y(s[`${key}_lo`] as number).toFixed(1)}`);
      root.append(
        svg("polygon", {
          class: `ci-band ci-${key}`,
          points: [...upper, ...lower].join(" "),
          fill: color,
          opacity: 0.2,
        }),
      );
    }
    const points = present
      .map((s) => `${x(s.step).toFixed(1)},${y(s[key] as number).toFixed(1)}`)
      .join(" ");
    root.append(
      svg("polyline", {
        class: `bias-line bias-${key}`,
        points,
        fill: "none",
        stroke: color,
        "stroke-width": 1.8,
      }),
    );
    present.forEach((s) => {
      root.append(
        svg("circle", {
          class: `bias-point bias-point-${key}`,
          "data-step": s.step,
          "data-value": s[key] as number,
          cx: x(s.step),
          cy: y(s[key] as number),
          r: 2,
          fill: color,
        }),
      );
    });
  };
  drawSeries("actual", "#1f77b4");
  drawSeries("predicted", "#ff7f0e");
  root.append(
    svg("text", { x: pad.left, y: height - 6, "font-size": 9 },
        "blue: actual proportion terminating; orange: model-predicted probability"),
  );
  return root;
}

export function biasCells(step: StepBias): string[] {
  const f = (v: number | null) => (v === null ? "–" : v.toFixed(4));
  return [f(step.actual), f(step.actual_lo), f(step.actual_hi),
          f(step.predicted), f(step.predicted_lo), f(step.predicted_hi)];
}
