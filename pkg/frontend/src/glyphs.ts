// Action-difference glyph: per flagged state, the usual-care action (green
// dot) against the policy's pick (blue cross), one mini-axis per drug on
// the 0..4 bin scale.

import { svg } from "./dom.js";
import type { TreatmentEntry } from "./types.js";

const PANEL_WIDTH = 90;
const PANEL_GAP = 18;
const HEIGHT = 22;
const PAD = 8;

export function binToX(bin: number): number {
  return PAD + (bin / 4) * (PANEL_WIDTH - 2 * PAD);
}

function cross(x: number, y: number, cls: string, attrs: Record<string, number>): SVGElement {
  const arm = 4;
  const group = svg("g", { class: cls, ...attrs });
  group.append(
    svg("line", { x1: x - arm, y1: y - arm, x2: x + arm, y2: y + arm, stroke: "#1f77b4", "stroke-width": 1.6 }),
    svg("line", { x1: x - arm, y1: y + arm, x2: x + arm, y2: y - arm, stroke: "#1f77b4", "stroke-width": 1.6 }),
  );
  return group;
}

function panel(offsetX: number, label: string, commonBin: number, rlBin: number): SVGElement {
  const y = HEIGHT / 2;
  const group = svg("g", { transform: `translate(${offsetX},0)`, "data-drug": label });
  group.append(
    svg("line", {
      x1: binToX(0), y1: y, x2: binToX(4), y2: y,
      stroke: "#ccc", "stroke-width": 1,
    }),
  );
  for (let b = 0; b <= 4; b++) {
    group.append(svg("line", { x1: binToX(b), y1: y - 2, x2: binToX(b), y2: y + 2, stroke: "#ccc" }));
  }
  group.append(
    svg("circle", {
      class: "glyph-common",
      cx: binToX(commonBin), cy: y, r: 4, fill: "#2ca02c",
      "data-bin": commonBin,
    }),
    cross(binToX(rlBin), y, "glyph-rl", { "data-bin": rlBin }),
  );
  return group;
}

export function actionDifferenceGlyph(entry: TreatmentEntry): SVGElement {
  const root = svg("svg", {
    class: "action-glyph",
    width: 2 * PANEL_WIDTH + PANEL_GAP,
    height: HEIGHT,
    "data-state": entry.state,
  });
  root.append(
    panel(0, "fluid", entry.common_fluid_bin, entry.fluid_bin),
    panel(PANEL_WIDTH + PANEL_GAP, "vaso", entry.common_vaso_bin, entry.vaso_bin),
  );
  return root;
}
