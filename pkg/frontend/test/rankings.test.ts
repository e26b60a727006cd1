// Ranking view contract tests against recorded API fixtures: row order
// equals API order, glyphs encode the served dose bins, rows open cases.

import { describe, expect, it, vi } from "vitest";

import { renderOutcomeTable, renderTreatmentTable } from "../src/rankings.js";
import { binToX } from "../src/glyphs.js";
import type { OutcomeEntry, Page, TreatmentEntry } from "../src/types.js";

import treatmentFixture from "./fixtures/treatment.json";
import outcomeFixture from "./fixtures/outcome.json";

const treatmentPage = treatmentFixture as unknown as Page<TreatmentEntry>;
const outcomePage = outcomeFixture as unknown as Page<OutcomeEntry>;

const noop = { onOpen: () => {}, onPage: () => {} };

describe("treatment ranking table", () => {
  it("renders rows in exactly the API order", () => {
    const node = renderTreatmentTable(treatmentPage, noop);
    const states = [...node.querySelectorAll("tbody tr")].map((row) =>
      Number(row.getAttribute("data-state")),
    );
    expect(states).toEqual(treatmentPage.entries.map((e) => e.state));
  });

  it("shows the served frequency verbatim", () => {
    const node = renderTreatmentTable(treatmentPage, noop);
    const cell = node.querySelector("tbody tr .rl-freq");
    expect(cell?.textContent).toBe(treatmentPage.entries[0].rl_action_freq.toFixed(4));
  });

  it("positions glyph markers at the served dose bins", () => {
    const node = renderTreatmentTable(treatmentPage, noop);
    const entry = treatmentPage.entries[0];
    const glyph = node.querySelector(`svg.action-glyph[data-state='${entry.state}']`);
    expect(glyph).not.toBeNull();
    const panels = [...glyph!.querySelectorAll("g[data-drug]")];
    const expected: Record<string, [number, number]> = {
      fluid: [entry.common_fluid_bin, entry.fluid_bin],
      vaso: [entry.common_vaso_bin, entry.vaso_bin],
    };
    for (const panel of panels) {
      const drug = panel.getAttribute("data-drug")!;
      const [commonBin, rlBin] = expected[drug];
      const dot = panel.querySelector("circle.glyph-common")!;
      expect(Number(dot.getAttribute("data-bin"))).toBe(commonBin);
      expect(Number(dot.getAttribute("cx"))).toBeCloseTo(binToX(commonBin), 6);
      const cross = panel.querySelector("g.glyph-rl")!;
      expect(Number(cross.getAttribute("data-bin"))).toBe(rlBin);
    }
  });

  it("opens a case with the row's anchor on click", () => {
    const onOpen = vi.fn();
    const node = renderTreatmentTable(treatmentPage, { ...noop, onOpen });
    (node.querySelector("tbody tr.clickable") as HTMLElement).click();
    expect(onOpen).toHaveBeenCalledWith("treatment", treatmentPage.entries[0].anchor);
  });

  it("shows an empty-state message when nothing qualifies", () => {
    const node = renderTreatmentTable(
      { entries: [], total: 0, limit: 25, offset: 0 },
      noop,
    );
    expect(node.querySelector(".empty-state")?.textContent).toMatch(/No states flagged/);
    expect(node.querySelector("table")).toBeNull();
  });
});

describe("outcome ranking table", () => {
  it("renders rows in exactly the API order with verbatim gaps", () => {
    const node = renderOutcomeTable(outcomePage, noop);
    const rows = [...node.querySelectorAll("tbody tr")];
    expect(rows.map((r) => Number(r.getAttribute("data-state")))).toEqual(
      outcomePage.entries.map((e) => e.initial_state),
    );
    rows.forEach((row, i) => {
      expect(row.querySelector(".gap")?.textContent).toBe(
        outcomePage.entries[i].gap.toFixed(2),
      );
    });
  });

  it("pages forward from the current offset", () => {
    const onPage = vi.fn();
    const paged: Page<OutcomeEntry> = { ...outcomePage, limit: 1, total: 5, offset: 1 };
    const node = renderOutcomeTable(paged, { ...noop, onPage });
    const buttons = [...node.querySelectorAll("nav.pager button")] as HTMLButtonElement[];
    buttons[0].click(); // previous
    buttons[1].click(); // next
    expect(onPage).toHaveBeenNthCalledWith(1, 0);
    expect(onPage).toHaveBeenNthCalledWith(2, 2);
  });
});
