// Paged ranking tables for both selection heuristics. Rows render in the
// order served; clicking a row opens (or creates) its inspection case.

import { el, formatNumber } from "./dom.js";
import { actionDifferenceGlyph } from "./glyphs.js";
import type { Anchor, OutcomeEntry, Page, TreatmentEntry } from "./types.js";

export interface RankingHandlers {
  onOpen(kind: "treatment" | "outcome", anchor: Anchor): void;
  onPage(offset: number): void;
}

function pager(page: Page<unknown>, handlers: RankingHandlers): HTMLElement {
  const previous = el("button", { type: "button", disabled: page.offset === 0 }, "Previous");
  previous.addEventListener("click", () =>
    handlers.onPage(Math.max(0, page.offset - page.limit)),
  );
  const next = el(
    "button",
    { type: "button", disabled: page.offset + page.limit >= page.total },
    "Next",
  );
  next.addEventListener("click", () => handlers.onPage(page.offset + page.limit));
  const label = `${page.total === 0 ? 0 : page.offset + 1}–${Math.min(
    page.offset + page.entries.length,
    page.total,
  )} of ${page.total}`;
  return el("nav", { class: "pager" }, previous, el("span", {}, label), next);
}

export function renderTreatmentTable(
  page: Page<TreatmentEntry>,
  handlers: RankingHandlers,
): HTMLElement {
  const root = el("section", { class: "ranking ranking-treatment" });
  root.append(el("h2", {}, "Surprisingly aggressive treatments"));
  if (page.total === 0) {
    root.append(
      el("p", { class: "empty-state" },
         "No states flagged: no policy action is both rare and more aggressive than usual care."),
    );
    return root;
  }
  const table = el("table", {},
    el("thead", {},
      el("tr", {},
        el("th", {}, "state"),
        el("th", {}, "policy action frequency"),
        el("th", {}, "policy / common counts"),
        el("th", {}, "visits"),
        el("th", {}, "common dot vs policy cross"),
      ),
    ),
  );
  const body = el("tbody", {});
  for (const entry of page.entries) {
    const row = el("tr", { class: "ranking-row", "data-state": entry.state });
    row.append(
      el("td", {}, String(entry.state)),
      el("td", { class: "rl-freq" }, formatNumber(entry.rl_action_freq)),
      el("td", {}, `${entry.rl_action_count} / ${entry.common_action_count}`),
      el("td", {}, String(entry.state_visits)),
      el("td", {}, actionDifferenceGlyph(entry)),
    );
    if (entry.anchor) {
      const anchor = entry.anchor;
      row.classList.add("clickable");
      row.addEventListener("click", () => handlers.onOpen("treatment", anchor));
    }
    body.append(row);
  }
  table.append(body);
  root.append(table, pager(page, handlers));
  return root;
}

export function renderOutcomeTable(
  page: Page<OutcomeEntry>,
  handlers: RankingHandlers,
): HTMLElement {
  const root = el("section", { class: "ranking ranking-outcome" });
  root.append(el("h2", {}, "Surprisingly positive predicted outcomes"));
  if (page.total === 0) {
    root.append(
      el("p", { class: "empty-state" },
         "No ranked initial states: the test set produced no scoreable trajectories."),
    );
    return root;
  }
  const table = el("table", {},
    el("thead", {},
      el("tr", {},
        el("th", {}, "initial state"),
        el("th", {}, "gap"),
        el("th", {}, "mean roll-out reward"),
        el("th", {}, "observed mean reward"),
        el("th", {}, "trajectories"),
      ),
    ),
  );
  const body = el("tbody", {});
  for (const entry of page.entries) {
    const row = el("tr", { class: "ranking-row", "data-state": entry.initial_state });
    row.append(
      el("td", {}, String(entry.initial_state)),
      el("td", { class: "gap" }, formatNumber(entry.gap, 2)),
      el("td", {}, formatNumber(entry.mean_rollout_reward, 2)),
      el("td", {}, formatNumber(entry.observed_mean_reward, 2)),
      el("td", {}, String(entry.n_trajectories)),
    );
    if (entry.anchor) {
      const anchor = entry.anchor;
      row.classList.add("clickable");
      row.addEventListener("click", () => handlers.onOpen("outcome", anchor));
    }
    body.append(row);
  }
  table.append(body);
  root.append(table, pager(page, handlers));
  return root;
}
