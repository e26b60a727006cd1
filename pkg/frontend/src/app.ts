// Workbench shell: hash routing over the ranking views, the case list,
// individual case views, and the diagnostics dashboard.

import { ApiError, StudyClient } from "./api.js";
import { deriveCaseView, renderCaseView } from "./caseview.js";
import { renderDashboard, type DashboardData } from "./dashboard.js";
import { clear, el } from "./dom.js";
import { renderOutcomeTable, renderTreatmentTable, type RankingHandlers } from "./rankings.js";
import type { Anchor, Case, StateInfo } from "./types.js";

const PAGE_SIZE = 25;

export class Workbench {
  private seedCounter = 1;

  constructor(
    private readonly client: StudyClient,
    private readonly mount: HTMLElement,
  ) {}

  async route(hash: string): Promise<void> {
    const [view, arg] = hash.replace(/^#\/?/, "").split("/");
    try {
      if (view === "outcomes") await this.showOutcomes(Number(arg) || 0);
      else if (view === "cases" && arg) await this.showCase(arg);
      else if (view === "cases") await this.showCaseList();
      else if (view === "diagnostics") await this.showDiagnostics();
      else await this.showTreatments(Number(arg) || 0);
    } catch (error) {
      this.showError(error);
    }
  }

  private swap(node: HTMLElement): void {
    clear(this.mount);
    this.mount.append(node);
  }

  private showError(error: unknown): void {
    const message =
      error instanceof ApiError ? `${error.code}: ${error.message}` : String(error);
    this.swap(el("p", { class: "error" }, message));
  }

  private rankingHandlers(kind: "treatment" | "outcome"): RankingHandlers {
    return {
      onOpen: (caseKind, anchor) => void this.openCase(caseKind, anchor),
      onPage: (offset) => {
        window.location.hash = `#/${kind === "treatment" ? "treatments" : "outcomes"}/${offset}`;
      },
    };
  }

  private async showTreatments(offset: number): Promise<void> {
    const page = await this.client.treatmentRanking(PAGE_SIZE, offset);
    this.swap(renderTreatmentTable(page, this.rankingHandlers("treatment")));
  }

  private async showOutcomes(offset: number): Promise<void> {
    const page = await this.client.outcomeRanking(PAGE_SIZE, offset);
    this.swap(renderOutcomeTable(page, this.rankingHandlers("outcome")));
  }

  private async openCase(kind: "treatment" | "outcome", anchor: Anchor): Promise<void> {
    try {
      const created = await this.client.createCase(kind, anchor, {
        seed: Date.now() % 1_000_000,
      });
      window.location.hash = `#/cases/${created.case_id}`;
    } catch (error) {
      if (error instanceof ApiError && error.code === "conflict") {
        // The case already exists; find it by anchor and open it.
        const listing = await this.client.cases();
        const existing = listing.cases.find(
          (c) =>
            c.kind === kind &&
            c.trajectory_id === anchor.trajectory_id &&
            c.step_index === anchor.step_index,
        );
        if (existing) {
          window.location.hash = `#/cases/${existing.case_id}`;
          return;
        }
      }
      this.showError(error);
    }
  }

  private async showCaseList(): Promise<void> {
    const listing = await this.client.cases();
    const root = el("section", { class: "case-list" }, el("h2", {}, "Cases"));
    if (listing.cases.length === 0) {
      root.append(el("p", { class: "empty-state" },
        "No cases yet. Open one from a ranking row."));
    }
    const list = el("ul", {});
    for (const c of listing.cases) {
      const link = el("a", { href: `#/cases/${c.case_id}` },
        `${c.case_id} (${c.rollouts.length} roll-outs, ${c.annotations.length} notes)`);
      list.append(el("li", {}, link));
    }
    root.append(list);
    this.swap(root);
  }

  private async statesFor(caseData: Case): Promise<Map<number, StateInfo>> {
    const ids = new Set<number>();
    for (const rollout of caseData.rollouts) {
      for (const [state] of rollout.steps) ids.add(state);
    }
    const entries = await Promise.all(
      [...ids].map(async (id) => [id, await this.client.state(id)] as const),
    );
    return new Map(entries);
  }

  async showCase(caseId: string): Promise<void> {
    const caseData = await this.client.caseById(caseId);
    const trajectory = await this.client.trajectory(caseData.trajectory_id);
    const states = await this.statesFor(caseData);
    const featureNames =
      states.values().next().value?.feature_names ??
      trajectory.steps[0]?.features?.map((_, i) => `f_${i}`) ??
      [];
    const view = deriveCaseView(caseData, trajectory, states, featureNames);
    const node = renderCaseView(view, {
      onMoreRollouts: () => {
        void this.client
          .addRollouts(caseId, 5, Date.now() % 1_000_000 + this.seedCounter++)
          .then(() => this.showCase(caseId))
          .catch((error) => this.showError(error));
      },
      onAnnotate: (author, text, verdict) => {
        void this.client
          .annotate(caseId, author, text, verdict)
          .then(() => this.showCase(caseId))
          .catch(async (error) => {
            if (error instanceof ApiError && error.code === "conflict") {
              // Another write landed first: reload the case and ask to retry.
              await this.showCase(caseId);
              window.alert("The case changed while you were writing; please retry.");
              return;
            }
            this.showError(error);
          });
      },
    });
    this.swap(node);
  }

  private async showDiagnostics(): Promise<void> {
    const fetchReport = async <N extends "length" | "termination" | "rare_action" | "discharge">(
      name: N,
    ) => {
      try {
        return await this.client.report(name);
      } catch (error) {
        if (error instanceof ApiError) return error;
        throw error;
      }
    };
    const data: DashboardData = {
      length: await fetchReport("length"),
      termination: await fetchReport("termination"),
      rare_action: await fetchReport("rare_action"),
      discharge: await fetchReport("discharge"),
    };
    this.swap(renderDashboard(data));
  }
}

export function bootstrap(): void {
  const mount = document.getElementById("app");
  if (!mount) throw new Error("missing #app mount point");
  const nav = document.getElementById("nav");
  if (nav) {
    nav.append(
      el("a", { href: "#/treatments" }, "Treatments"),
      el("a", { href: "#/outcomes" }, "Outcomes"),
      el("a", { href: "#/cases" }, "Cases"),
      el("a", { href: "#/diagnostics" }, "Diagnostics"),
    );
  }
  const workbench = new Workbench(new StudyClient(""), mount);
  window.addEventListener("hashchange", () => void workbench.route(window.location.hash));
  void workbench.route(window.location.hash);
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  bootstrap();
}
