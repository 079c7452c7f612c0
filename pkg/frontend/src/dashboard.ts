// Campaign console: round table with result entry, manifold inspection,
// history charts. All state here is a projection of server responses.

import { ApiError, CampaignApi, variablePairs } from "./api.js";
import { renderBestSoFar, renderRoundHistograms } from "./charts.js";
import {
  DraftRow,
  clearDrafts,
  draftsToRows,
  loadDrafts,
  saveDrafts,
  validateDraft,
} from "./drafts.js";
import { ColorScale, matrixRange, renderHeatmap } from "./heatmap.js";
import type { CampaignSummary, ResultRow, RoundPlan } from "./types.js";

export class Dashboard {
  campaign: CampaignSummary | null = null;
  plan: RoundPlan | null = null;
  drafts: DraftRow[] = [];
  offPlanRows: ResultRow[] = [];
  allowOffPlan = false;
  colorScale: ColorScale | null = null;
  selectedPair: [number, number] = [0, 1];

  constructor(
    public api: CampaignApi,
    public root: HTMLElement,
    public storage: Storage,
  ) {}

  get doc(): Document {
    return this.root.ownerDocument;
  }

  async load(campaignId: string): Promise<void> {
    this.campaign = await this.api.getCampaign(campaignId);
    if (this.campaign.status === "awaiting_results") {
      this.plan = await this.api.currentPlan(campaignId);
      this.drafts = loadDrafts(
        this.storage,
        campaignId,
        this.plan.round_index,
        this.plan.conditions.length,
      );
    } else {
      this.plan = null;
      this.drafts = [];
    }
    this.render();
  }

  async advance(): Promise<void> {
    if (!this.campaign) return;
    try {
      this.plan = await this.api.advance(this.campaign.id);
      this.campaign = await this.api.getCampaign(this.campaign.id);
      this.drafts = loadDrafts(
        this.storage,
        this.campaign.id,
        this.plan.round_index,
        this.plan.conditions.length,
      );
      this.offPlanRows = [];
      this.render();
    } catch (err) {
      this.showError(err);
    }
  }

  async submit(): Promise<void> {
    if (!this.campaign || !this.plan) return;
    for (let i = 0; i < this.drafts.length; i++) {
      const problem = validateDraft(this.drafts[i]);
      if (problem) {
        this.showError(new Error(`row ${i}: ${problem}`), i);
        return;
      }
    }
    const rows = draftsToRows(
      this.drafts,
      this.plan.conditions.map((c) => c.values),
    ).concat(this.offPlanRows);
    try {
      this.campaign = await this.api.submitResults(
        this.campaign.id,
        rows,
        this.allowOffPlan || this.offPlanRows.length > 0,
      );
      clearDrafts(this.storage, this.campaign.id, this.plan.round_index);
      this.plan = null;
      this.offPlanRows = [];
      this.render();
      await this.refreshHistory();
    } catch (err) {
      this.showError(err);
    }
  }

  addOffPlanRow(
    values: number[],
    pce: number | null,
    filmPass: boolean,
    conditionId: number | null = null,
  ): void {
    this.offPlanRows.push({
      condition_id: conditionId,
      values,
      pce_pct: pce,
      film_pass: filmPass,
    });
    this.render();
  }

  showError(err: unknown, rowIndex?: number): void {
    const box = this.root.querySelector(".error-box") as HTMLElement | null;
    if (!box) return;
    const detail = err instanceof ApiError ? err.detail : String(err);
    const where = rowIndex !== undefined ? ` (row ${rowIndex})` : "";
    box.textContent = `${detail}${where}`;
    box.classList.add("visible");
  }

  render(): void {
    const doc = this.doc;
    this.root.textContent = "";
    if (!this.campaign) return;

    const header = doc.createElement("header");
    header.innerHTML = `
      <h1>campaign <code class="campaign-id">${this.campaign.id}</code></h1>
      <span class="status-badge" data-status="${this.campaign.status}">${this.campaign.status}</span>
      <span class="round-indicator">round ${this.campaign.round_index + 1} / ${this.campaign.schedule.length}</span>
    `;
    this.root.appendChild(header);

    const error = doc.createElement("div");
    error.className = "error-box";
    this.root.appendChild(error);

    this.root.appendChild(this.renderRoundPanel());
    this.root.appendChild(this.renderManifoldPanel());

    const historyPanel = doc.createElement("section");
    historyPanel.className = "history-panel";
    historyPanel.innerHTML = `<h2>history</h2><div class="history-charts"></div>`;
    this.root.appendChild(historyPanel);
  }

  renderRoundPanel(): HTMLElement {
    const doc = this.doc;
    const panel = doc.createElement("section");
    panel.className = "round-panel";
    const campaign = this.campaign!;

    if (campaign.status === "ready_to_suggest") {
      const btn = doc.createElement("button");
      btn.className = "advance-button";
      const method = campaign.schedule[campaign.round_index];
      btn.textContent = `plan round ${campaign.round_index + 1} (${method})`;
      btn.addEventListener("click", () => void this.advance());
      panel.appendChild(btn);
      return panel;
    }
    if (campaign.status === "finished" || !this.plan) {
      const note = doc.createElement("p");
      note.className = "finished-note";
      note.textContent =
        campaign.status === "finished"
          ? "campaign finished"
          : "no pending plan";
      panel.appendChild(note);
      return panel;
    }

    const badge = doc.createElement("span");
    badge.className = "method-badge";
    badge.textContent = this.plan.method.toUpperCase();
    panel.appendChild(badge);

    const table = doc.createElement("table");
    table.className = "plan-table";
    const head = doc.createElement("tr");
    head.innerHTML =
      "<th>#</th>" +
      this.plan.variable_names.map((n) => `<th>${n}</th>`).join("") +
      "<th>efficiency %</th><th>film pass</th>";
    table.appendChild(head);

    this.plan.conditions.forEach((cond, i) => {
      const tr = doc.createElement("tr");
      tr.className = "plan-row";
      tr.innerHTML =
        `<td>${cond.slot}</td>` +
        cond.values.map((v) => `<td>${fmt(v)}</td>`).join("");

      const pceCell = doc.createElement("td");
      const pce = doc.createElement("input");
      pce.type = "number";
      pce.step = "0.01";
      pce.className = "pce-input";
      pce.value = this.drafts[i]?.pce ?? "";
      pce.addEventListener("input", () => {
        this.drafts[i].pce = pce.value;
        this.persistDrafts();
      });
      pceCell.appendChild(pce);
      tr.appendChild(pceCell);

      const filmCell = doc.createElement("td");
      const film = doc.createElement("input");
      film.type = "checkbox";
      film.className = "film-toggle";
      film.checked = this.drafts[i]?.filmPass ?? true;
      film.addEventListener("change", () => {
        this.drafts[i].filmPass = film.checked;
        this.persistDrafts();
      });
      filmCell.appendChild(film);
      tr.appendChild(filmCell);
      table.appendChild(tr);
    });
    panel.appendChild(table);

    const controls = doc.createElement("div");
    controls.className = "submit-controls";
    const offPlanLabel = doc.createElement("label");
    const offPlan = doc.createElement("input");
    offPlan.type = "checkbox";
    offPlan.className = "allow-off-plan";
    offPlan.checked = this.allowOffPlan;
    offPlan.addEventListener("change", () => {
      this.allowOffPlan = offPlan.checked;
    });
    offPlanLabel.appendChild(offPlan);
    offPlanLabel.appendChild(doc.createTextNode(" accept off-plan rows"));
    controls.appendChild(offPlanLabel);

    const submit = doc.createElement("button");
    submit.className = "submit-button";
    submit.textContent = `submit round ${this.plan.round_index + 1} results`;
    submit.addEventListener("click", () => void this.submit());
    controls.appendChild(submit);
    panel.appendChild(controls);

    if (this.offPlanRows.length > 0) {
      const note = doc.createElement("p");
      note.className = "off-plan-note";
      note.textContent = `${this.offPlanRows.length} off-plan row(s) staged`;
      panel.appendChild(note);
    }
    return panel;
  }

  renderManifoldPanel(): HTMLElement {
    const doc = this.doc;
    const panel = doc.createElement("section");
    panel.className = "manifold-panel";
    panel.innerHTML = "<h2>response manifold</h2>";
    const pairs = variablePairs(this.campaign!.space.length);

    const select = doc.createElement("select");
    select.className = "pair-select";
    for (const [i, j] of pairs) {
      const opt = doc.createElement("option");
      opt.value = `${i},${j}`;
      opt.textContent = `${this.campaign!.space[i].name} x ${this.campaign!.space[j].name}`;
      select.appendChild(opt);
    }
    select.value = `${this.selectedPair[0]},${this.selectedPair[1]}`;
    select.addEventListener("change", () => {
      const [i, j] = select.value.split(",").map(Number);
      this.selectedPair = [i, j];
      void this.refreshManifold();
    });
    panel.appendChild(select);

    const button = doc.createElement("button");
    button.className = "manifold-refresh";
    button.textContent = "draw";
    button.addEventListener("click", () => void this.refreshManifold());
    panel.appendChild(button);

    const empty = doc.createElement("p");
    empty.className = "manifold-empty";
    empty.textContent = "model not ready: complete a measured round first";
    panel.appendChild(empty);

    const canvas = doc.createElement("canvas");
    canvas.className = "manifold-canvas";
    panel.appendChild(canvas);
    return panel;
  }

  async refreshManifold(): Promise<void> {
    if (!this.campaign) return;
    const [xi, xj] = this.selectedPair;
    const canvas = this.root.querySelector(".manifold-canvas") as HTMLCanvasElement | null;
    const empty = this.root.querySelector(".manifold-empty") as HTMLElement | null;
    if (!canvas) return;
    try {
      const view = await this.api.manifold(this.campaign.id, xi, xj);
      // fix the color scale at first draw for round-to-round comparability
      if (!this.colorScale) this.colorScale = matrixRange(view.matrix);
      renderHeatmap(canvas, view, this.colorScale);
      empty?.classList.add("hidden");
      canvas.classList.add("drawn");
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        empty?.classList.remove("hidden");
      } else {
        this.showError(err);
      }
    }
  }

  async refreshHistory(): Promise<void> {
    if (!this.campaign) return;
    const target = this.root.querySelector(".history-charts") as HTMLElement | null;
    if (!target) return;
    const history = await this.api.history(this.campaign.id);
    target.textContent = "";
    target.appendChild(renderBestSoFar(this.doc, history) as unknown as Node);
    for (const round of history.rounds) {
      target.appendChild(renderRoundHistograms(this.doc, round));
    }
  }

  persistDrafts(): void {
    if (this.campaign && this.plan) {
      saveDrafts(this.storage, this.campaign.id, this.plan.round_index, this.drafts);
    }
  }
}

function fmt(v: number): string {
  return Number.isInteger(v) ? String(v) : String(Math.round(v * 1000) / 1000);
}
