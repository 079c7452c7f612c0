// Server-state equivalence: results entered through the dashboard must
// land exactly like a CLI ingestion of the same CSV.

import { execFileSync } from "node:child_process";
import { readFileSync } from "node:fs";
import { join } from "node:path";
import { beforeAll, describe, expect, it } from "vitest";

import { CampaignApi } from "../src/api.js";
import { Dashboard } from "../src/dashboard.js";
import type { ResultRow } from "../src/types.js";

const BASE = () => process.env.PROCOPT_TEST_BASE_URL!;
const WORKDIR = () => process.env.PROCOPT_TEST_WORKDIR!;

interface CsvRow {
  condition_id: string;
  values: number[];
  pce: string;
  filmPass: boolean;
}

function parseObservationCsv(text: string): CsvRow[] {
  const lines = text.trim().split("\n");
  const rows: CsvRow[] = [];
  for (const line of lines.slice(1)) {
    const parts = line.split(",");
    rows.push({
      condition_id: parts[0],
      values: parts.slice(1, 7).map(Number),
      pce: parts[7],
      filmPass: parts[8] === "true",
    });
  }
  return rows;
}

describe("dashboard entry vs CLI ingestion", () => {
  let fixture: CsvRow[];

  beforeAll(() => {
    fixture = parseObservationCsv(
      readFileSync(join(WORKDIR(), "round0.csv"), "utf-8"),
    );
  });

  it("produces identical server state for the first-round data", async () => {
    const api = new CampaignApi(BASE());

    // --- path A: the dashboard flow against the live server
    const created = await api.createCampaign({ seed: 0 });
    const root = document.createElement("div");
    document.body.appendChild(root);
    const dash = new Dashboard(api, root, window.localStorage);
    await dash.load(created.id);
    (root.querySelector(".advance-button") as HTMLButtonElement).click();
    await new Promise((r) => setTimeout(r, 1500));
    expect(dash.plan).not.toBeNull();

    // the measured conditions are the historical ones, not this plan's
    // suggestions: stage them as off-plan rows, as an operator would
    dash.drafts = [];
    (dash as unknown as { plan: { conditions: unknown[] } }).plan!.conditions = [];
    for (const row of fixture) {
      dash.addOffPlanRow(
        row.values,
        row.pce === "" ? null : Number(row.pce),
        row.filmPass,
        Number(row.condition_id),
      );
    }
    dash.allowOffPlan = true;
    await dash.submit();
    expect(dash.campaign!.observation_count).toBe(fixture.length);
    const uiState = await api.getCampaign(created.id);
    const uiExport = await api.exportCsv(created.id);

    // --- path B: CLI ingestion of the same CSV into an equal campaign
    const statePath = join(WORKDIR(), "cli-campaign.json");
    execFileSync("procopt", ["campaign", "new", statePath, "--seed", "0"]);
    execFileSync("procopt", [
      "campaign", "suggest", statePath, "--out", join(WORKDIR(), "plan.csv"),
    ]);
    execFileSync("procopt", [
      "campaign", "ingest", statePath, join(WORKDIR(), "round0.csv"),
      "--allow-off-plan",
    ]);
    const cliExportPath = join(WORKDIR(), "cli-export.csv");
    execFileSync("procopt", [
      "campaign", "export", statePath, "--out", cliExportPath,
    ]);
    const cliExport = readFileSync(cliExportPath, "utf-8");
    const cliState = JSON.parse(
      readFileSync(statePath, "utf-8"),
    ) as { round_index: number; status: string; observations: unknown[] };

    // identical stored observations, round position and status
    expect(uiExport).toBe(cliExport);
    expect(uiState.round_index).toBe(cliState.round_index);
    expect(uiState.status).toBe(cliState.status);
    expect(uiState.observation_count).toBe(cliState.observations.length);
  });

  it("accepts a blank efficiency with a failed film through the table", async () => {
    const api = new CampaignApi(BASE());
    const created = await api.createCampaign({ seed: 7 });
    const plan = await api.advance(created.id);
    const rows: ResultRow[] = plan.conditions.map((c, i) => ({
      condition_id: i,
      values: c.values,
      pce_pct: i === 0 ? null : 10 + i * 0.05,
      film_pass: i !== 0,
    }));
    const state = await api.submitResults(created.id, rows);
    expect(state.observation_count).toBe(plan.conditions.length);
  });

  it("surfaces UnknownCondition for unflagged off-plan rows", async () => {
    const api = new CampaignApi(BASE());
    const created = await api.createCampaign({ seed: 9 });
    await api.advance(created.id);
    const stranger: ResultRow = {
      values: [125, 10, 2, 0.8, 15, 25],
      pce_pct: 9,
      film_pass: true,
    };
    await expect(api.submitResults(created.id, [stranger], false)).rejects.toThrow(
      /not suggested/,
    );
  });

  it("history chart peaks at the champion after full ingestion", async () => {
    // drive all five bundled rounds through the API, then read the chart
    const api = new CampaignApi(BASE());
    const created = await api.createCampaign({ seed: 0 });
    const allRounds = `
import sys, json
from procopt.data import load_dataset
rows = [
    {
        "values": list(o.condition.values),
        "pce_pct": o.pce_pct,
        "film_pass": o.film_pass,
        "condition_id": o.condition_id,
        "round_index": o.round_index,
    }
    for o in load_dataset()
]
sys.stdout.write(json.dumps(rows))
`;
    const rows = JSON.parse(
      execFileSync("python3", ["-c", allRounds], { encoding: "utf-8" }),
    ) as Array<{
      values: number[];
      pce_pct: number | null;
      film_pass: boolean;
      condition_id: number;
      round_index: number;
    }>;
    for (let round = 0; round < 5; round++) {
      await api.advance(created.id);
      const batch: ResultRow[] = rows
        .filter((r) => r.round_index === round)
        .map((r) => ({
          condition_id: r.condition_id,
          values: r.values,
          pce_pct: r.pce_pct,
          film_pass: r.film_pass,
        }));
      await api.submitResults(created.id, batch, true);
    }
    const history = await api.history(created.id);
    const best = history.best_so_far[history.best_so_far.length - 1].best_so_far;
    expect(best).toBe(18.45);

    const { renderBestSoFar } = await import("../src/charts.js");
    const svg = renderBestSoFar(document, history);
    expect(svg.querySelector(".best-label")!.textContent).toBe("best 18.45%");
  }, 240_000);
});
