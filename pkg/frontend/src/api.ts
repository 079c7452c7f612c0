import type {
  CampaignSummary,
  HistoryView,
  ManifoldView,
  ResultRow,
  RoundPlan,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(`${status}: ${detail}`);
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const resp = await fetch(url, {
    headers: { "Content-Type": "application/json" },
    ...init,
  });
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      const body = await resp.json();
      detail = body.detail ?? JSON.stringify(body);
    } catch {
      // non-JSON error body: keep the status text
    }
    throw new ApiError(resp.status, detail);
  }
  return (await resp.json()) as T;
}

/** Thin typed client for the campaign service; one instance per base URL. */
export class CampaignApi {
  constructor(public baseUrl: string = "") {}

  createCampaign(body: Record<string, unknown> = {}): Promise<CampaignSummary> {
    return request(`${this.baseUrl}/campaigns`, {
      method: "POST",
      body: JSON.stringify(body),
    });
  }

  getCampaign(id: string): Promise<CampaignSummary> {
    return request(`${this.baseUrl}/campaigns/${id}`);
  }

  advance(id: string): Promise<RoundPlan> {
    return request(`${this.baseUrl}/campaigns/${id}/suggestions`, {
      method: "POST",
    });
  }

  currentPlan(id: string): Promise<RoundPlan> {
    return request(`${this.baseUrl}/campaigns/${id}/suggestions`);
  }

  submitResults(
    id: string,
    rows: ResultRow[],
    allowOffPlan = false,
  ): Promise<CampaignSummary> {
    return request(`${this.baseUrl}/campaigns/${id}/results`, {
      method: "POST",
      body: JSON.stringify({ rows, allow_off_plan: allowOffPlan }),
    });
  }

  manifold(
    id: string,
    xi: number,
    xj: number,
    opts: { reduce?: string; seed?: number; grid?: number; samples?: number } = {},
  ): Promise<ManifoldView> {
    const params = new URLSearchParams({
      xi: String(xi),
      xj: String(xj),
      reduce: opts.reduce ?? "max",
      seed: String(opts.seed ?? 0),
    });
    if (opts.grid) params.set("grid", String(opts.grid));
    if (opts.samples) params.set("samples", String(opts.samples));
    return request(`${this.baseUrl}/campaigns/${id}/manifold?${params}`);
  }

  history(id: string): Promise<HistoryView> {
    return request(`${this.baseUrl}/campaigns/${id}/history`);
  }

  async exportCsv(id: string): Promise<string> {
    const resp = await fetch(`${this.baseUrl}/campaigns/${id}/export`);
    if (!resp.ok) throw new ApiError(resp.status, resp.statusText);
    return resp.text();
  }

  cost(id: string, batch: number): Promise<{ total_minutes: number; avg_minutes_per_substrate: number }> {
    return request(`${this.baseUrl}/campaigns/${id}/cost?batch=${batch}`);
  }
}

/** All unordered variable pairs, in (i, j) order with i < j. */
export function variablePairs(dim: number): Array<[number, number]> {
  const pairs: Array<[number, number]> = [];
  for (let i = 0; i < dim; i++) {
    for (let j = i + 1; j < dim; j++) pairs.push([i, j]);
  }
  return pairs;
}
