// Local draft persistence for result entry: values survive a page reload,
// submission to the server stays explicit.

import type { ResultRow } from "./types.js";

export interface DraftRow {
  pce: string; // raw text as typed; empty = not measured
  filmPass: boolean;
}

const keyFor = (campaignId: string, roundIndex: number) =>
  `procopt-draft:${campaignId}:${roundIndex}`;

export function loadDrafts(
  storage: Storage,
  campaignId: string,
  roundIndex: number,
  slots: number,
): DraftRow[] {
  const fallback = () =>
    Array.from({ length: slots }, () => ({ pce: "", filmPass: true }));
  const raw = storage.getItem(keyFor(campaignId, roundIndex));
  if (!raw) return fallback();
  try {
    const parsed = JSON.parse(raw) as DraftRow[];
    if (!Array.isArray(parsed) || parsed.length !== slots) return fallback();
    return parsed;
  } catch {
    return fallback();
  }
}

export function saveDrafts(
  storage: Storage,
  campaignId: string,
  roundIndex: number,
  drafts: DraftRow[],
): void {
  storage.setItem(keyFor(campaignId, roundIndex), JSON.stringify(drafts));
}

export function clearDrafts(
  storage: Storage,
  campaignId: string,
  roundIndex: number,
): void {
  storage.removeItem(keyFor(campaignId, roundIndex));
}

/** Convert drafted entries plus plan coordinates into API rows. */
export function draftsToRows(
  drafts: DraftRow[],
  planValues: number[][],
): ResultRow[] {
  return drafts.map((d, i) => ({
    condition_id: null,
    values: planValues[i],
    pce_pct: d.pce.trim() === "" ? null : Number(d.pce),
    film_pass: d.filmPass,
  }));
}

export function validateDraft(d: DraftRow): string | null {
  if (d.pce.trim() === "") return null; // blank efficiency is allowed
  const v = Number(d.pce);
  if (!Number.isFinite(v)) return "efficiency must be a number";
  if (v < 0) return "efficiency cannot be negative";
  if (v >= 35) return "efficiency above the 35% sanity bound";
  return null;
}
