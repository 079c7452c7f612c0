// Canvas heatmap of a manifold projection with observation overlays.

import type { ManifoldView } from "./types.js";

export interface ColorScale {
  lo: number;
  hi: number;
}

export function matrixRange(matrix: number[][]): ColorScale {
  let lo = Infinity;
  let hi = -Infinity;
  for (const row of matrix) {
    for (const v of row) {
      if (v < lo) lo = v;
      if (v > hi) hi = v;
    }
  }
  if (!Number.isFinite(lo)) return { lo: 0, hi: 1 };
  if (hi === lo) hi = lo + 1e-9;
  return { lo, hi };
}

/** Viridis-like ramp, good enough for relative reading. */
export function colorFor(value: number, scale: ColorScale): string {
  const t = Math.min(Math.max((value - scale.lo) / (scale.hi - scale.lo), 0), 1);
  const stops: Array<[number, [number, number, number]]> = [
    [0.0, [68, 1, 84]],
    [0.25, [59, 82, 139]],
    [0.5, [33, 145, 140]],
    [0.75, [94, 201, 98]],
    [1.0, [253, 231, 37]],
  ];
  for (let i = 1; i < stops.length; i++) {
    if (t <= stops[i][0]) {
      const [t0, c0] = stops[i - 1];
      const [t1, c1] = stops[i];
      const f = (t - t0) / (t1 - t0);
      const mix = c0.map((c, k) => Math.round(c + f * (c1[k] - c)));
      return `rgb(${mix[0]},${mix[1]},${mix[2]})`;
    }
  }
  return "rgb(253,231,37)";
}

export interface HeatmapLayout {
  width: number;
  height: number;
  margin: number;
}

const DEFAULT_LAYOUT: HeatmapLayout = { width: 420, height: 420, margin: 44 };

/**
 * Render the manifold into a canvas: matrix cells colored by the given
 * scale (fixed per campaign for round-to-round comparability), device
 * conditions as green circles, failed films as red circles.
 */
export function renderHeatmap(
  canvas: HTMLCanvasElement,
  view: ManifoldView,
  scale: ColorScale,
  layout: HeatmapLayout = DEFAULT_LAYOUT,
): void {
  const { width, height, margin } = layout;
  canvas.width = width;
  canvas.height = height;
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.clearRect(0, 0, width, height);

  const ni = view.xi_values.length;
  const nj = view.xj_values.length;
  const plotW = width - 2 * margin;
  const plotH = height - 2 * margin;
  const cellW = plotW / ni;
  const cellH = plotH / nj;

  for (let a = 0; a < ni; a++) {
    for (let b = 0; b < nj; b++) {
      ctx.fillStyle = colorFor(view.matrix[a][b], scale);
      // xi on the horizontal axis, xj vertical (origin bottom-left)
      const x = margin + a * cellW;
      const y = height - margin - (b + 1) * cellH;
      ctx.fillRect(x, y, Math.ceil(cellW), Math.ceil(cellH));
    }
  }

  const xiLo = view.xi_values[0];
  const xiHi = view.xi_values[ni - 1];
  const xjLo = view.xj_values[0];
  const xjHi = view.xj_values[nj - 1];
  const toX = (v: number) =>
    margin + ((v - xiLo) / (xiHi - xiLo || 1)) * (plotW - cellW) + cellW / 2;
  const toY = (v: number) =>
    height - margin - ((v - xjLo) / (xjHi - xjLo || 1)) * (plotH - cellH) - cellH / 2;

  const drawOverlay = (points: [number, number][], stroke: string) => {
    ctx.lineWidth = 1.8;
    ctx.strokeStyle = stroke;
    for (const [vi, vj] of points) {
      ctx.beginPath();
      ctx.arc(toX(vi), toY(vj), 4.5, 0, 2 * Math.PI);
      ctx.stroke();
    }
  };
  drawOverlay(view.overlays.pass, "#1db954");
  drawOverlay(view.overlays.fail, "#e03131");

  ctx.fillStyle = "#333";
  ctx.font = "12px sans-serif";
  ctx.textAlign = "center";
  ctx.fillText(view.xi_name, width / 2, height - 10);
  ctx.save();
  ctx.translate(12, height / 2);
  ctx.rotate(-Math.PI / 2);
  ctx.fillText(view.xj_name, 0, 0);
  ctx.restore();
  ctx.textAlign = "left";
  ctx.fillText(String(round3(xiLo)), margin, height - margin + 14);
  ctx.textAlign = "right";
  ctx.fillText(String(round3(xiHi)), width - margin, height - margin + 14);
}

function round3(v: number): number {
  return Math.round(v * 1000) / 1000;
}
