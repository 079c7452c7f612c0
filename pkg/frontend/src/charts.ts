// SVG charts: best-so-far step trace and per-round level histograms.
// Pure DOM construction so the pieces unit-test under jsdom.

import type { HistoryView, RoundHistogram } from "./types.js";

const SVG_NS = "http://www.w3.org/2000/svg";

function svgEl<K extends keyof SVGElementTagNameMap>(
  doc: Document,
  tag: K,
  attrs: Record<string, string | number> = {},
): SVGElementTagNameMap[K] {
  const el = doc.createElementNS(SVG_NS, tag);
  for (const [k, v] of Object.entries(attrs)) el.setAttribute(k, String(v));
  return el;
}

/** Step chart of the cumulative best efficiency per observation. */
export function renderBestSoFar(
  doc: Document,
  history: HistoryView,
  width = 560,
  height = 240,
): SVGSVGElement {
  const margin = 36;
  const svg = svgEl(doc, "svg", {
    width,
    height,
    viewBox: `0 0 ${width} ${height}`,
    class: "best-so-far-chart",
  });
  const pts = history.best_so_far.filter((p) => p.best_so_far !== null);
  if (pts.length === 0) return svg;

  const n = history.best_so_far.length;
  const values = pts.map((p) => p.best_so_far as number);
  const vMax = Math.max(...values);
  const vMin = Math.min(...values, 0);
  const toX = (i: number) => margin + (i / Math.max(n - 1, 1)) * (width - 2 * margin);
  const toY = (v: number) =>
    height - margin - ((v - vMin) / (vMax - vMin || 1)) * (height - 2 * margin);

  let d = "";
  let prev: number | null = null;
  for (const p of history.best_so_far) {
    if (p.best_so_far === null) continue;
    const x = toX(p.index);
    const y = toY(p.best_so_far);
    d += prev === null ? `M ${x} ${y}` : ` H ${x} V ${y}`;
    prev = p.best_so_far;
  }
  svg.appendChild(
    svgEl(doc, "path", { d, fill: "none", stroke: "#222", "stroke-width": 1.6 }),
  );

  for (const p of history.best_so_far) {
    if (p.pce_pct === null) continue;
    svg.appendChild(
      svgEl(doc, "circle", {
        cx: toX(p.index),
        cy: toY(p.pce_pct),
        r: 2.6,
        fill: p.film_pass ? "#1db954" : "#e03131",
        class: p.film_pass ? "obs-pass" : "obs-fail",
      }),
    );
  }

  const label = svgEl(doc, "text", {
    x: width - margin,
    y: toY(vMax) - 6,
    "text-anchor": "end",
    class: "best-label",
    "font-size": 12,
  });
  label.textContent = `best ${vMax.toFixed(2)}%`;
  svg.appendChild(label);
  const axis = svgEl(doc, "line", {
    x1: margin, y1: height - margin, x2: width - margin, y2: height - margin,
    stroke: "#999",
  });
  svg.appendChild(axis);
  return svg;
}

/** One histogram panel per variable for a single round. */
export function renderRoundHistograms(
  doc: Document,
  round: RoundHistogram,
  width = 180,
  height = 110,
): HTMLElement {
  const wrap = doc.createElement("div");
  wrap.className = "round-histograms";
  const title = doc.createElement("h4");
  title.textContent = `round ${round.round_index} (${round.method})`;
  wrap.appendChild(title);
  const row = doc.createElement("div");
  row.className = "histogram-row";
  wrap.appendChild(row);

  for (const [name, hist] of Object.entries(round.histograms)) {
    const margin = 16;
    const svg = svgEl(doc, "svg", {
      width,
      height,
      viewBox: `0 0 ${width} ${height}`,
      class: "histogram",
      "data-variable": name,
    });
    const maxCount = Math.max(...hist.counts, 1);
    const barW = (width - 2 * margin) / hist.counts.length;
    hist.counts.forEach((count, k) => {
      const h = ((height - 2 * margin) * count) / maxCount;
      svg.appendChild(
        svgEl(doc, "rect", {
          x: margin + k * barW + 1,
          y: height - margin - h,
          width: Math.max(barW - 2, 1),
          height: h,
          fill: "#4263eb",
          class: "histogram-bar",
          "data-count": count,
        }),
      );
    });
    const label = svgEl(doc, "text", {
      x: width / 2,
      y: height - 2,
      "text-anchor": "middle",
      "font-size": 10,
    });
    label.textContent = name;
    svg.appendChild(label);
    row.appendChild(svg as unknown as Node);
  }
  return wrap;
}
