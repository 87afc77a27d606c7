/** Minimal SVG line/column chart with anomaly markers, a proposed-repair
 * overlay, and horizontal drag selection.  No chart library: the series
 * are small (a few hundred points) and the interactions are bespoke.
 */

import type { AnomalyDto } from "./types.js";

export interface Scale {
  (value: number): number;
  invert(pixel: number): number;
}

export function linearScale(d0: number, d1: number, r0: number, r1: number): Scale {
  const span = d1 - d0 || 1;
  const scale = ((value: number) => r0 + ((value - d0) / span) * (r1 - r0)) as Scale;
  scale.invert = (pixel: number) => d0 + ((pixel - r0) / (r1 - r0)) * span;
  return scale;
}

export function linePath(values: number[], x: Scale, y: Scale): string {
  return values
    .map((v, i) => `${i === 0 ? "M" : "L"}${x(i + 1).toFixed(1)},${y(v).toFixed(1)}`)
    .join("");
}

/** Pixel drag to a 1-based inclusive day range. */
export function dragToRange(px0: number, px1: number, x: Scale, n: number):
    { lo: number; hi: number } {
  if (px1 < px0) [px0, px1] = [px1, px0];
  const lo = Math.max(1, Math.min(n, Math.round(x.invert(px0))));
  const hi = Math.max(1, Math.min(n, Math.round(x.invert(px1))));
  return { lo: Math.min(lo, hi), hi: Math.max(lo, hi) };
}

export interface ChartSpec {
  width: number;
  height: number;
  values: number[];            // primary series, day 1..n
  overlay?: number[] | null;   // proposed repaired values, same length
  markers?: { anomaly: AnomalyDto; active: boolean }[];
  selection?: { lo: number; hi: number } | null;
  kind: "line" | "bars";
  label: string;
}

const MARGIN = { top: 18, right: 12, bottom: 6, left: 48 };
const STATUS_COLORS: Record<string, string> = {
  Detected: "#d9822b",
  Confirmed: "#c23030",
  Dismissed: "#8a9ba8",
  Repaired: "#0f9960",
};

function svgEl<K extends keyof SVGElementTagNameMap>(
  name: K, attrs: Record<string, string | number>): SVGElementTagNameMap[K] {
  const el = document.createElementNS("http://www.w3.org/2000/svg", name);
  for (const [key, value] of Object.entries(attrs)) {
    el.setAttribute(key, String(value));
  }
  return el;
}

export interface RenderedChart {
  svg: SVGSVGElement;
  xScale: Scale;
}

export function renderChart(spec: ChartSpec): RenderedChart {
  const { width, height, values } = spec;
  const n = values.length;
  const innerW = width - MARGIN.left - MARGIN.right;
  const innerH = height - MARGIN.top - MARGIN.bottom;
  const allValues = spec.overlay ? values.concat(spec.overlay) : values;
  const vMax = Math.max(1, ...allValues);
  const vMin = Math.min(0, ...allValues);
  const x = linearScale(1, Math.max(2, n), MARGIN.left, MARGIN.left + innerW);
  const y = linearScale(vMin, vMax, MARGIN.top + innerH, MARGIN.top);

  const svg = svgEl("svg", { width, height, viewBox: `0 0 ${width} ${height}` });
  svg.classList.add("chart");
  svg.appendChild(svgEl("text", { x: MARGIN.left, y: 12, class: "chart-label" }))
    .textContent = spec.label;

  // horizontal gridlines and value labels
  for (const frac of [0, 0.5, 1]) {
    const value = vMin + frac * (vMax - vMin);
    const gy = y(value);
    svg.appendChild(svgEl("line", {
      x1: MARGIN.left, x2: MARGIN.left + innerW, y1: gy, y2: gy, class: "grid",
    }));
    const tick = svgEl("text", { x: MARGIN.left - 6, y: gy + 3, class: "tick" });
    tick.textContent = Math.round(value).toLocaleString();
    tick.setAttribute("text-anchor", "end");
    svg.appendChild(tick);
  }

  if (spec.selection) {
    const { lo, hi } = spec.selection;
    svg.appendChild(svgEl("rect", {
      x: x(lo), y: MARGIN.top, width: Math.max(1, x(hi) - x(lo)),
      height: innerH, class: "selection",
    }));
  }

  if (spec.kind === "bars") {
    const barW = Math.max(1, innerW / Math.max(2, n) - 1);
    values.forEach((v, i) => {
      const top = Math.min(y(v), y(0));
      svg.appendChild(svgEl("rect", {
        x: x(i + 1) - barW / 2, y: top,
        width: barW, height: Math.max(0.5, Math.abs(y(0) - y(v))),
        class: "bar",
      }));
    });
    if (spec.overlay) {
      svg.appendChild(svgEl("path", {
        d: linePath(spec.overlay, x, y), class: "overlay",
      }));
    }
  } else {
    svg.appendChild(svgEl("path", { d: linePath(values, x, y), class: "series" }));
    if (spec.overlay) {
      svg.appendChild(svgEl("path", {
        d: linePath(spec.overlay, x, y), class: "overlay",
      }));
    }
  }

  for (const { anomaly, active } of spec.markers ?? []) {
    const t = anomaly.t_index;
    if (t < 1 || t > n) continue;
    const marker = svgEl("circle", {
      cx: x(t), cy: y(values[t - 1] ?? 0), r: active ? 6 : 4,
      class: `marker ${active ? "marker-active" : ""}`,
      fill: STATUS_COLORS[anomaly.status] ?? "#888",
    });
    const title = svgEl("title", {});
    title.textContent =
      `${anomaly.kind} ${anomaly.date} (${anomaly.status}) magnitude ${anomaly.magnitude}`;
    marker.appendChild(title);
    svg.appendChild(marker);
  }
  return { svg, xScale: x };
}

/** Wire pointer events so a horizontal drag reports a day range. */
export function attachDragSelect(
  chart: RenderedChart, n: number,
  onSelect: (lo: number, hi: number) => void,
  onClear: () => void,
): void {
  let startX: number | null = null;
  const pixelX = (event: PointerEvent): number => {
    const rect = chart.svg.getBoundingClientRect();
    return event.clientX - rect.left;
  };
  chart.svg.addEventListener("pointerdown", (event) => {
    startX = pixelX(event);
    chart.svg.setPointerCapture(event.pointerId);
  });
  chart.svg.addEventListener("pointerup", (event) => {
    if (startX === null) return;
    const endX = pixelX(event);
    if (Math.abs(endX - startX) < 3) {
      onClear();
    } else {
      const { lo, hi } = dragToRange(startX, endX, chart.xScale, n);
      onSelect(lo, hi);
    }
    startX = null;
  });
}
