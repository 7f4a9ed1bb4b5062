/** SVG score-curve chart: one labeled polyline per detector.
 *
 * X is the frame index, Y the soft label in [0, 1] (lower = more likely
 * forged). Rendering is plain SVG so the page needs no chart library
 * and tests can assert on the generated elements directly.
 */

import type { OverlayDoc, SummaryDoc } from "./types.js";

const WIDTH = 640;
const HEIGHT = 320;
const MARGIN = { top: 16, right: 150, bottom: 32, left: 44 };

const PALETTE = [
  "#1f77b4",
  "#d62728",
  "#2ca02c",
  "#9467bd",
  "#ff7f0e",
  "#17becf",
  "#8c564b",
  "#e377c2",
];

const SVG_NS = "http://www.w3.org/2000/svg";

function svgEl<K extends keyof SVGElementTagNameMap>(
  doc: Document,
  tag: K,
  attrs: Record<string, string>,
): SVGElementTagNameMap[K] {
  const el = doc.createElementNS(SVG_NS, tag);
  for (const [key, value] of Object.entries(attrs)) el.setAttribute(key, value);
  return el;
}

export function renderChart(
  doc: Document,
  overlay: OverlayDoc,
  summary?: SummaryDoc,
): SVGSVGElement {
  const plotWidth = WIDTH - MARGIN.left - MARGIN.right;
  const plotHeight = HEIGHT - MARGIN.top - MARGIN.bottom;
  const x = (frame: number): number =>
    MARGIN.left +
    (overlay.frame_count <= 1 ? plotWidth / 2 : (frame / (overlay.frame_count - 1)) * plotWidth);
  const y = (label: number): number => MARGIN.top + (1 - label) * plotHeight;

  const svg = svgEl(doc, "svg", {
    viewBox: `0 0 ${WIDTH} ${HEIGHT}`,
    class: "score-chart",
    role: "img",
    "aria-label": "per-frame authenticity scores by detector",
  });

  for (const level of [0, 0.5, 1]) {
    svg.appendChild(
      svgEl(doc, "line", {
        x1: String(MARGIN.left),
        x2: String(MARGIN.left + plotWidth),
        y1: String(y(level)),
        y2: String(y(level)),
        class: "gridline",
      }),
    );
    const tick = svgEl(doc, "text", {
      x: String(MARGIN.left - 6),
      y: String(y(level) + 4),
      class: "tick-label",
      "text-anchor": "end",
    });
    tick.textContent = level.toFixed(1);
    svg.appendChild(tick);
  }
  const xLabel = svgEl(doc, "text", {
    x: String(MARGIN.left + plotWidth / 2),
    y: String(HEIGHT - 6),
    class: "axis-label",
    "text-anchor": "middle",
  });
  xLabel.textContent = `frame (0–${overlay.frame_count - 1})`;
  svg.appendChild(xLabel);

  overlay.detectors.forEach((series, index) => {
    const color = PALETTE[index % PALETTE.length];
    const points = series.soft_labels
      .map((label, frame) => `${x(frame).toFixed(2)},${y(label).toFixed(2)}`)
      .join(" ");
    svg.appendChild(
      svgEl(doc, "polyline", {
        points,
        class: "curve",
        fill: "none",
        stroke: color,
        "stroke-width": "2",
        "data-detector-id": series.detector_id,
      }),
    );

    const legendY = MARGIN.top + 14 + index * 18;
    svg.appendChild(
      svgEl(doc, "line", {
        x1: String(WIDTH - MARGIN.right + 10),
        x2: String(WIDTH - MARGIN.right + 28),
        y1: String(legendY - 4),
        y2: String(legendY - 4),
        stroke: color,
        "stroke-width": "2",
      }),
    );
    const label = svgEl(doc, "text", {
      x: String(WIDTH - MARGIN.right + 34),
      y: String(legendY),
      class: "curve-label",
      "data-detector-id": series.detector_id,
    });
    const aggregate = summary?.detectors[series.detector_id]?.aggregate_score;
    label.textContent =
      aggregate === undefined
        ? series.detector_id
        : `${series.detector_id} (${aggregate.toFixed(3)})`;
    svg.appendChild(label);
  });

  return svg;
}
