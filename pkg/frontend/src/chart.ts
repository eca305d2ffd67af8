/**
 * 30-day trend chart as an inline SVG string.
 *
 * The x domain is always the full review window ending at the newest
 * point (the reading under review), so sparse series keep their true
 * temporal spacing instead of stretching to fill the width.
 */

import { TrendSeries } from "./viewModel";

const WIDTH = 560;
const HEIGHT = 150;
const PAD = { left: 46, right: 14, top: 16, bottom: 22 };
const DAY_MS = 86_400_000;

const esc = (s: string): string =>
  s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;").replace(/"/g, "&quot;");

const fmt = (n: number): string => (Math.round(n * 100) / 100).toString();

export function trendChartSvg(series: TrendSeries, windowDays = 30): string {
  const points = series.points;
  if (points.length === 0) return "";

  const end = Date.parse(points[points.length - 1].at);
  const start = end - windowDays * DAY_MS;
  const values = points.map((p) => p.value);
  let lo = Math.min(...values);
  let hi = Math.max(...values);
  if (hi - lo < 1e-9) {
    lo -= 1;
    hi += 1;
  }
  const span = hi - lo;
  lo -= span * 0.08;
  hi += span * 0.08;

  const plotW = WIDTH - PAD.left - PAD.right;
  const plotH = HEIGHT - PAD.top - PAD.bottom;
  const x = (t: number) =>
    PAD.left + (end === start ? plotW : ((t - start) / (end - start)) * plotW);
  const y = (v: number) => PAD.top + (1 - (v - lo) / (hi - lo)) * plotH;

  const coords = points.map((p) => [x(Date.parse(p.at)), y(p.value)] as const);
  const line =
    coords.length > 1
      ? `<polyline fill="none" stroke="#2b6cb0" stroke-width="1.5" points="${coords
          .map(([cx, cy]) => `${fmt(cx)},${fmt(cy)}`)
          .join(" ")}"/>`
      : "";
  const dots = coords
    .map(
      ([cx, cy], i) =>
        `<circle class="pt" cx="${fmt(cx)}" cy="${fmt(cy)}" r="2.5">` +
        `<title>${esc(points[i].at)}: ${fmt(points[i].value)} ${esc(series.unit)}</title></circle>`,
    )
    .join("");

  const axis =
    `<line x1="${PAD.left}" y1="${PAD.top}" x2="${PAD.left}" y2="${HEIGHT - PAD.bottom}" stroke="#999"/>` +
    `<line x1="${PAD.left}" y1="${HEIGHT - PAD.bottom}" x2="${WIDTH - PAD.right}" y2="${HEIGHT - PAD.bottom}" stroke="#999"/>` +
    `<text class="y-hi" x="${PAD.left - 5}" y="${PAD.top + 4}" text-anchor="end">${fmt(hi)}</text>` +
    `<text class="y-lo" x="${PAD.left - 5}" y="${HEIGHT - PAD.bottom}" text-anchor="end">${fmt(lo)}</text>` +
    `<text class="x-lo" x="${PAD.left}" y="${HEIGHT - 6}">-${windowDays}d</text>` +
    `<text class="x-hi" x="${WIDTH - PAD.right}" y="${HEIGHT - 6}" text-anchor="end">now</text>`;

  const title = `${esc(series.name)}${series.unit ? ` (${esc(series.unit)})` : ""}`;

  return (
    `<svg class="trend" role="img" viewBox="0 0 ${WIDTH} ${HEIGHT}" ` +
    `aria-label="${title}, ${points.length} points over ${windowDays} days">` +
    `<text class="series-title" x="${PAD.left}" y="11">${title}</text>` +
    axis +
    line +
    dots +
    `</svg>`
  );
}
