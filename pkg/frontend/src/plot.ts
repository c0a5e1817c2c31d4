/** Comparison-figure renderer: one curve per metrics CSV, shared axes,
 * optional log-scale y, legend from labels, downsampling documented in
 * the figure footer. Rendering is pure: identical inputs give identical
 * PNG bytes. */

import { writeFileSync } from "node:fs";

import { ColumnName, COLUMNS, MetricsTable, parseMetricsCsv } from "./csv.js";
import { encodePng } from "./png.js";
import { Color, hexColor, Raster, textWidth } from "./raster.js";

export const MAX_POINTS_PER_CURVE = 2000;

export interface CurveSpec {
  csv: string;
  label: string;
  color?: string;
}

export interface PlotSpec {
  curves: CurveSpec[];
  y: ColumnName;
  out: string;
  logy?: boolean;
  title?: string;
  width?: number;
  height?: number;
}

export const PALETTE = [
  "#d62728", // red
  "#1f77b4", // blue
  "#2ca02c", // green
  "#7f7f7f", // grey
  "#9467bd", // purple
  "#8c564b", // brown
  "#e377c2", // pink
  "#17becf", // cyan
];

const BLACK: Color = [0, 0, 0];
const GRID: Color = [225, 225, 225];
const AXIS: Color = [80, 80, 80];

interface Series {
  label: string;
  color: Color;
  k: number[];
  v: number[];
  downsampled: boolean;
}

export function validateSpec(spec: PlotSpec): void {
  if (!spec.curves || spec.curves.length === 0) {
    throw new Error("plot spec has no curves");
  }
  if (!COLUMNS.includes(spec.y)) {
    throw new Error(`unknown y column "${spec.y}" (one of ${COLUMNS.join(", ")})`);
  }
  const labels = new Set(spec.curves.map((c) => c.label));
  if (labels.size !== spec.curves.length) {
    throw new Error("curve labels must be unique");
  }
}

function extract(table: MetricsTable, y: ColumnName, logy: boolean,
                 label: string, color: Color): Series {
  const k: number[] = [];
  const v: number[] = [];
  for (let i = 0; i < table.k.length; i++) {
    const val = table.columns[y][i];
    if (Number.isNaN(val)) continue;
    if (logy && val <= 0) continue;
    k.push(table.k[i]);
    v.push(val);
  }
  if (k.length === 0) {
    throw new Error(
      `${table.path}: no plottable ${y} values${logy ? " (log scale drops <= 0)" : ""}`,
    );
  }
  let downsampled = false;
  if (k.length > MAX_POINTS_PER_CURVE) {
    downsampled = true;
    const stride = Math.ceil(k.length / MAX_POINTS_PER_CURVE);
    const ks: number[] = [];
    const vs: number[] = [];
    for (let i = 0; i < k.length; i += stride) {
      ks.push(k[i]);
      vs.push(v[i]);
    }
    if (ks[ks.length - 1] !== k[k.length - 1]) {
      ks.push(k[k.length - 1]);
      vs.push(v[v.length - 1]);
    }
    return { label, color, k: ks, v: vs, downsampled };
  }
  return { label, color, k, v, downsampled };
}

function niceTicks(lo: number, hi: number, target = 6): number[] {
  if (hi <= lo) return [lo];
  const span = hi - lo;
  const raw = span / target;
  const mag = Math.pow(10, Math.floor(Math.log10(raw)));
  let step = mag;
  for (const m of [1, 2, 5, 10]) {
    if (raw <= m * mag) {
      step = m * mag;
      break;
    }
  }
  const ticks: number[] = [];
  for (let t = Math.ceil(lo / step) * step; t <= hi + 1e-12 * span; t += step) {
    ticks.push(t);
  }
  return ticks;
}

function decadeTicks(loExp: number, hiExp: number): number[] {
  const span = hiExp - loExp;
  const step = Math.max(1, Math.ceil(span / 9));
  const ticks: number[] = [];
  for (let e = Math.ceil(loExp); e <= hiExp; e += step) ticks.push(e);
  return ticks;
}

function fmtTick(v: number): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 1e4 || a < 1e-3) {
    return v.toExponential(0).replace("e+", "e");
  }
  const s = v.toPrecision(4);
  return String(Number(s));
}

export interface RenderResult {
  bytes: Buffer;
  pointsPlotted: number;
  downsampled: boolean;
}

export function render(spec: PlotSpec): RenderResult {
  validateSpec(spec);
  const logy = spec.logy ?? false;
  const series = spec.curves.map((c, i) =>
    extract(parseMetricsCsv(c.csv), spec.y, logy, c.label,
            hexColor(c.color ?? PALETTE[i % PALETTE.length])));

  const width = spec.width ?? 960;
  const height = spec.height ?? 600;
  const mLeft = 78;
  const mRight = 24;
  const mTop = spec.title ? 40 : 24;
  const mBottom = 64;
  const plotW = width - mLeft - mRight;
  const plotH = height - mTop - mBottom;

  const kMin = Math.min(...series.map((s) => s.k[0]));
  const kMax = Math.max(...series.map((s) => s.k[s.k.length - 1]));
  let vMin = Infinity;
  let vMax = -Infinity;
  for (const s of series) {
    for (const v of s.v) {
      if (v < vMin) vMin = v;
      if (v > vMax) vMax = v;
    }
  }
  const tf = logy
    ? (v: number) => Math.log10(v)
    : (v: number) => v;
  let lo = tf(vMin);
  let hi = tf(vMax);
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  const pad = 0.04 * (hi - lo);
  lo -= pad;
  hi += pad;

  const xOf = (k: number) =>
    mLeft + Math.round(((k - kMin) / Math.max(kMax - kMin, 1)) * plotW);
  const yOf = (v: number) =>
    mTop + Math.round((1 - (tf(v) - lo) / (hi - lo)) * plotH);

  const img = new Raster(width, height);

  // gridlines + y ticks
  const yTicks = logy ? decadeTicks(lo, hi) : niceTicks(lo, hi);
  for (const t of yTicks) {
    const vv = logy ? Math.pow(10, t) : t;
    const y = yOf(vv);
    if (y < mTop || y > mTop + plotH) continue;
    img.line(mLeft, y, mLeft + plotW, y, GRID, 1);
    const label = logy ? `1e${t}` : fmtTick(t);
    img.text(mLeft - 8 - textWidth(label), y - 3, label, AXIS);
  }
  const xTicks = niceTicks(kMin, kMax, 8);
  for (const t of xTicks) {
    const x = xOf(t);
    if (x < mLeft || x > mLeft + plotW) continue;
    img.line(x, mTop, x, mTop + plotH, GRID, 1);
    const label = fmtTick(t);
    img.text(x - Math.floor(textWidth(label) / 2), mTop + plotH + 8, label, AXIS);
  }

  // frame
  img.line(mLeft, mTop, mLeft, mTop + plotH, AXIS, 1);
  img.line(mLeft, mTop + plotH, mLeft + plotW, mTop + plotH, AXIS, 1);

  // curves
  let points = 0;
  for (const s of series) {
    for (let i = 1; i < s.k.length; i++) {
      img.line(xOf(s.k[i - 1]), yOf(s.v[i - 1]), xOf(s.k[i]), yOf(s.v[i]),
               s.color, 2);
    }
    points += s.k.length;
  }

  // legend (top-right, inside the axes)
  const legendW = Math.max(...series.map((s) => textWidth(s.label))) + 34;
  const legendH = series.length * 14 + 8;
  const lx = mLeft + plotW - legendW - 8;
  const ly = mTop + 8;
  img.fillRect(lx, ly, legendW, legendH, [252, 252, 252]);
  series.forEach((s, i) => {
    const yy = ly + 6 + i * 14;
    img.line(lx + 6, yy + 3, lx + 24, yy + 3, s.color, 2);
    img.text(lx + 30, yy, s.label, BLACK);
  });

  if (spec.title) {
    img.text(mLeft, 10, spec.title, BLACK, 2);
  }
  img.text(mLeft, mTop + plotH + 24,
           `y: ${spec.y}${logy ? " (log scale)" : ""}  x: iteration`, AXIS);
  const downsampled = series.some((s) => s.downsampled);
  if (downsampled) {
    img.text(mLeft, mTop + plotH + 38,
             `downsampled to <= ${MAX_POINTS_PER_CURVE} points per curve`, AXIS);
  }

  const bytes = encodePng(width, height, img.data);
  writeFileSync(spec.out, bytes);
  return { bytes, pointsPlotted: points, downsampled };
}
