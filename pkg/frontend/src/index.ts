export { CSV_HEADER, COLUMNS, CsvSchemaError, isNonIncreasing,
         parseMetricsCsv } from "./csv.js";
export type { ColumnName, MetricsTable } from "./csv.js";
export { encodePng, PNG_SIGNATURE } from "./png.js";
export { hexColor, Raster, textWidth } from "./raster.js";
export { MAX_POINTS_PER_CURVE, PALETTE, render, validateSpec } from "./plot.js";
export type { CurveSpec, PlotSpec, RenderResult } from "./plot.js";
export { main, parseArgs } from "./cli.js";
