/** Metrics CSV parsing with strict schema validation. */

import { readFileSync } from "node:fs";

export const CSV_HEADER = "k,D,dual_gap,primal_err,feas_gap,F_gap";
export const COLUMNS = ["D", "dual_gap", "primal_err", "feas_gap", "F_gap"] as const;
export type ColumnName = (typeof COLUMNS)[number];

export interface MetricsTable {
  path: string;
  k: number[];
  columns: Record<ColumnName, number[]>;
}

export class CsvSchemaError extends Error {}

export function parseMetricsCsv(path: string): MetricsTable {
  const text = readFileSync(path, "utf8");
  const lines = text.split(/\r?\n/).filter((ln) => ln.trim().length > 0);
  if (lines.length === 0) {
    throw new CsvSchemaError(`${path}: file is empty`);
  }
  if (lines[0] !== CSV_HEADER) {
    throw new CsvSchemaError(
      `${path}: unexpected header "${lines[0]}" (want "${CSV_HEADER}")`,
    );
  }
  if (lines.length === 1) {
    throw new CsvSchemaError(`${path}: no data rows (header only)`);
  }
  const table: MetricsTable = {
    path,
    k: [],
    columns: { D: [], dual_gap: [], primal_err: [], feas_gap: [], F_gap: [] },
  };
  for (let i = 1; i < lines.length; i++) {
    const toks = lines[i].split(",");
    if (toks.length !== 6) {
      throw new CsvSchemaError(`${path}: row ${i + 1} has ${toks.length} fields`);
    }
    const k = Number(toks[0]);
    if (!Number.isInteger(k)) {
      throw new CsvSchemaError(`${path}: row ${i + 1} has non-integer k "${toks[0]}"`);
    }
    table.k.push(k);
    COLUMNS.forEach((name, j) => {
      const v = Number(toks[j + 1]);
      if (Number.isNaN(v) && toks[j + 1].trim().toLowerCase() !== "nan") {
        throw new CsvSchemaError(`${path}: row ${i + 1} field "${toks[j + 1]}"`);
      }
      table.columns[name].push(v);
    });
  }
  return table;
}

/** Data-level monotonicity check (allowing `tol` of upward noise). */
export function isNonIncreasing(values: number[], tol = 1e-8): boolean {
  let prev = Number.POSITIVE_INFINITY;
  for (const v of values) {
    if (Number.isNaN(v)) return false;
    if (v > prev + tol) return false;
    prev = v;
  }
  return true;
}
