#!/usr/bin/env node
/** CLI: `fdgm-plot --spec spec.json` or
 *       `fdgm-plot out/*.csv --y primal_err --logy --o fig.png` */

import { readFileSync } from "node:fs";
import { basename } from "node:path";

import { ColumnName, COLUMNS, CsvSchemaError } from "./csv.js";
import { PlotSpec, render } from "./plot.js";

function usage(): string {
  return [
    "usage: fdgm-plot --spec spec.json",
    "       fdgm-plot CSV [CSV ...] --y COLUMN [--logy] --o OUT.png [--title T]",
    `       COLUMN: ${COLUMNS.join(" | ")}`,
  ].join("\n");
}

export function parseArgs(argv: string[]): PlotSpec {
  const csvs: string[] = [];
  let y: string | undefined;
  let out: string | undefined;
  let title: string | undefined;
  let specPath: string | undefined;
  let logy = false;
  for (let i = 0; i < argv.length; i++) {
    const a = argv[i];
    if (a === "--spec") specPath = argv[++i];
    else if (a === "--y") y = argv[++i];
    else if (a === "--o" || a === "--out") out = argv[++i];
    else if (a === "--title") title = argv[++i];
    else if (a === "--logy") logy = true;
    else if (a.startsWith("--")) throw new Error(`unknown flag ${a}`);
    else csvs.push(a);
  }
  if (specPath !== undefined) {
    const spec = JSON.parse(readFileSync(specPath, "utf8")) as PlotSpec;
    if (!spec.out || !spec.y || !spec.curves) {
      throw new Error(`${specPath}: spec needs curves, y, and out`);
    }
    return spec;
  }
  if (csvs.length === 0 || !y || !out) {
    throw new Error(usage());
  }
  return {
    curves: csvs.map((path) => ({ path, label: basename(path).replace(/\.csv$/, "") }))
      .map(({ path, label }) => ({ csv: path, label })),
    y: y as ColumnName,
    out,
    logy,
    title,
  };
}

export function main(argv: string[]): number {
  try {
    const spec = parseArgs(argv);
    const res = render(spec);
    console.log(`wrote ${spec.out} (${res.pointsPlotted} points` +
      `${res.downsampled ? ", downsampled" : ""})`);
    return 0;
  } catch (err) {
    if (err instanceof CsvSchemaError || err instanceof Error) {
      console.error(`error: ${err.message}`);
    } else {
      console.error(`error: ${String(err)}`);
    }
    return 2;
  }
}

const entry = process.argv[1] ?? "";
if (entry.endsWith("cli.js") || entry.endsWith("cli.ts")) {
  process.exit(main(process.argv.slice(2)));
}
