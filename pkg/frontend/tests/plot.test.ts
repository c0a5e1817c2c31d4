import { existsSync, mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { CSV_HEADER, isNonIncreasing, parseMetricsCsv } from "../src/csv.js";
import { encodePng, PNG_SIGNATURE } from "../src/png.js";
import { MAX_POINTS_PER_CURVE, render, validateSpec } from "../src/plot.js";
import { main } from "../src/cli.js";

const FIXTURES = join(__dirname, "fixtures");
const FIG1A = ["metropolis", "laplacian", "laplacian_degree", "subgrad"].map(
  (name) => ({ csv: join(FIXTURES, `fig1a_${name}.csv`), label: name }),
);

function outPath(name: string): string {
  return join(mkdtempSync(join(tmpdir(), "fdgm-plot-")), name);
}

describe("encodePng", () => {
  it("emits a well-formed signature and chunk layout", () => {
    const img = new Uint8Array(4 * 4 * 4).fill(128);
    const png = encodePng(4, 4, img);
    expect(png.subarray(0, 8).equals(PNG_SIGNATURE)).toBe(true);
    expect(png.subarray(12, 16).toString("ascii")).toBe("IHDR");
    expect(png.readUInt32BE(16)).toBe(4);
    expect(png.readUInt32BE(20)).toBe(4);
    expect(png.subarray(png.length - 8, png.length - 4).toString("ascii")).toBe("IEND");
  });

  it("rejects a mis-sized buffer", () => {
    expect(() => encodePng(2, 2, new Uint8Array(3))).toThrow(/bytes/);
  });
});

describe("render", () => {
  it("renders the four fig1a curves into one log-scale png", () => {
    const out = outPath("fig1a.png");
    const res = render({ curves: FIG1A, y: "primal_err", out, logy: true,
                         title: "fig1a primal error" });
    expect(existsSync(out)).toBe(true);
    const bytes = readFileSync(out);
    expect(bytes.subarray(0, 8).equals(PNG_SIGNATURE)).toBe(true);
    expect(bytes.readUInt32BE(16)).toBe(960);
    expect(bytes.readUInt32BE(20)).toBe(600);
    expect(res.pointsPlotted).toBeGreaterThan(4 * 50);
  });

  it("is deterministic: same csvs, same bytes", () => {
    const a = render({ curves: FIG1A, y: "primal_err", out: outPath("a.png"), logy: true });
    const b = render({ curves: FIG1A, y: "primal_err", out: outPath("b.png"), logy: true });
    expect(a.bytes.equals(b.bytes)).toBe(true);
  });

  it("dual_gap curves of the dual method are monotone at the data level", () => {
    for (const { csv, label } of FIG1A) {
      if (label === "subgrad") continue;
      const t = parseMetricsCsv(csv);
      expect(isNonIncreasing(t.columns.dual_gap, 1e-8), label).toBe(true);
    }
  });

  it("renders dual_gap on a log axis, skipping nan baseline columns", () => {
    const out = outPath("gap.png");
    const res = render({ curves: FIG1A.slice(0, 3), y: "dual_gap", out, logy: true });
    expect(res.pointsPlotted).toBeGreaterThan(0);
  });

  it("downsamples long curves and reports it", () => {
    const rows = [CSV_HEADER];
    for (let k = 0; k <= 6000; k++) {
      rows.push(`${k},1,1,${(1 / (k + 1)).toExponential(17)},1,1`);
    }
    const dir = mkdtempSync(join(tmpdir(), "fdgm-plot-"));
    const csv = join(dir, "long.csv");
    writeFileSync(csv, rows.join("\n") + "\n");
    const res = render({ curves: [{ csv, label: "long" }], y: "primal_err",
                         out: join(dir, "long.png"), logy: true });
    expect(res.downsampled).toBe(true);
    expect(res.pointsPlotted).toBeLessThanOrEqual(MAX_POINTS_PER_CURVE + 1);
  });

  it("rejects duplicate labels", () => {
    expect(() => validateSpecWrap()).toThrow(/unique/);
    function validateSpecWrap() {
      validateSpec({ curves: [{ csv: "a", label: "x" }, { csv: "b", label: "x" }],
                     y: "primal_err", out: "o.png" });
    }
  });

  it("rejects an unknown column", () => {
    expect(() =>
      validateSpec({ curves: [{ csv: "a", label: "x" }], y: "nope" as never,
                     out: "o.png" })).toThrow(/unknown y column/);
  });

  it("errors when log scale drops every point, naming the file", () => {
    const dir = mkdtempSync(join(tmpdir(), "fdgm-plot-"));
    const csv = join(dir, "flat.csv");
    writeFileSync(csv, `${CSV_HEADER}\n0,1,0,0,0,0\n1,1,0,0,0,0\n`);
    expect(() => render({ curves: [{ csv, label: "flat" }], y: "primal_err",
                          out: join(dir, "x.png"), logy: true })).toThrow(csv);
  });
});

describe("cli", () => {
  it("positional form renders a figure", () => {
    const out = outPath("cli.png");
    const code = main([...FIG1A.map((c) => c.csv), "--y", "primal_err",
                       "--logy", "--o", out]);
    expect(code).toBe(0);
    expect(existsSync(out)).toBe(true);
  });

  it("spec form renders a figure", () => {
    const dir = mkdtempSync(join(tmpdir(), "fdgm-plot-"));
    const out = join(dir, "spec.png");
    const spec = { curves: FIG1A, y: "feas_gap", out, logy: true };
    const specPath = join(dir, "spec.json");
    writeFileSync(specPath, JSON.stringify(spec));
    expect(main(["--spec", specPath])).toBe(0);
    expect(existsSync(out)).toBe(true);
  });

  it("exits nonzero on schema mismatch", () => {
    const dir = mkdtempSync(join(tmpdir(), "fdgm-plot-"));
    const bad = join(dir, "bad.csv");
    writeFileSync(bad, "k,wrong\n0,1\n");
    expect(main([bad, "--y", "primal_err", "--o", join(dir, "x.png")])).toBe(2);
  });

  it("exits nonzero without required arguments", () => {
    expect(main([])).toBe(2);
  });
});
