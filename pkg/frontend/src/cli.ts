import { FIGURES, FigureName, PlotJob, autoFigures, render } from "./job.js";

const USAGE =
  "usage: hmfg-plots --in <dir> --out <dir> [--figures a,b,...] [--format svg]\n" +
  `figures: ${Object.keys(FIGURES).join(", ")} (default: every figure whose input table exists)`;

export function runCli(argv: string[]): number {
  const opts = new Map<string, string>();
  for (let i = 0; i < argv.length; i++) {
    const key = argv[i];
    if (!key.startsWith("--") || i + 1 >= argv.length) {
      console.error(USAGE);
      return 1;
    }
    opts.set(key.slice(2), argv[i + 1]);
    i++;
  }
  const inputDir = opts.get("in");
  const outputDir = opts.get("out");
  if (!inputDir || !outputDir) {
    console.error(USAGE);
    return 1;
  }
  for (const key of opts.keys()) {
    if (!["in", "out", "figures", "format"].includes(key)) {
      console.error(`unknown option --${key}\n${USAGE}`);
      return 1;
    }
  }
  const format = opts.get("format") ?? "svg";
  if (format !== "svg") {
    console.error(`unsupported format ${format}; only svg output is produced`);
    return 1;
  }
  let figures: FigureName[];
  const requested = opts.get("figures");
  if (requested === undefined) {
    figures = autoFigures(inputDir);
  } else {
    const names = requested.split(",").filter((s) => s.length > 0);
    const unknown = names.filter((n) => !(n in FIGURES));
    if (unknown.length > 0) {
      console.error(`unknown figure ${unknown.join(", ")}\n${USAGE}`);
      return 1;
    }
    figures = names as FigureName[];
  }
  const job: PlotJob = { inputDir, outputDir, figures, format };
  try {
    for (const file of render(job)) console.log(file);
  } catch (err) {
    const e = err as Error;
    console.error(`${e.name}: ${e.message}`);
    return 1;
  }
  return 0;
}
