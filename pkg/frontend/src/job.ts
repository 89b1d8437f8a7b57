import { existsSync, mkdirSync, writeFileSync } from "fs";
import { join } from "path";

import { densityFigure, holderFigure, residualsFigure, trajectoriesFigure } from "./figures.js";

export const FIGURES = {
  trajectories: trajectoriesFigure,
  density: densityFigure,
  residuals: residualsFigure,
  holder: holderFigure,
} as const;

export type FigureName = keyof typeof FIGURES;

export interface PlotJob {
  inputDir: string;
  outputDir: string;
  figures: FigureName[];
  format: "svg";
}

const SOURCES: Record<FigureName, string[]> = {
  trajectories: ["particles.csv", "pmp_path.csv", "direct_path.csv"],
  density: ["density.csv"],
  residuals: ["residuals.csv"],
  holder: ["audit.csv"],
};

export function autoFigures(inputDir: string): FigureName[] {
  const names = Object.keys(FIGURES) as FigureName[];
  return names.filter((name) =>
    SOURCES[name].some((file) => existsSync(join(inputDir, file))));
}

export function render(job: PlotJob): string[] {
  if (job.format !== "svg") {
    throw new Error(`unsupported format ${job.format}`);
  }
  mkdirSync(job.outputDir, { recursive: true });
  const written: string[] = [];
  for (const name of job.figures) {
    const builder = FIGURES[name];
    if (!builder) throw new Error(`unknown figure ${name}`);
    const out = join(job.outputDir, `${name}.svg`);
    writeFileSync(out, builder(job.inputDir), "utf8");
    written.push(out);
  }
  return written;
}
