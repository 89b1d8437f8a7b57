import { existsSync } from "fs";
import { join } from "path";

import { Table, column, readTable } from "./csv.js";
import { colorRamp, extent, linearScale } from "./scales.js";
import { axes } from "./svg.js";

const WIDTH = 560;
const HEIGHT = 420;

const SERIES_COLORS = ["#1f5fa8", "#c2452d", "#3a8f3d", "#7b4fa3", "#a07f20"];

interface Arc {
  x1: number[];
  x2: number[];
  x3: number[];
}

function arcsFromParticles(table: Table): Arc[] {
  const particle = column(table, "particle");
  const x1 = column(table, "x1");
  const x2 = column(table, "x2");
  const x3 = column(table, "x3");
  const byId = new Map<number, Arc>();
  for (let i = 0; i < particle.length; i++) {
    let arc = byId.get(particle[i]);
    if (!arc) {
      arc = { x1: [], x2: [], x3: [] };
      byId.set(particle[i], arc);
    }
    arc.x1.push(x1[i]);
    arc.x2.push(x2[i]);
    arc.x3.push(x3[i]);
  }
  return [...byId.keys()].sort((a, b) => a - b).map((id) => byId.get(id)!);
}

function arcsFromPath(table: Table): Arc[] {
  return [{ x1: column(table, "x1"), x2: column(table, "x2"), x3: column(table, "x3") }];
}

export function trajectoriesFigure(dir: string): string {
  const sources: Array<[string, (t: Table) => Arc[]]> = [
    ["particles.csv", arcsFromParticles],
    ["pmp_path.csv", arcsFromPath],
    ["direct_path.csv", arcsFromPath],
  ];
  const found = sources.find(([name]) => existsSync(join(dir, name)));
  if (!found) {
    throw new Error(`${dir}: no particles.csv, pmp_path.csv or direct_path.csv`);
  }
  const arcs = found[1](readTable(join(dir, found[0])));
  const xDomain = extent(arcs.flatMap((a) => a.x1));
  const yDomain = extent(arcs.flatMap((a) => a.x2));
  const meanX3 = arcs.map((a) => a.x3.reduce((s, v) => s + v, 0) / a.x3.length);
  const colorScale = linearScale(extent(meanX3), [0, 1]);
  const frame = axes(WIDTH, HEIGHT, xDomain, yDomain,
    `trajectories (${arcs.length} arcs, color = mean x3)`, "x1", "x2");
  const bundle = arcs.length > 1;
  arcs.forEach((arc, i) => {
    const points = arc.x1.map((v, k) => [frame.sx(v), frame.sy(arc.x2[k])] as [number, number]);
    frame.svg.polyline(points, colorRamp(colorScale(meanX3[i])),
      bundle ? 1 : 1.5, bundle ? 0.6 : 1);
  });
  return frame.svg.render();
}

export function densityFigure(dir: string): string {
  const table = readTable(join(dir, "density.csv"));
  const x1 = column(table, "x1");
  const x2 = column(table, "x2");
  const density = column(table, "density");
  const ax1 = [...new Set(x1)].sort((a, b) => a - b);
  const ax2 = [...new Set(x2)].sort((a, b) => a - b);
  const step1 = ax1.length > 1 ? ax1[1] - ax1[0] : 1;
  const step2 = ax2.length > 1 ? ax2[1] - ax2[0] : 1;
  const xDomain: [number, number] = [ax1[0] - step1 / 2, ax1[ax1.length - 1] + step1 / 2];
  const yDomain: [number, number] = [ax2[0] - step2 / 2, ax2[ax2.length - 1] + step2 / 2];
  const dMax = Math.max(...density, 0);
  const frame = axes(WIDTH, HEIGHT, xDomain, yDomain,
    "terminal density slice (x3 = 0)", "x1", "x2");
  for (let i = 0; i < density.length; i++) {
    const px = frame.sx(x1[i] - step1 / 2);
    const py = frame.sy(x2[i] + step2 / 2);
    const w = frame.sx(x1[i] + step1 / 2) - px;
    const h = frame.sy(x2[i] - step2 / 2) - py;
    frame.svg.rect(px, py, w, h, colorRamp(dMax > 0 ? density[i] / dMax : 0));
  }
  return frame.svg.render();
}

export function residualsFigure(dir: string): string {
  const table = readTable(join(dir, "residuals.csv"));
  const epsilon = column(table, "epsilon");
  const residual = column(table, "residual");
  const logR = residual.map((r) => Math.log10(Math.max(r, 1e-300)));
  const xDomain: [number, number] = [0, Math.max(residual.length - 1, 1)];
  const yDomain = extent(logR);
  const frame = axes(WIDTH, HEIGHT, xDomain, yDomain,
    "fixed point residual per best response", "iteration", "log10 d1 residual");
  const levels = [...new Set(epsilon)];
  levels.forEach((eps, s) => {
    const points: Array<[number, number]> = [];
    for (let i = 0; i < residual.length; i++) {
      if (epsilon[i] === eps) points.push([frame.sx(i), frame.sy(logR[i])]);
    }
    const color = SERIES_COLORS[s % SERIES_COLORS.length];
    frame.svg.polyline(points, color, 1.5);
    for (const [px, py] of points) frame.svg.circle(px, py, 2.5, color);
    frame.svg.rect(WIDTH - 150, 34 + 16 * s, 10, 10, color);
    frame.svg.text(WIDTH - 136, 43 + 16 * s, `eps = ${eps}`);
  });
  return frame.svg.render();
}

export function holderFigure(dir: string): string {
  const table = readTable(join(dir, "audit.csv"));
  const t = column(table, "t");
  const d1 = column(table, "d1_prev");
  const ratio: number[] = [];
  const mid: number[] = [];
  for (let i = 1; i < t.length; i++) {
    const dt = t[i] - t[i - 1];
    ratio.push(d1[i] / Math.sqrt(dt));
    mid.push(t[i]);
  }
  const K = Math.max(...ratio, 0);
  const yDomain: [number, number] = [0, K > 0 ? K * 1.1 : 1];
  const frame = axes(WIDTH, HEIGHT, extent(t), yDomain,
    `time regularity of the measure path (K = ${K.toPrecision(4)})`,
    "t", "d1 step / sqrt(dt)");
  frame.svg.line(frame.sx(t[0]), frame.sy(K), frame.sx(t[t.length - 1]), frame.sy(K),
    "#c2452d");
  mid.forEach((tv, i) => frame.svg.circle(frame.sx(tv), frame.sy(ratio[i]), 2.5, "#1f5fa8"));
  return frame.svg.render();
}
