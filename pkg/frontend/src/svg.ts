import { Scale, linearScale, tickLabel, ticks } from "./scales.js";

// fixed two-decimal coordinates keep the output byte-stable
export function fnum(v: number): string {
  const s = v.toFixed(2);
  return s === "-0.00" ? "0.00" : s;
}

export class Svg {
  private parts: string[] = [];

  constructor(readonly width: number, readonly height: number) {
    this.parts.push(
      `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
        `viewBox="0 0 ${width} ${height}" font-family="monospace" font-size="11">`,
    );
    this.parts.push(`<rect width="${width}" height="${height}" fill="#ffffff"/>`);
  }

  line(x1: number, y1: number, x2: number, y2: number, stroke: string, width = 1): void {
    this.parts.push(
      `<line x1="${fnum(x1)}" y1="${fnum(y1)}" x2="${fnum(x2)}" y2="${fnum(y2)}" ` +
        `stroke="${stroke}" stroke-width="${width}"/>`,
    );
  }

  polyline(points: Array<[number, number]>, stroke: string, width = 1, opacity = 1): void {
    const pts = points.map(([x, y]) => `${fnum(x)},${fnum(y)}`).join(" ");
    const op = opacity === 1 ? "" : ` stroke-opacity="${opacity}"`;
    this.parts.push(
      `<polyline points="${pts}" fill="none" stroke="${stroke}" stroke-width="${width}"${op}/>`,
    );
  }

  rect(x: number, y: number, w: number, h: number, fill: string): void {
    this.parts.push(
      `<rect x="${fnum(x)}" y="${fnum(y)}" width="${fnum(w)}" height="${fnum(h)}" fill="${fill}"/>`,
    );
  }

  circle(cx: number, cy: number, r: number, fill: string): void {
    this.parts.push(`<circle cx="${fnum(cx)}" cy="${fnum(cy)}" r="${fnum(r)}" fill="${fill}"/>`);
  }

  text(x: number, y: number, value: string, anchor = "start"): void {
    this.parts.push(
      `<text x="${fnum(x)}" y="${fnum(y)}" text-anchor="${anchor}" fill="#202020">${value}</text>`,
    );
  }

  render(): string {
    return this.parts.join("\n") + "\n</svg>\n";
  }
}

export interface Frame {
  svg: Svg;
  sx: Scale;
  sy: Scale;
}

export const MARGIN = { left: 58, right: 16, top: 28, bottom: 40 };

export function axes(
  width: number,
  height: number,
  xDomain: [number, number],
  yDomain: [number, number],
  title: string,
  xLabel: string,
  yLabel: string,
): Frame {
  const svg = new Svg(width, height);
  const x0 = MARGIN.left;
  const x1 = width - MARGIN.right;
  const y0 = height - MARGIN.bottom;
  const y1 = MARGIN.top;
  const sx = linearScale(xDomain, [x0, x1]);
  const sy = linearScale(yDomain, [y0, y1]);
  svg.text(width / 2, 16, title, "middle");
  svg.line(x0, y0, x1, y0, "#202020");
  svg.line(x0, y0, x0, y1, "#202020");
  for (const t of ticks(xDomain[0], xDomain[1])) {
    const px = sx(t);
    svg.line(px, y0, px, y0 + 4, "#202020");
    svg.text(px, y0 + 16, tickLabel(t), "middle");
  }
  for (const t of ticks(yDomain[0], yDomain[1])) {
    const py = sy(t);
    svg.line(x0 - 4, py, x0, py, "#202020");
    svg.text(x0 - 7, py + 3, tickLabel(t), "end");
  }
  svg.text((x0 + x1) / 2, height - 8, xLabel, "middle");
  svg.text(14, y1 - 8, yLabel, "start");
  return { svg, sx, sy };
}
