import { readFileSync } from "fs";

export class MissingColumnError extends Error {
  constructor(file: string, column: string) {
    super(`${file}: missing column ${column}`);
    this.name = "MissingColumnError";
  }
}

export interface Table {
  file: string;
  header: string[];
  rows: string[][];
}

export function readTable(path: string): Table {
  const text = readFileSync(path, "utf8");
  const lines = text.split("\n");
  while (lines.length > 0 && lines[lines.length - 1] === "") lines.pop();
  if (lines.length === 0) throw new Error(`${path}: empty table`);
  const header = lines[0].split(",");
  const rows = lines.slice(1).map((line) => line.split(","));
  return { file: path, header, rows };
}

export function column(table: Table, name: string): number[] {
  const i = table.header.indexOf(name);
  if (i < 0) throw new MissingColumnError(table.file, name);
  return table.rows.map((row) => Number(row[i]));
}
