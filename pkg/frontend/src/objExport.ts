import { MeshPayload } from "./types.js";

/** Serialize a server mesh payload as ASCII OBJ (v/f records only).
 *
 * Coordinates use the shortest round-trip decimal form, so re-parsing
 * recovers the exact doubles the server sent. No geometry is invented:
 * every vertex and face comes straight from the payload. */
export function meshToObj(mesh: MeshPayload): string {
  const lines: string[] = [];
  const p = mesh.positions;
  for (let i = 0; i < p.length; i += 3) {
    lines.push(`v ${fmt(p[i])} ${fmt(p[i + 1])} ${fmt(p[i + 2])}`);
  }
  const f = mesh.indices;
  for (let i = 0; i < f.length; i += 3) {
    lines.push(`f ${f[i] + 1} ${f[i + 1] + 1} ${f[i + 2] + 1}`);
  }
  return lines.join("\n") + "\n";
}

function fmt(x: number): string {
  if (Number.isInteger(x)) return x.toFixed(1); // match "0.0" style floats
  return String(x);
}

export function vertexCount(mesh: MeshPayload): number {
  return mesh.positions.length / 3;
}

export function downloadObj(mesh: MeshPayload, filename: string): void {
  const blob = new Blob([meshToObj(mesh)], { type: "text/plain" });
  const url = URL.createObjectURL(blob);
  const anchor = document.createElement("a");
  anchor.href = url;
  anchor.download = filename;
  anchor.click();
  URL.revokeObjectURL(url);
}
