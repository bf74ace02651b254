/**
 * Textual rendering of the 13x6 egocentric viewport.
 *
 * One glyph per cell plus a legend line per object category; the legend is
 * part of the prompt so the rendered-prompt bytes stay meaningful for
 * hashing and audits.
 */

import { FramePayload } from "./protocol.js";

const GLYPHS: Record<string, string> = {
  out_of_view: " ",
  wall: "#",
  floor: ".",
};

const LETTERS = "ABCDEFGHIJKLMNOPQRSTUVWXYZ";

export function renderViewport(frame: FramePayload): string {
  const categories: string[] = [];
  for (const row of frame.cells) {
    for (const cell of row) {
      if (cell.kind === "object" && cell.category && !categories.includes(cell.category)) {
        categories.push(cell.category);
      }
    }
  }
  categories.sort();
  const glyphFor = new Map<string, string>();
  categories.forEach((category, i) => {
    glyphFor.set(category, LETTERS[i % LETTERS.length]);
  });

  const lines: string[] = [];
  for (const row of frame.cells) {
    let line = "";
    for (const cell of row) {
      if (cell.kind === "object" && cell.category) {
        line += glyphFor.get(cell.category) ?? "?";
      } else {
        line += GLYPHS[cell.kind] ?? "?";
      }
    }
    lines.push(line);
  }

  const legend = categories.map((category) => {
    const states = new Set<string>();
    for (const row of frame.cells) {
      for (const cell of row) {
        if (cell.kind === "object" && cell.category === category && cell.visual_state) {
          states.add(cell.visual_state);
        }
      }
    }
    const stateText = [...states].sort().join("/");
    return `${glyphFor.get(category)} = ${category}` + (stateText ? ` [${stateText}]` : "");
  });

  const header =
    "Viewport (top row is farthest ahead, bottom row is nearest; center column is straight ahead).";
  const legendBlock =
    legend.length > 0
      ? "Legend: # wall, . floor, space out of view, " + legend.join(", ")
      : "Legend: # wall, . floor, space out of view";
  return [header, ...lines, legendBlock].join("\n");
}
