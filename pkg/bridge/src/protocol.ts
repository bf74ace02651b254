/**
 * Wire protocol message shapes.
 *
 * Server-to-client lines are JSON objects with a `kind` field
 * (observation | settlement) and a protocol version; client-to-server
 * lines are raw action objects, exactly one per turn, forwarded verbatim
 * from the model.
 */

export interface CellReport {
  kind: "out_of_view" | "wall" | "floor" | "object";
  category?: string;
  visual_state?: "on" | "off" | "open" | "closed" | "none";
}

export interface FramePayload {
  role: string;
  cells: CellReport[][];
}

export interface Observation {
  kind: "observation";
  protocol: number;
  episode_id: string;
  step: number;
  instruction: string;
  frame: FramePayload;
  steps_remaining: number;
  invalids_remaining: number;
  history: [string, string][];
  feedback?: { too_far: boolean; path_blocked: boolean };
}

export interface SettlementLine {
  kind: "settlement";
  protocol: number;
  episode_id: string;
  terminal_cause: string;
  w_sem: number;
  w_strict: number;
  b: number;
  match: boolean;
  report: { status: string; summary: string } | null;
  fr: boolean;
  nr: boolean;
  il: boolean;
  first_goal_step: number | null;
  report_step: number | null;
  progress_at_report: number | null;
}

export type ServerMessage = Observation | SettlementLine;

export function parseServerLine(line: string): ServerMessage {
  const message = JSON.parse(line) as ServerMessage;
  if (message.kind !== "observation" && message.kind !== "settlement") {
    throw new Error(`unknown message kind: ${(message as { kind: string }).kind}`);
  }
  return message;
}
