/**
 * The episode bridge: connects to the evaluation server, renders each
 * observation as a prompt, asks the endpoint, and forwards the model's
 * output as the action line without modification. Malformed model output
 * must reach the server untouched so invalid-action accounting matches
 * the native contract; if the endpoint fails, the bridge sends nothing
 * further and lets the server's timeout path settle the episode.
 */

import * as net from "node:net";

import { ModelEndpoint } from "./endpoint.js";
import { Observation, SettlementLine, parseServerLine } from "./protocol.js";
import { systemPrompt, userMessage } from "./prompt.js";

export interface TranscriptEntry {
  kind: string;
  [key: string]: unknown;
}

export interface BridgeResult {
  settlement: SettlementLine | null;
  transcript: TranscriptEntry[];
}

function connect(host: string, port: number): Promise<net.Socket> {
  return new Promise((resolve, reject) => {
    const socket = net.createConnection({ host, port }, () => resolve(socket));
    socket.on("error", reject);
  });
}

function lineReader(socket: net.Socket): () => Promise<string | null> {
  let buffer = "";
  const queue: string[] = [];
  let closed = false;
  let wake: (() => void) | null = null;

  socket.on("data", (chunk) => {
    buffer += chunk.toString("utf-8");
    let index = buffer.indexOf("\n");
    while (index >= 0) {
      queue.push(buffer.slice(0, index));
      buffer = buffer.slice(index + 1);
      index = buffer.indexOf("\n");
    }
    wake?.();
  });
  socket.on("close", () => {
    closed = true;
    wake?.();
  });
  socket.on("error", () => {
    closed = true;
    wake?.();
  });

  return async () => {
    for (;;) {
      const line = queue.shift();
      if (line !== undefined) {
        return line;
      }
      if (closed) {
        return null;
      }
      await new Promise<void>((resolve) => {
        wake = resolve;
      });
      wake = null;
    }
  };
}

/**
 * Run one episode through the bridge. Returns the settlement (null when
 * the connection dropped before one arrived) and the full exchange
 * transcript.
 */
export async function bridgeEpisode(
  host: string,
  port: number,
  endpoint: ModelEndpoint,
  mode: string,
): Promise<BridgeResult> {
  const socket = await connect(host, port);
  const readLine = lineReader(socket);
  const transcript: TranscriptEntry[] = [
    { kind: "client_header", server: `${host}:${port}`, mode },
  ];
  let settlement: SettlementLine | null = null;
  let stalled = false;

  for (;;) {
    const line = await readLine();
    if (line === null) {
      break;
    }
    if (!line.trim()) {
      continue;
    }
    const message = parseServerLine(line);
    if (message.kind === "settlement") {
      transcript.push({ ...message });
      settlement = message;
      break;
    }
    const observation = message as Observation;
    transcript.push({ kind: "observation", payload: observation });
    if (stalled) {
      continue; // endpoint gone: stay silent, let the server settle it
    }
    const output = await endpoint.complete(
      systemPrompt(observation.instruction),
      userMessage(observation),
    );
    if (output === null) {
      stalled = true;
      continue;
    }
    // content-transparent: the model's bytes go out unmodified
    const raw = output.endsWith("\n") ? output.slice(0, -1) : output;
    socket.write(raw + "\n");
    transcript.push({ kind: "action", raw });
  }
  socket.destroy();
  return { settlement, transcript };
}
