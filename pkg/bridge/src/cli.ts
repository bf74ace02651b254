#!/usr/bin/env node
/**
 * Bridge one episode from a serving evaluation harness to a model
 * endpoint (or a scripted mock), writing a JSON-Lines transcript of every
 * exchanged line. One episode per process invocation.
 *
 * Usage:
 *   gridclosure-bridge --server 127.0.0.1:4700 --mock-script actions.json \
 *       --transcript episode.jsonl
 *   gridclosure-bridge --server 127.0.0.1:4700 --endpoint http://host:8000/v1 \
 *       --model some-model --token-env API_TOKEN --transcript episode.jsonl
 */

import * as fs from "node:fs";
import { parseArgs } from "node:util";

import { bridgeEpisode } from "./bridge.js";
import { ChatCompletionsEndpoint, MockEndpoint, ModelEndpoint } from "./endpoint.js";

async function main(): Promise<number> {
  const { values } = parseArgs({
    options: {
      server: { type: "string" },
      endpoint: { type: "string" },
      model: { type: "string" },
      "token-env": { type: "string" },
      "timeout-ms": { type: "string", default: "60000" },
      "mock-script": { type: "string" },
      transcript: { type: "string" },
    },
  });

  if (!values.server) {
    console.error("--server host:port is required");
    return 2;
  }
  const [host, portText] = values.server.split(":");
  const port = Number(portText);
  if (!host || !Number.isInteger(port)) {
    console.error(`bad --server value: ${values.server}`);
    return 2;
  }

  let endpoint: ModelEndpoint;
  let mode: string;
  if (values["mock-script"]) {
    const script = JSON.parse(fs.readFileSync(values["mock-script"], "utf-8")) as string[];
    endpoint = new MockEndpoint(script);
    mode = `mock:${values["mock-script"]}`;
  } else if (values.endpoint && values.model) {
    endpoint = new ChatCompletionsEndpoint({
      baseUrl: values.endpoint,
      model: values.model,
      authTokenEnv: values["token-env"],
      timeoutMs: Number(values["timeout-ms"]),
    });
    mode = `endpoint:${values.model}`;
  } else {
    console.error("provide either --mock-script or --endpoint plus --model");
    return 2;
  }

  const result = await bridgeEpisode(host, port, endpoint, mode);
  if (values.transcript) {
    const lines = result.transcript.map((entry) => JSON.stringify(entry)).join("\n") + "\n";
    fs.writeFileSync(values.transcript, lines);
  }
  if (result.settlement === null) {
    console.error("episode ended without a settlement line");
    return 1;
  }
  console.log(JSON.stringify(result.settlement));
  return 0;
}

main().then(
  (code) => process.exit(code),
  (error) => {
    console.error(error);
    process.exit(1);
  },
);
