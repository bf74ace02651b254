/**
 * Prompt assembly for the bridged model.
 *
 * The system blocks mirror the evaluation harness's versioned prompt
 * fixtures (policy public_evidence_v1); the per-turn user message carries
 * the textual viewport, remaining budgets, dialogue history, and any
 * feedback booleans the server exposed.
 */

import { Observation } from "./protocol.js";
import { renderViewport } from "./viewport.js";

const COORDINATE_RULE =
  "For interact_pixel, output x and y in normalized_1000 coordinates: integers in [0, 1000], where (0,0) is the top-left and (1000,1000) is the bottom-right corner.";

const BLOCK1_TEMPLATE = `You are an embodied agent in a simulated environment with an egocentric (first-person) view.
Each step you only see local observations; plan and act under partial observability.
Ground decisions in the task, the current observation, recent observation history when available, and the allowed actions schema.
Actions are embodied attempts in the scene, not symbolic shortcuts.
Use only public evidence from this episode. Do not assume hidden simulator state or hidden success signals.
For state-recognition tasks, report the observed state label (for example: on/off or open/closed) rather than mapping the state to task success/fail.
Mere visibility, proximity, or an attempted action is not enough; do not report success from visual plausibility alone.
Do not claim completion from visual plausibility alone when the task requires changing world state.
Task: <TASK_INSTRUCTION>`;

const BLOCK2 = `## Allowed actions
- navigate | look | interact_pixel | report

### navigate
- mode (enum, required): forward, backward, turn_left, turn_right
- magnitude (number, required): step count (forward/backward) or rotation in degrees (turns)

### look
- direction (enum, required): up, down
- magnitude (number, required): pitch change in degrees

### interact_pixel
- intent (enum, required): one of the canonical intents below
- x (int, required unless intent is drop): horizontal coordinate in the current frame
- y (int, required unless intent is drop): vertical coordinate in the current frame

### report
- status (enum, required): success, fail, unsafe, invalid, on, off, open, closed
- summary (string, required): brief justification for the chosen status

Canonical intents for interact_pixel:
- ground: point at / locate an object without changing world state (requires x, y)
- open_access: open a container or access point (requires x, y)
- close_access: close a container or access point (requires x, y)
- activate: turn on / toggle on (requires x, y)
- deactivate: turn off / toggle off (requires x, y)
- pick: pick up an object (requires x, y)
- place: place the held object at the target (requires x, y)
- drop: drop the currently held object (no coordinates)

Report statuses:
- success: the task goal has been achieved
- fail: the task cannot be completed
- unsafe: a safety concern prevents completion
- invalid: the task is invalid or unsolvable
- on: state-recognition report: observed state is on
- off: state-recognition report: observed state is off
- open: state-recognition report: observed state is open
- closed: state-recognition report: observed state is closed`;

const BLOCK3 = `## Grounding Rules
- Use only the frame whose \`role\` is \`current\` for visibility judgments and interact_pixel targeting.
- interact_pixel acts on the object currently under the specified location in the current frame.
- Do not assume hidden success state; rely on subsequent public observations and allowed feedback fields from this episode.`;

const BLOCK4 = `## Output format
Return exactly one JSON object and nothing else.
Required keys: \`skill_name\`, \`arguments\`.
Optional keys: \`thought\`, \`cognitive_state\`.
Use the exact action names from the allowed-actions schema above; do not invent aliases or synonyms.
Do not output prose, markdown, code fences, or multiple JSON objects.
If you include \`thought\`, keep it to one short sentence.`;

export function systemPrompt(instruction: string): string {
  const block1 = BLOCK1_TEMPLATE.replace("<TASK_INSTRUCTION>", instruction);
  return [COORDINATE_RULE, block1, BLOCK2, BLOCK3, BLOCK4].join("\n");
}

export function userMessage(observation: Observation): string {
  const parts: string[] = [];
  parts.push(
    `Step ${observation.step}. Steps remaining: ${observation.steps_remaining}. ` +
      `Invalid actions remaining: ${observation.invalids_remaining}.`,
  );
  if (observation.feedback) {
    parts.push(
      `Action feedback: too_far=${observation.feedback.too_far} ` +
        `path_blocked=${observation.feedback.path_blocked}`,
    );
  }
  parts.push(renderViewport(observation.frame));
  if (observation.history.length > 0) {
    const turns = observation.history
      .map(([summary, raw]) => `- ${summary} -> ${raw}`)
      .join("\n");
    parts.push(`Dialogue history (oldest first):\n${turns}`);
  }
  parts.push("Respond with exactly one JSON action object.");
  return parts.join("\n\n");
}
