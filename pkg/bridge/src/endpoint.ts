/**
 * Model endpoints.
 *
 * The live endpoint speaks the chat-completions shape over HTTP; the mock
 * endpoint replays a scripted action list, which makes end-to-end bridge
 * runs fully deterministic. Both return the model text verbatim; the
 * bridge never repairs or rewrites it.
 */

export interface ModelEndpoint {
  complete(system: string, user: string): Promise<string | null>;
}

export interface EndpointConfig {
  baseUrl: string;
  model: string;
  authTokenEnv?: string;
  timeoutMs: number;
}

export class ChatCompletionsEndpoint implements ModelEndpoint {
  constructor(private readonly config: EndpointConfig) {}

  async complete(system: string, user: string): Promise<string | null> {
    const headers: Record<string, string> = { "content-type": "application/json" };
    if (this.config.authTokenEnv) {
      const token = process.env[this.config.authTokenEnv];
      if (token) {
        headers.authorization = `Bearer ${token}`;
      }
    }
    const controller = new AbortController();
    const timer = setTimeout(() => controller.abort(), this.config.timeoutMs);
    try {
      const response = await fetch(`${this.config.baseUrl}/chat/completions`, {
        method: "POST",
        headers,
        body: JSON.stringify({
          model: this.config.model,
          messages: [
            { role: "system", content: system },
            { role: "user", content: user },
          ],
        }),
        signal: controller.signal,
      });
      if (!response.ok) {
        return null;
      }
      const body = (await response.json()) as {
        choices?: { message?: { content?: string } }[];
      };
      const content = body.choices?.[0]?.message?.content;
      return typeof content === "string" ? content : null;
    } catch {
      return null;
    } finally {
      clearTimeout(timer);
    }
  }
}

/** Replays a fixed list of raw action lines; null once exhausted. */
export class MockEndpoint implements ModelEndpoint {
  private cursor = 0;

  constructor(private readonly script: string[]) {}

  async complete(_system: string, _user: string): Promise<string | null> {
    if (this.cursor >= this.script.length) {
      return null;
    }
    return this.script[this.cursor++];
  }
}
