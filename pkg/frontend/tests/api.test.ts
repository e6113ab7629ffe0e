import { describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";

type Recorded = { url: string; init?: RequestInit };

function fakeFetch(status: number, payload: unknown) {
  const calls: Recorded[] = [];
  const impl = async (url: string, init?: RequestInit): Promise<Response> => {
    calls.push({ url, init });
    return new Response(payload === undefined ? null : JSON.stringify(payload), {
      status,
      headers: { "Content-Type": "application/json" },
    });
  };
  return { calls, impl };
}

describe("api client", () => {
  it("builds urls and json bodies", async () => {
    const { calls, impl } = fakeFetch(201, {
      session_id: "s1",
      persona: { role: null, event: null, word_limit: null },
      rag_enabled: true,
      created_at: 0,
      updated_at: 0,
      turn_count: 0,
    });
    const client = new ApiClient("http://host:1", impl);
    const session = await client.createSession({ rag_enabled: true });
    expect(session.session_id).toBe("s1");
    expect(calls[0]!.url).toBe("http://host:1/api/sessions");
    expect(calls[0]!.init?.method).toBe("POST");
    expect(JSON.parse(String(calls[0]!.init?.body))).toEqual({ rag_enabled: true });
  });

  it("escapes session ids in paths", async () => {
    const { calls, impl } = fakeFetch(200, { reply: "r", contexts: [], latency_ms: 1, retrieval_fallback: false });
    await new ApiClient("http://h", impl).sendMessage("a/b c", "hi");
    expect(calls[0]!.url).toBe("http://h/api/sessions/a%2Fb%20c/messages");
  });

  it("maps structured errors to ApiError", async () => {
    const { impl } = fakeFetch(404, { error_code: "session_not_found", message: "unknown session: s9" });
    const error = await new ApiClient("http://h", impl).getSession("s9").catch((e) => e);
    expect(error).toBeInstanceOf(ApiError);
    expect(error.status).toBe(404);
    expect(error.errorCode).toBe("session_not_found");
    expect(error.message).toContain("s9");
  });

  it("handles bodyless 204 responses", async () => {
    const { impl } = fakeFetch(204, undefined);
    await expect(new ApiClient("http://h", impl).deleteSession("s1")).resolves.toBeUndefined();
  });

  it("falls back to a generic error on non-json failures", async () => {
    const impl = async (): Promise<Response> => new Response("oops", { status: 500 });
    const error = await new ApiClient("http://h", impl).health().catch((e) => e);
    expect(error).toBeInstanceOf(ApiError);
    expect(error.errorCode).toBe("unknown_error");
    expect(error.message).toContain("500");
  });

  it("wraps network failures", async () => {
    const impl = async (): Promise<Response> => {
      throw new TypeError("fetch failed");
    };
    const error = await new ApiClient("http://h", impl).health().catch((e) => e);
    expect(error).toBeInstanceOf(ApiError);
    expect(error.status).toBe(0);
    expect(error.errorCode).toBe("network_error");
  });
});
