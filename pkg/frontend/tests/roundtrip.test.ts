/** UI round-trip against the live service booted by globalSetup:
 * create a session, send a message, render source cards that resolve
 * against the corpus manifest, and restore the transcript on reload.
 */

import { readFileSync } from "node:fs";
import path from "node:path";
import { describe, expect, inject, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { renderApp, renderTranscript, renderTurn } from "../src/render.js";
import {
  applyReply,
  beginSend,
  initialState,
  stateFromSession,
  stateFromTranscript,
} from "../src/state.js";

const baseUrl = inject("baseUrl");
const repoRoot = inject("repoRoot");

const manifest = JSON.parse(
  readFileSync(path.join(repoRoot, "data", "corpus_manifest.json"), "utf-8"),
) as Array<{ doc_id: string }>;
const manifestDocIds = new Set(manifest.map((doc) => doc.doc_id));

const client = new ApiClient(baseUrl);

describe("ui round-trip against the live service", () => {
  it("serves the full corpus", async () => {
    const health = await client.health();
    expect(health.index_ready).toBe(true);
    expect(health.corpus_chunks).toBe(461);
  });

  it("creates a session, sends, and renders sourced replies", async () => {
    const session = await client.createSession({
      persona: { role: "Developer", event: "Sprint Planning" },
      rag_enabled: true,
    });
    expect(session.persona.role).toBe("Developer");

    let state = stateFromSession(initialState(), session);
    const question = "which alpha tracks how the team collaborates";
    state = beginSend(state, question);
    const reply = await client.sendMessage(session.session_id, question);
    state = applyReply(state, reply);

    expect(reply.contexts.length).toBeGreaterThanOrEqual(1);
    expect(reply.contexts.length).toBeLessThanOrEqual(4);
    for (const card of reply.contexts) {
      expect(manifestDocIds.has(card.doc_id)).toBe(true);
    }

    const html = renderApp(state);
    const cards = html.match(/class="source-card"/g) ?? [];
    expect(cards.length).toBe(reply.contexts.length);
    for (const card of reply.contexts) {
      expect(html).toContain(`data-chunk-id="${card.chunk_id}"`);
    }
    expect(html).toContain("Send");
    expect(state.pending).toBe(false);
  });

  it("restores the transcript on reload", async () => {
    const session = await client.createSession({});
    const question = "what does the work alpha cover";
    const reply = await client.sendMessage(session.session_id, question);

    // Reload simulation: a fresh client state built only from the session
    // id, exactly what boot() does with ?session= in the URL.
    const transcript = await client.getSession(session.session_id);
    const restored = stateFromTranscript(transcript);
    expect(restored.sessionId).toBe(session.session_id);
    expect(restored.turns.map((t) => t.speaker)).toEqual(["user", "assistant"]);
    expect(restored.turns[0]!.text).toBe(question);
    expect(restored.turns[1]!.text).toBe(reply.reply);
    expect(restored.turns[1]!.sources.map((c) => c.chunk_id)).toEqual(
      reply.contexts.map((c) => c.chunk_id),
    );

    const html = renderTranscript(restored);
    for (const card of reply.contexts) {
      expect(html).toContain(`data-chunk-id="${card.chunk_id}"`);
    }
  });

  it("renders zero source cards for rag-off replies", async () => {
    const session = await client.createSession({ rag_enabled: false });
    let state = stateFromSession(initialState(), session);
    state = beginSend(state, "hello coach");
    const reply = await client.sendMessage(session.session_id, "hello coach");
    state = applyReply(state, reply);

    expect(reply.contexts).toEqual([]);
    const html = renderApp(state);
    expect(html).not.toContain("source-card");
  });

  it("applies persona and rag changes to future turns", async () => {
    const session = await client.createSession({});
    const updated = await client.patchSession(session.session_id, {
      persona: { role: "Scrum Master", event: "Retrospective" },
      rag_enabled: false,
    });
    expect(updated.persona.role).toBe("Scrum Master");
    expect(updated.rag_enabled).toBe(false);

    const reply = await client.sendMessage(session.session_id, "how did we do");
    expect(reply.contexts).toEqual([]);
    const transcript = await client.getSession(session.session_id);
    const turn = stateFromTranscript(transcript).turns.at(-1)!;
    expect(renderTurn(turn)).not.toContain("source-card");
  });
});
