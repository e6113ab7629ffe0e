/** DOM glue: owns the root element, the URL, and event wiring.
 *
 * All logic lives in api.ts (network) and state.ts/render.ts (pure);
 * this file just routes events through them and repaints.
 */

import { ApiClient } from "./api.js";
import { renderApp } from "./render.js";
import {
  addSummary,
  applyReply,
  beginSend,
  failSend,
  initialState,
  setPersona,
  setRag,
  stateFromSession,
  stateFromTranscript,
  type UiSessionState,
} from "./state.js";

const api = new ApiClient("");
const root = document.getElementById("app") as HTMLElement;
let state: UiSessionState = initialState();

function sessionIdFromUrl(): string | null {
  return new URLSearchParams(window.location.search).get("session");
}

function putSessionIdInUrl(sessionId: string): void {
  const url = new URL(window.location.href);
  url.searchParams.set("session", sessionId);
  window.history.replaceState(null, "", url);
}

function repaint(next: UiSessionState): void {
  state = next;
  root.innerHTML = renderApp(state);
  wire();
}

function wire(): void {
  document.getElementById("start")?.addEventListener("click", () => {
    void startSession();
  });
  document.getElementById("composer")?.addEventListener("submit", (event) => {
    event.preventDefault();
    const input = document.getElementById("message") as HTMLInputElement;
    if (input.value.trim()) void send(input.value);
  });
  document.getElementById("role")?.addEventListener("change", () => {
    void updatePersona();
  });
  document.getElementById("event")?.addEventListener("change", () => {
    void updatePersona();
  });
  document.getElementById("rag")?.addEventListener("change", (event) => {
    void updateRag((event.target as HTMLInputElement).checked);
  });
  document.getElementById("summarize")?.addEventListener("click", () => {
    void summarize();
  });
}

async function startSession(): Promise<void> {
  try {
    const session = await api.createSession({
      persona: { role: state.role, event: state.event },
      rag_enabled: state.ragEnabled,
    });
    putSessionIdInUrl(session.session_id);
    repaint(stateFromSession(state, session));
  } catch (error) {
    repaint(failSend(state, String(error)));
  }
}

async function send(text: string): Promise<void> {
  if (state.pending || state.sessionId === null) return;
  repaint(beginSend(state, text));
  try {
    const reply = await api.sendMessage(state.sessionId, text);
    repaint(applyReply(state, reply));
  } catch (error) {
    repaint(failSend(state, String(error)));
  }
}

async function updatePersona(): Promise<void> {
  const role = (document.getElementById("role") as HTMLSelectElement).value || null;
  const event = (document.getElementById("event") as HTMLSelectElement).value || null;
  repaint(setPersona(state, role, event));
  if (state.sessionId !== null) {
    await api.patchSession(state.sessionId, { persona: { role, event } });
  }
}

async function updateRag(enabled: boolean): Promise<void> {
  repaint(setRag(state, enabled));
  if (state.sessionId !== null) {
    await api.patchSession(state.sessionId, { rag_enabled: enabled });
  }
}

async function summarize(): Promise<void> {
  if (state.sessionId === null) return;
  try {
    const result = await api.summarize(state.sessionId);
    repaint(addSummary(state, result.summary));
  } catch (error) {
    repaint(failSend(state, String(error)));
  }
}

async function boot(): Promise<void> {
  const existing = sessionIdFromUrl();
  if (existing !== null) {
    try {
      const transcript = await api.getSession(existing);
      repaint(stateFromTranscript(transcript));
      return;
    } catch {
      // stale session id in the URL; fall through to a fresh start screen
    }
  }
  repaint(initialState());
}

void boot();
