/** Pure UI session state and its transitions.
 *
 * The state mirrors the server transcript after each round-trip; rendering
 * reads it without touching the network.  One message may be in flight per
 * session (pending), so the send control stays disabled until the reply or
 * failure lands.
 */

import type {
  MessageReply,
  SessionSummary,
  SourceCard,
  Transcript,
} from "./api.js";

export const ROLES = ["Scrum Master", "Product Owner", "Developer"] as const;
export const EVENTS = [
  "Sprint Planning",
  "Retrospective",
  "Daily Standup",
  "Sprint Review",
] as const;

export interface TurnView {
  speaker: "user" | "assistant";
  text: string;
  sources: SourceCard[];
  error: boolean;
  fallback: boolean;
}

export interface UiSessionState {
  sessionId: string | null;
  role: string | null;
  event: string | null;
  ragEnabled: boolean;
  turns: TurnView[];
  summaries: string[];
  pending: boolean;
  notice: string | null;
}

export function initialState(): UiSessionState {
  return {
    sessionId: null,
    role: null,
    event: null,
    ragEnabled: true,
    turns: [],
    summaries: [],
    pending: false,
    notice: null,
  };
}

export function stateFromSession(
  state: UiSessionState,
  session: SessionSummary,
): UiSessionState {
  return {
    ...state,
    sessionId: session.session_id,
    role: session.persona.role,
    event: session.persona.event,
    ragEnabled: session.rag_enabled,
    notice: null,
  };
}

export function stateFromTranscript(transcript: Transcript): UiSessionState {
  return {
    ...stateFromSession(initialState(), transcript),
    turns: transcript.turns.map((turn) => ({
      speaker: turn.speaker,
      text: turn.text,
      sources: turn.contexts,
      error: turn.error,
      fallback: turn.retrieval_fallback,
    })),
    summaries: [...transcript.summaries],
  };
}

export function beginSend(state: UiSessionState, text: string): UiSessionState {
  return {
    ...state,
    pending: true,
    notice: null,
    turns: [
      ...state.turns,
      { speaker: "user", text, sources: [], error: false, fallback: false },
    ],
  };
}

export function applyReply(state: UiSessionState, reply: MessageReply): UiSessionState {
  // Source cards only ever accompany grounded replies; with RAG off the
  // server sends no contexts and none are invented here.
  const sources = state.ragEnabled ? reply.contexts : [];
  return {
    ...state,
    pending: false,
    turns: [
      ...state.turns,
      {
        speaker: "assistant",
        text: reply.reply,
        sources,
        error: false,
        fallback: reply.retrieval_fallback,
      },
    ],
  };
}

export function failSend(state: UiSessionState, message: string): UiSessionState {
  return { ...state, pending: false, notice: message };
}

export function setPersona(
  state: UiSessionState,
  role: string | null,
  event: string | null,
): UiSessionState {
  return { ...state, role, event };
}

export function setRag(state: UiSessionState, enabled: boolean): UiSessionState {
  return { ...state, ragEnabled: enabled };
}

export function addSummary(
  state: UiSessionState,
  summary: string | null,
): UiSessionState {
  if (summary === null) {
    return { ...state, notice: "Nothing to summarize yet." };
  }
  return { ...state, summaries: [...state.summaries, summary], notice: null };
}
