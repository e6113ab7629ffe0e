/** Pure HTML-string renderers over UiSessionState.
 *
 * Kept free of DOM APIs so every fragment is unit-testable; main.ts owns
 * the single innerHTML swap and event wiring.
 */

import type { SourceCard } from "./api.js";
import { EVENTS, ROLES, type TurnView, type UiSessionState } from "./state.js";

export function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;")
    .replaceAll("'", "&#39;");
}

export function renderSourceCard(card: SourceCard): string {
  const path = card.heading_path.map(escapeHtml).join(" &gt; ");
  return (
    `<div class="source-card" data-chunk-id="${escapeHtml(card.chunk_id)}">` +
    `<span class="source-rank">${card.rank}</span>` +
    `<span class="source-doc">${escapeHtml(card.doc_id)}</span>` +
    `<span class="source-path">${path}</span>` +
    `<span class="source-score">${card.fused_score.toFixed(3)}</span>` +
    `</div>`
  );
}

export function renderTurn(turn: TurnView): string {
  const classes = ["turn", `turn-${turn.speaker}`];
  if (turn.error) classes.push("turn-error");
  const sources =
    turn.sources.length > 0
      ? `<div class="sources">${turn.sources.map(renderSourceCard).join("")}</div>`
      : "";
  const fallback = turn.fallback
    ? `<div class="fallback-note">keyword-only retrieval (embedding backend unavailable)</div>`
    : "";
  return (
    `<div class="${classes.join(" ")}">` +
    `<div class="bubble">${escapeHtml(turn.text)}</div>` +
    fallback +
    sources +
    `</div>`
  );
}

export function renderTranscript(state: UiSessionState): string {
  const summaries = state.summaries
    .map((s) => `<div class="summary-marker">${escapeHtml(s)}</div>`)
    .join("");
  const turns = state.turns.map(renderTurn).join("");
  return `<div class="transcript">${summaries}${turns}</div>`;
}

function renderOptions(values: readonly string[], selected: string | null): string {
  const blank = `<option value=""${selected === null ? " selected" : ""}>(none)</option>`;
  const rest = values
    .map(
      (value) =>
        `<option value="${escapeHtml(value)}"${value === selected ? " selected" : ""}>` +
        `${escapeHtml(value)}</option>`,
    )
    .join("");
  return blank + rest;
}

export function renderControls(state: UiSessionState): string {
  return (
    `<div class="controls">` +
    `<label>Role <select id="role">${renderOptions(ROLES, state.role)}</select></label>` +
    `<label>Event <select id="event">${renderOptions(EVENTS, state.event)}</select></label>` +
    `<label><input type="checkbox" id="rag"${state.ragEnabled ? " checked" : ""}/> ` +
    `Ground answers in the corpus</label>` +
    `<button id="summarize"${state.sessionId ? "" : " disabled"}>Summarize older turns</button>` +
    `</div>`
  );
}

export function renderComposer(state: UiSessionState): string {
  const disabled = state.pending || state.sessionId === null ? " disabled" : "";
  return (
    `<form id="composer">` +
    `<input id="message" type="text" placeholder="Ask the coach" autocomplete="off"${disabled}/>` +
    `<button id="send" type="submit"${disabled}>${state.pending ? "Waiting" : "Send"}</button>` +
    `</form>`
  );
}

export function renderApp(state: UiSessionState): string {
  const notice = state.notice
    ? `<div class="notice">${escapeHtml(state.notice)}</div>`
    : "";
  const start = state.sessionId
    ? `<div class="session-id">session ${escapeHtml(state.sessionId)}</div>`
    : `<button id="start">Start session</button>`;
  return (
    `<div class="app">` +
    `<h1>Essence Coach</h1>` +
    renderControls(state) +
    start +
    notice +
    renderTranscript(state) +
    renderComposer(state) +
    `</div>`
  );
}
