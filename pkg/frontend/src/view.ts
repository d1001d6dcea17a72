// Pure DOM builders: the rendered transcript is a function of the gateway
// payloads plus the pending-input flag, nothing else.

import {
  ApiTurn,
  Preview,
  TurnOutcomePayload,
  isPreviewError,
} from "./types.js";

export interface ViewHandlers {
  onPickInterpretation: (rewrite: string) => void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderResultTable(preview: Preview): HTMLElement {
  if (isPreviewError(preview)) {
    return el("div", "preview-error",
      `execution failed (${preview.error.kind}): ${preview.error.message}`);
  }
  const wrap = el("div", "result-table-wrap");
  const table = el("table", "result-table");
  if (preview.columns.length) {
    const head = el("tr");
    for (const col of preview.columns) head.appendChild(el("th", "", col));
    table.appendChild(head);
  }
  for (const row of preview.rows) {
    const tr = el("tr");
    for (const cell of row) {
      tr.appendChild(el("td", "", cell === null ? "NULL" : String(cell)));
    }
    table.appendChild(tr);
  }
  wrap.appendChild(table);
  const note = preview.truncated
    ? `${preview.row_count} row(s), preview truncated`
    : `${preview.row_count} row(s)`;
  wrap.appendChild(el("div", "row-count", note));
  return wrap;
}

function renderSqlBlock(sql: string): HTMLElement {
  const pre = el("pre", "sql-block");
  pre.appendChild(el("code", "", sql));
  return pre;
}

function renderInterpretations(
  outcome: TurnOutcomePayload,
  handlers: ViewHandlers,
): HTMLElement {
  const wrap = el("div", "interpretations");
  outcome.rewrites.forEach((rewrite, i) => {
    const card = el("div", "interpretation-card");
    card.appendChild(el("div", "interpretation-title", `Interpretation ${i + 1}`));
    card.appendChild(el("div", "interpretation-rewrite", rewrite));
    const sql = outcome.candidate_sqls[i];
    if (sql !== undefined) card.appendChild(renderSqlBlock(sql));
    const preview = outcome.previews[i];
    if (preview !== undefined) card.appendChild(renderResultTable(preview));
    const pick = el("button", "pick-interpretation", "Ask this");
    pick.addEventListener("click", () => handlers.onPickInterpretation(rewrite));
    card.appendChild(pick);
    wrap.appendChild(card);
  });
  const rephrase = el("div", "rephrase-hint",
    "Pick an interpretation above, or rephrase your question below.");
  wrap.appendChild(rephrase);
  return wrap;
}

function renderTrace(outcome: TurnOutcomePayload): HTMLElement | null {
  if (!outcome.trace || !outcome.trace.length) return null;
  const details = el("details", "trace-inspector");
  details.appendChild(el("summary", "", `trace (${outcome.trace.length} steps)`));
  const list = el("ol");
  for (const step of outcome.trace) {
    const note = step.note ? ` - ${step.note}` : "";
    list.appendChild(el("li", "", `${step.agent}${note} (retries: ${step.retries})`));
  }
  details.appendChild(list);
  return details;
}

export function renderTurn(turn: ApiTurn, handlers: ViewHandlers): HTMLElement {
  const wrap = el("div", "turn");
  const bubble = el("div", "question-bubble", turn.question);
  wrap.appendChild(bubble);

  const outcome = turn.outcome;
  const answer = el("div", "answer");
  answer.appendChild(el("span", `type-badge type-${outcome.detected_type}`,
    outcome.detected_type));

  // non-ambiguous turns list their SQL plainly; ambiguous turns get cards
  if (outcome.detected_type === "ambiguous") {
    answer.appendChild(el("div", "response-text", outcome.response.split("\n")[0]));
    answer.appendChild(renderInterpretations(outcome, handlers));
  } else {
    outcome.candidate_sqls.forEach((sql, i) => {
      answer.appendChild(renderSqlBlock(sql));
      const preview = outcome.previews[i];
      if (preview !== undefined) answer.appendChild(renderResultTable(preview));
    });
    answer.appendChild(el("div", "response-text", outcome.response));
  }
  const trace = renderTrace(outcome);
  if (trace) answer.appendChild(trace);
  wrap.appendChild(answer);
  return wrap;
}

export function renderTranscript(
  turns: ApiTurn[],
  handlers: ViewHandlers,
): HTMLElement {
  const wrap = el("div", "transcript");
  for (const turn of turns) wrap.appendChild(renderTurn(turn, handlers));
  return wrap;
}
