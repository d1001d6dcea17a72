// Stateful mock of the gateway HTTP contract, driven by the committed wire
// fixtures that were captured from the real gateway running over a replay
// backend. Unrecorded questions get a generic answerable turn so click-through
// flows can continue.

import fixtures from "./fixtures/gateway_fixtures.json";
import type { ApiTurn } from "../src/types.js";

const SESSION_ID = "fixture-session";

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

function fallbackTurn(question: string): ApiTurn {
  return {
    question,
    outcome: {
      detected_type: "answerable",
      candidate_sqls: ["SELECT count(*) FROM flights"],
      rewrites: [],
      previews: [{ columns: ["count(*)"], rows: [[8]], row_count: 1, truncated: false }],
      response: "Here is what I found.",
    },
  };
}

export interface FakeGateway {
  fetchImpl: (input: string, init?: RequestInit) => Promise<Response>;
  postedQuestions: string[];
  turns: ApiTurn[];
}

export function makeFakeGateway(): FakeGateway {
  const turns: ApiTurn[] = [];
  const postedQuestions: string[] = [];
  const recorded = new Map<string, ApiTurn>(
    (fixtures.messages as ApiTurn[]).map((m) => [m.question, m]),
  );

  const fetchImpl = async (input: string, init?: RequestInit): Promise<Response> => {
    const method = init?.method ?? "GET";
    const url = input.split("?")[0];

    if (method === "GET" && url === "/api/databases") {
      return jsonResponse(fixtures.databases);
    }
    if (method === "POST" && url === "/api/sessions") {
      const body = JSON.parse(String(init?.body ?? "{}"));
      const known = (fixtures.databases as { db_id: string }[])
        .some((d) => d.db_id === body.db_id);
      if (!known) {
        return jsonResponse(
          { error: { kind: "unknown_database", message: `no database '${body.db_id}'` } },
          404,
        );
      }
      return jsonResponse({ session_id: SESSION_ID, db_id: body.db_id });
    }
    if (method === "POST" && url === `/api/sessions/${SESSION_ID}/messages`) {
      const body = JSON.parse(String(init?.body ?? "{}"));
      postedQuestions.push(body.question);
      const turn = recorded.get(body.question) ?? fallbackTurn(body.question);
      turns.push(turn);
      return jsonResponse(turn);
    }
    if (method === "GET" && url === `/api/sessions/${SESSION_ID}`) {
      return jsonResponse({ session_id: SESSION_ID, db_id: "flights", turns });
    }
    return jsonResponse(
      { error: { kind: "unknown_session", message: `no route ${method} ${url}` } },
      404,
    );
  };

  return { fetchImpl, postedQuestions, turns };
}
