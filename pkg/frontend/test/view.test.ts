import { describe, expect, it } from "vitest";

import type { ApiTurn } from "../src/types.js";
import { renderResultTable, renderTurn } from "../src/view.js";
import fixtures from "./fixtures/gateway_fixtures.json";

const messages = fixtures.messages as ApiTurn[];
const noop = { onPickInterpretation: () => undefined };

function turnOfType(type: string): ApiTurn {
  const turn = messages.find((m) => m.outcome.detected_type === type);
  if (!turn) throw new Error(`fixture missing a ${type} turn`);
  return turn;
}

describe("renderTurn", () => {
  it("improper turns show a type badge and no SQL block", () => {
    const node = renderTurn(turnOfType("improper"), noop);
    const badge = node.querySelector(".type-badge")!;
    expect(badge.textContent).toBe("improper");
    expect(node.querySelectorAll(".sql-block")).toHaveLength(0);
    expect(node.textContent).toContain("You're welcome!");
  });

  it("unanswerable turns carry the explanation text", () => {
    const node = renderTurn(turnOfType("unanswerable"), noop);
    expect(node.querySelector(".type-badge")!.textContent).toBe("unanswerable");
    expect(node.querySelectorAll(".sql-block")).toHaveLength(0);
    expect(node.textContent).toContain("departure time");
  });

  it("answerable turns render the SQL and its result table", () => {
    const node = renderTurn(turnOfType("answerable"), noop);
    expect(node.querySelectorAll(".sql-block")).toHaveLength(1);
    expect(node.querySelector(".result-table")).not.toBeNull();
  });

  it("ambiguous turns render one card per interpretation", () => {
    const node = renderTurn(turnOfType("ambiguous"), noop);
    const cards = node.querySelectorAll(".interpretation-card");
    expect(cards).toHaveLength(2);
    for (const card of cards) {
      expect(card.querySelector(".sql-block")!.textContent).toMatch(/select/i);
      expect(card.querySelector(".result-table")).not.toBeNull();
      expect(card.querySelector(".pick-interpretation")).not.toBeNull();
    }
  });

  it("interpretation cards appear only on ambiguous turns", () => {
    for (const turn of messages) {
      const node = renderTurn(turn, noop);
      const cards = node.querySelectorAll(".interpretation-card").length;
      expect(cards > 0).toBe(turn.outcome.detected_type === "ambiguous");
    }
  });
});

describe("renderResultTable", () => {
  it("renders rows, NULLs, and the row count", () => {
    const node = renderResultTable({
      columns: ["a", "b"],
      rows: [[1, null], [2, "x"]],
      row_count: 2,
      truncated: false,
    });
    expect(node.querySelectorAll("tr")).toHaveLength(3); // header + 2 rows
    expect(node.textContent).toContain("NULL");
    expect(node.querySelector(".row-count")!.textContent).toBe("2 row(s)");
  });

  it("renders execution errors distinctly", () => {
    const node = renderResultTable({
      error: { kind: "timeout", message: "deadline exceeded" },
    });
    expect(node.className).toBe("preview-error");
    expect(node.textContent).toContain("timeout");
  });
});
