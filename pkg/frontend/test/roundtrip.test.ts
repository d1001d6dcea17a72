// The full UI round trip against the recorded gateway contract: start a
// session, ask the ambiguous question, check both interpretation cards, click
// one, and confirm its rewrite goes out verbatim as the next user turn.

import { beforeEach, describe, expect, it, vi } from "vitest";

import { GatewayClient } from "../src/api.js";
import { ChatApp } from "../src/app.js";
import type { ApiTurn } from "../src/types.js";
import { makeFakeGateway } from "./fake_gateway.js";
import fixtures from "./fixtures/gateway_fixtures.json";

const AMBIGUOUS_QUESTION = "What is the flight number of Delta Airlines?";

function ambiguousFixture(): ApiTurn {
  return (fixtures.messages as ApiTurn[])
    .find((m) => m.outcome.detected_type === "ambiguous")!;
}

describe("chat round trip", () => {
  beforeEach(() => {
    document.body.innerHTML = "";
  });

  it("renders interpretation cards and clicking one sends its rewrite", async () => {
    const gateway = makeFakeGateway();
    const root = document.createElement("div");
    document.body.appendChild(root);
    const app = new ChatApp(root, new GatewayClient("", gateway.fetchImpl));

    await app.init();
    expect(root.querySelectorAll(".db-picker option")).toHaveLength(2);

    await app.start("flights");
    expect(root.querySelector(".session-header")!.textContent)
      .toContain("flights");

    await app.send(AMBIGUOUS_QUESTION);
    const cards = root.querySelectorAll(".interpretation-card");
    expect(cards).toHaveLength(2);
    for (const card of cards) {
      expect(card.querySelector(".sql-block")!.textContent).toMatch(/select/i);
      expect(card.querySelector(".result-table tr")).not.toBeNull();
    }

    const expectedRewrite = ambiguousFixture().outcome.rewrites[0];
    (cards[0].querySelector(".pick-interpretation") as HTMLButtonElement).click();
    await vi.waitFor(() => {
      expect(gateway.postedQuestions).toHaveLength(2);
    });
    expect(gateway.postedQuestions[1]).toBe(expectedRewrite);

    await vi.waitFor(() => {
      expect(root.querySelectorAll(".turn")).toHaveLength(2);
    });
    const bubbles = root.querySelectorAll(".question-bubble");
    expect(bubbles[1].textContent).toBe(expectedRewrite);
  });

  it("renders the courtesy turn with a badge and no SQL block", async () => {
    const gateway = makeFakeGateway();
    const root = document.createElement("div");
    document.body.appendChild(root);
    const app = new ChatApp(root, new GatewayClient("", gateway.fetchImpl));

    await app.init();
    await app.start("flights");
    await app.send("Thank you!");

    const turn = root.querySelector(".turn")!;
    expect(turn.querySelector(".type-badge")!.textContent).toBe("improper");
    expect(turn.querySelectorAll(".sql-block")).toHaveLength(0);
    expect(turn.textContent).toContain("You're welcome!");
  });

  it("keeps the view a pure function of the transcript", async () => {
    const gateway = makeFakeGateway();
    const root = document.createElement("div");
    document.body.appendChild(root);
    const app = new ChatApp(root, new GatewayClient("", gateway.fetchImpl));
    await app.init();
    await app.start("flights");
    await app.send(AMBIGUOUS_QUESTION);
    const before = root.querySelector(".transcript-host")!.innerHTML;
    await app.refresh();  // re-fetching must reproduce the same view
    expect(root.querySelector(".transcript-host")!.innerHTML).toBe(before);
  });

  it("shows an error banner when the gateway is down", async () => {
    const down = async () => {
      throw new Error("connection refused");
    };
    const root = document.createElement("div");
    document.body.appendChild(root);
    const app = new ChatApp(root, new GatewayClient("", down));
    await app.init();
    const banner = root.querySelector(".banner") as HTMLElement;
    expect(banner.hidden).toBe(false);
    expect(banner.textContent).toContain("gateway");
  });
});
