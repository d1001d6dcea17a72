import { describe, expect, it } from "vitest";

import { GatewayClient, GatewayError } from "../src/api.js";
import { makeFakeGateway } from "./fake_gateway.js";

describe("GatewayClient", () => {
  it("lists databases with table counts", async () => {
    const { fetchImpl } = makeFakeGateway();
    const client = new GatewayClient("", fetchImpl);
    const dbs = await client.listDatabases();
    expect(dbs.map((d) => d.db_id)).toEqual(["flights", "warehouse"]);
    expect(dbs[0].table_count).toBe(3);
  });

  it("creates a session and posts messages", async () => {
    const { fetchImpl, postedQuestions } = makeFakeGateway();
    const client = new GatewayClient("", fetchImpl);
    const created = await client.createSession("flights");
    expect(created.session_id).toBe("fixture-session");

    const turn = await client.sendMessage(created.session_id, "Thank you!");
    expect(turn.outcome.detected_type).toBe("improper");
    expect(turn.outcome.candidate_sqls).toEqual([]);
    expect(postedQuestions).toEqual(["Thank you!"]);

    const transcript = await client.getTranscript(created.session_id);
    expect(transcript.turns).toHaveLength(1);
    expect(transcript.turns[0].question).toBe("Thank you!");
  });

  it("surfaces gateway error payloads as typed errors", async () => {
    const { fetchImpl } = makeFakeGateway();
    const client = new GatewayClient("", fetchImpl);
    await expect(client.createSession("nope")).rejects.toMatchObject({
      kind: "unknown_database",
      status: 404,
    });
    await expect(client.getTranscript("ghost")).rejects.toBeInstanceOf(GatewayError);
  });
});
