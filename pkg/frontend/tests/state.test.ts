import { describe, expect, it } from "vitest";

import type { Reply } from "../src/api.js";
import {
  activeOptions,
  currentRound,
  initialState,
  withReply,
  withUserTurn,
} from "../src/state.js";

function question(round = 1, options = 2): Reply {
  return {
    schema_version: 1,
    kind: "question",
    text: "What are the experience restricts?",
    options: Array.from({ length: options }, (_, index) => ({
      index,
      label: `experience ${index}`,
      attributes: {},
      candidates: 4,
    })),
    services: [],
    end_tag: 0,
    round,
  };
}

function final(round = 2): Reply {
  return {
    schema_version: 1,
    kind: "final_recommendation",
    text: "Prepare two services for you:",
    options: [],
    services: [
      { provider_id: "a", match_score: 2, attributes: { price: "1500" } },
      { provider_id: "b", match_score: 1, attributes: { price: "1700" } },
    ],
    end_tag: 1,
    round,
  };
}

describe("chat state", () => {
  it("attaches options only to the latest question", () => {
    let state = withUserTurn(initialState(), "housekeeper please");
    state = withReply(state, "s1", question(1));
    expect(activeOptions(state)).toHaveLength(2);

    state = withUserTurn(state, "option one it is");
    expect(activeOptions(state)).toHaveLength(0);
    for (const turn of state.turns) {
      if (turn.speaker === "bot") expect(turn.options).toHaveLength(0);
    }
  });

  it("final replies carry services and finish the session", () => {
    let state = withReply(initialState(), "s1", question(1));
    state = withUserTurn(state, "1");
    state = withReply(state, "s1", final(2));
    expect(state.finished).toBe(true);
    expect(activeOptions(state)).toHaveLength(0);
    const last = state.turns[state.turns.length - 1];
    expect(last.services.map((s) => s.provider_id)).toEqual(["a", "b"]);
  });

  it("round badge follows the latest bot reply", () => {
    let state = withReply(initialState(), "s1", question(1));
    expect(currentRound(state)).toBe(1);
    state = withReply(state, "s1", question(2));
    expect(currentRound(state)).toBe(2);
  });

  it("chat deflection finishes without a session", () => {
    const deflection: Reply = {
      schema_version: 1,
      kind: "chat_deflection",
      text: "I can help you book services.",
      options: [],
      services: [],
      end_tag: 0,
      round: 1,
    };
    const state = withReply(initialState(), null, deflection);
    expect(state.finished).toBe(true);
    expect(state.sessionId).toBeNull();
  });
});
