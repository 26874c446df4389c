// Transcript state: a list of turn views plus the live session handle.
// Options are attached only to the latest bot question so stale rounds
// cannot be clicked.

import type { GranuleOption, ProviderView, Reply } from "./api.js";

export interface ChatTurnView {
  speaker: "user" | "bot";
  text: string;
  options: GranuleOption[];
  services: ProviderView[];
  round: number;
  end: boolean;
}

export interface ChatState {
  sessionId: string | null;
  turns: ChatTurnView[];
  finished: boolean;
  error: string | null;
}

export function initialState(): ChatState {
  return { sessionId: null, turns: [], finished: false, error: null };
}

export function withUserTurn(state: ChatState, text: string): ChatState {
  // earlier options become unclickable history once the user answers
  const history = state.turns.map((t) => ({ ...t, options: [] as GranuleOption[] }));
  const round = history.length ? history[history.length - 1].round : 1;
  const turn: ChatTurnView = {
    speaker: "user", text, options: [], services: [], round, end: false,
  };
  return { ...state, error: null, turns: [...history, turn] };
}

export function withReply(state: ChatState, sessionId: string | null, reply: Reply): ChatState {
  const turn: ChatTurnView = {
    speaker: "bot",
    text: reply.text,
    options: reply.kind === "question" ? reply.options : [],
    services: reply.kind === "final_recommendation" ? reply.services : [],
    round: reply.round,
    end: reply.end_tag === 1,
  };
  return {
    sessionId,
    turns: [...state.turns, turn],
    finished: reply.end_tag === 1 || reply.kind === "chat_deflection",
    error: null,
  };
}

export function withError(state: ChatState, message: string): ChatState {
  return { ...state, error: message };
}

export function activeOptions(state: ChatState): GranuleOption[] {
  if (state.finished || !state.turns.length) return [];
  const last = state.turns[state.turns.length - 1];
  return last.speaker === "bot" ? last.options : [];
}

export function currentRound(state: ChatState): number {
  const bots = state.turns.filter((t) => t.speaker === "bot");
  return bots.length ? bots[bots.length - 1].round : 0;
}
