// DOM rendering and event wiring. The app is a pure view over the API:
// every visible fact comes out of a server reply.

import { ApiClient, Reply } from "./api.js";
import {
  ChatState,
  activeOptions,
  currentRound,
  initialState,
  withError,
  withReply,
  withUserTurn,
} from "./state.js";

export class ChatApp {
  state: ChatState = initialState();
  replies: Reply[] = [];

  constructor(private root: HTMLElement, private client: ApiClient) {
    this.root.innerHTML = `
      <div class="transcript" data-role="transcript"></div>
      <div class="error" data-role="error" hidden></div>
      <form data-role="form">
        <input data-role="input" type="text" autocomplete="off"
               placeholder="Describe the service you need" />
        <button type="submit">Send</button>
        <button type="button" data-role="restart">Start over</button>
      </form>`;
    this.form.addEventListener("submit", (event) => {
      event.preventDefault();
      const text = this.input.value.trim();
      if (text) {
        this.input.value = "";
        void this.send(text);
      }
    });
    this.restartButton.addEventListener("click", () => this.reset());
    this.render();
  }

  async send(text: string): Promise<void> {
    this.state = withUserTurn(this.state, text);
    this.render();
    try {
      if (this.state.sessionId === null || this.state.finished) {
        const created = await this.client.createSession(text);
        this.applyReply(created.session_id, created.reply);
      } else {
        const reply = await this.client.postTurn(this.state.sessionId, { utterance: text });
        this.applyReply(this.state.sessionId, reply);
      }
    } catch (err) {
      this.state = withError(this.state, String((err as Error).message ?? err));
      this.render();
    }
  }

  async clickOption(index: number): Promise<void> {
    const sessionId = this.state.sessionId;
    if (sessionId === null || this.state.finished) return;
    const option = activeOptions(this.state)[index];
    this.state = withUserTurn(this.state, option ? option.label : `option ${index + 1}`);
    this.render();
    try {
      const reply = await this.client.postTurn(sessionId, { option: index });
      this.applyReply(sessionId, reply);
    } catch (err) {
      this.state = withError(this.state, String((err as Error).message ?? err));
      this.render();
    }
  }

  reset(): void {
    this.state = initialState();
    this.replies = [];
    this.render();
  }

  private applyReply(sessionId: string | null, reply: Reply): void {
    this.replies.push(reply);
    this.state = withReply(this.state, sessionId, reply);
    this.render();
  }

  render(): void {
    const transcript = this.root.querySelector('[data-role="transcript"]') as HTMLElement;
    transcript.innerHTML = "";
    for (const turn of this.state.turns) {
      const bubble = document.createElement("div");
      bubble.className = `turn ${turn.speaker}`;
      const badge = document.createElement("span");
      badge.className = "round-badge";
      badge.textContent = `round ${turn.round}`;
      const text = document.createElement("p");
      text.textContent = turn.text;
      bubble.append(badge, text);
      if (turn.services.length) {
        bubble.append(this.servicesTable(turn));
      }
      transcript.append(bubble);
    }
    const options = activeOptions(this.state);
    if (options.length) {
      const bar = document.createElement("div");
      bar.className = "options";
      options.forEach((option) => {
        const button = document.createElement("button");
        button.type = "button";
        button.className = "option";
        button.dataset.index = String(option.index);
        button.textContent = `${option.index + 1}) ${option.label} (${option.candidates})`;
        button.addEventListener("click", () => void this.clickOption(option.index));
        bar.append(button);
      });
      transcript.append(bar);
    }
    const badge = document.createElement("div");
    badge.className = "status";
    badge.dataset.round = String(currentRound(this.state));
    badge.dataset.finished = String(this.state.finished);
    transcript.append(badge);

    const errorBox = this.root.querySelector('[data-role="error"]') as HTMLElement;
    errorBox.hidden = this.state.error === null;
    errorBox.textContent = this.state.error ?? "";
  }

  private servicesTable(turn: { services: { provider_id: string; attributes: Record<string, string> }[] }): HTMLTableElement {
    const table = document.createElement("table");
    table.className = "services";
    const columns = Object.keys(turn.services[0].attributes);
    const head = table.createTHead().insertRow();
    ["provider", ...columns].forEach((name) => {
      const cell = document.createElement("th");
      cell.textContent = name;
      head.append(cell);
    });
    const body = table.createTBody();
    for (const service of turn.services) {
      const row = body.insertRow();
      row.insertCell().textContent = service.provider_id;
      for (const column of columns) {
        row.insertCell().textContent = service.attributes[column] ?? "";
      }
    }
    return table;
  }

  get form(): HTMLFormElement {
    return this.root.querySelector('[data-role="form"]') as HTMLFormElement;
  }

  get input(): HTMLInputElement {
    return this.root.querySelector('[data-role="input"]') as HTMLInputElement;
  }

  get restartButton(): HTMLButtonElement {
    return this.root.querySelector('[data-role="restart"]') as HTMLButtonElement;
  }
}
