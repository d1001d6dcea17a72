// Controller: database picker, message loop, single in-flight message per
// session. After every send the transcript is re-fetched from the gateway and
// re-rendered, so the view always reproduces server state.

import { GatewayClient, GatewayError } from "./api.js";
import { renderTranscript } from "./view.js";

export class ChatApp {
  private sessionId: string | null = null;
  private pending = false;

  private picker: HTMLSelectElement;
  private startButton: HTMLButtonElement;
  private header: HTMLElement;
  private transcriptHost: HTMLElement;
  private input: HTMLInputElement;
  private sendButton: HTMLButtonElement;
  private banner: HTMLElement;

  constructor(private root: HTMLElement, private client: GatewayClient) {
    this.root.innerHTML = `
      <div class="topbar">
        <select class="db-picker"></select>
        <button class="start">Start session</button>
        <span class="session-header"></span>
      </div>
      <div class="banner" hidden></div>
      <div class="transcript-host"></div>
      <form class="composer">
        <input class="message-input" placeholder="Ask about the data..." disabled />
        <button class="send" type="submit" disabled>Send</button>
      </form>`;
    this.picker = root.querySelector(".db-picker")!;
    this.startButton = root.querySelector(".start")!;
    this.header = root.querySelector(".session-header")!;
    this.transcriptHost = root.querySelector(".transcript-host")!;
    this.input = root.querySelector(".message-input")!;
    this.sendButton = root.querySelector(".send")!;
    this.banner = root.querySelector(".banner")!;

    this.startButton.addEventListener("click", (e) => {
      e.preventDefault();
      void this.start(this.picker.value);
    });
    root.querySelector(".composer")!.addEventListener("submit", (e) => {
      e.preventDefault();
      const text = this.input.value.trim();
      if (text) void this.send(text);
    });
  }

  async init(): Promise<void> {
    try {
      const dbs = await this.client.listDatabases();
      this.picker.innerHTML = "";
      for (const db of dbs) {
        const opt = document.createElement("option");
        opt.value = db.db_id;
        opt.textContent = `${db.db_id} (${db.table_count} tables)`;
        this.picker.appendChild(opt);
      }
      this.hideError();
    } catch (err) {
      this.showError(err, "Could not reach the gateway.");
    }
  }

  async start(dbId: string): Promise<void> {
    try {
      const created = await this.client.createSession(dbId);
      this.sessionId = created.session_id;
      this.header.textContent = `session on ${created.db_id}`;
      this.input.disabled = false;
      this.sendButton.disabled = false;
      this.hideError();
      await this.refresh();
    } catch (err) {
      this.showError(err, `Could not start a session on ${dbId}.`);
    }
  }

  async send(text: string): Promise<void> {
    if (!this.sessionId || this.pending) return;
    this.pending = true;
    this.setComposerEnabled(false);
    try {
      await this.client.sendMessage(this.sessionId, text);
      this.input.value = "";
      await this.refresh();
      this.hideError();
    } catch (err) {
      this.showError(err, "Message failed; you can try again.");
    } finally {
      this.pending = false;
      this.setComposerEnabled(true);
    }
  }

  async refresh(): Promise<void> {
    if (!this.sessionId) return;
    const transcript = await this.client.getTranscript(this.sessionId);
    this.transcriptHost.innerHTML = "";
    this.transcriptHost.appendChild(
      renderTranscript(transcript.turns, {
        onPickInterpretation: (rewrite) => void this.send(rewrite),
      }),
    );
  }

  private setComposerEnabled(enabled: boolean): void {
    this.input.disabled = !enabled || this.sessionId === null;
    this.sendButton.disabled = !enabled || this.sessionId === null;
  }

  private showError(err: unknown, fallback: string): void {
    const message =
      err instanceof GatewayError ? `${fallback} (${err.kind}: ${err.message})`
        : fallback;
    this.banner.textContent = message;
    this.banner.hidden = false;
  }

  private hideError(): void {
    this.banner.hidden = true;
  }
}
