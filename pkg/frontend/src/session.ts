/** Review-session flow: prompt loading, decision submission with a
 * double-submit guard, and terminal summary. Score and accuracy shown in
 * the HUD always come from server payloads, never client arithmetic. */

import type {
  ApiClient,
  DecisionResponse,
  NextResponse,
  PromptView,
  SessionMetrics,
  SessionOptions,
} from "./api.js";
import { ApiError } from "./api.js";
import { Hud, renderSummary } from "./hud.js";
import type { TreeView } from "./tree.js";

export interface SessionElements {
  submit: HTMLButtonElement;
  banner: HTMLElement;
  status: HTMLElement;
  notice: HTMLElement;
  summary: HTMLElement;
}

const DISCLOSURE =
  "The suggested parent is correct about half the time. Verify before accepting.";

type SessionApi = Pick<
  ApiClient,
  "createSession" | "nextPrompt" | "submitDecision" | "sessionMetrics"
>;

export class SessionController {
  sessionId: string | null = null;
  current: PromptView | null = null;
  finished = false;
  lastDecision: DecisionResponse | null = null;
  lastMetrics: SessionMetrics | null = null;
  private inFlight = false;

  constructor(
    private api: SessionApi,
    private tree: TreeView,
    private hud: Hud,
    private els: SessionElements,
  ) {
    els.submit.disabled = true;
    els.submit.addEventListener("click", () => void this.submit());
    hud.onExpire = () => {
      if (!this.finished && !this.inFlight) void this.loadNext();
    };
  }

  async start(condition: string, opts: SessionOptions = {}): Promise<void> {
    const created = await this.api.createSession(condition, opts);
    this.sessionId = created.session_id;
    this.finished = false;
    this.current = null;
    this.lastDecision = null;
    this.lastMetrics = null;
    this.els.summary.innerHTML = "";
    this.els.notice.textContent = "";
    this.els.banner.textContent = DISCLOSURE;
    this.els.status.textContent = `session ${created.session_id} (${created.condition})`;
    await this.loadNext();
  }

  async loadNext(): Promise<void> {
    if (!this.sessionId || this.finished) return;
    const resp: NextResponse = await this.api.nextPrompt(this.sessionId);
    this.hud.update(resp);
    if (resp.status === "prompt") {
      this.current = resp.prompt;
      this.tree.clearPreselect();
      this.tree.resetExpansion();
      await this.tree.revealPath(resp.prompt.preselected_path);
      this.els.status.textContent = `prompt ${resp.prompt.index} of ${resp.prompt.total}: place "${resp.prompt.query.label}"`;
      this.els.submit.disabled = false;
    } else {
      await this.finish(resp.status);
    }
  }

  async submit(): Promise<void> {
    if (this.inFlight || this.finished || !this.current) return;
    const chosen = this.tree.selected;
    if (chosen === null) return;
    this.inFlight = true;
    this.els.submit.disabled = true;
    const promptId = this.current.prompt_id;
    try {
      const resp = await this.api.submitDecision(this.sessionId!, promptId, chosen);
      this.lastDecision = resp;
      this.hud.update(resp);
      this.els.notice.textContent = resp.correct ? "correct" : "incorrect";
      this.current = null;
      this.inFlight = false;
      await this.loadNext();
    } catch (err) {
      this.inFlight = false;
      if (err instanceof ApiError && err.status === 409) {
        // Already answered on the server; move on rather than resubmit.
        this.els.notice.textContent = "decision already recorded";
        this.current = null;
        await this.loadNext();
      } else {
        this.els.notice.textContent = `submit failed: ${(err as Error).message}`;
        this.els.submit.disabled = false;
      }
    }
  }

  private async finish(status: "complete" | "expired"): Promise<void> {
    this.finished = true;
    this.current = null;
    this.els.submit.disabled = true;
    this.hud.stop();
    this.els.status.textContent =
      status === "expired" ? "time is up" : "session complete";
    const metrics = await this.api.sessionMetrics(this.sessionId!);
    this.lastMetrics = metrics;
    renderSummary(this.els.summary, metrics);
  }
}
