/** Session header: timer, score, counts. Mirrors server values only. */

import type { Progress, SessionMetrics } from "./api.js";

export function formatMs(ms: number): string {
  const clamped = Math.max(0, ms);
  const total = Math.floor(clamped / 1000);
  const m = Math.floor(total / 60);
  const s = total % 60;
  return `${m}:${String(s).padStart(2, "0")}`;
}

export class Hud {
  private timerEl: HTMLElement;
  private scoreEl: HTMLElement;
  private countsEl: HTMLElement;
  private indexEl: HTMLElement;
  private last: Progress | null = null;
  private lastAt = 0;
  private ticker: ReturnType<typeof setInterval> | null = null;
  onExpire: (() => void) | null = null;

  constructor(root: HTMLElement) {
    root.innerHTML = `
      <span class="hud-timer" data-hud="timer">-:--</span>
      <span class="hud-score" data-hud="score">score 0</span>
      <span class="hud-counts" data-hud="counts">0 correct / 0 incorrect</span>
      <span class="hud-index" data-hud="index"></span>`;
    this.timerEl = root.querySelector('[data-hud="timer"]')!;
    this.scoreEl = root.querySelector('[data-hud="score"]')!;
    this.countsEl = root.querySelector('[data-hud="counts"]')!;
    this.indexEl = root.querySelector('[data-hud="index"]')!;
  }

  /** Adopt a server progress payload verbatim; no client-side arithmetic. */
  update(p: Progress): void {
    this.last = p;
    this.lastAt = Date.now();
    this.scoreEl.textContent = `score ${p.score}`;
    this.countsEl.textContent = `${p.correct_count} correct / ${p.incorrect_count} incorrect`;
    this.indexEl.textContent = `prompt ${Math.min(p.answered + 1, p.total)} of ${p.total}`;
    this.renderTimer();
    if (!this.ticker) {
      this.ticker = setInterval(() => this.renderTimer(), 250);
    }
  }

  /** Remaining time interpolated for display; the server stays authoritative. */
  remainingMs(): number {
    if (!this.last) return 0;
    return this.last.remaining_ms - (Date.now() - this.lastAt);
  }

  private renderTimer(): void {
    const left = this.remainingMs();
    this.timerEl.textContent = formatMs(left);
    if (left <= 0 && this.last && this.last.remaining_ms > 0) {
      this.stop();
      this.onExpire?.();
    }
  }

  stop(): void {
    if (this.ticker) {
      clearInterval(this.ticker);
      this.ticker = null;
    }
  }
}

export function renderSummary(el: HTMLElement, m: SessionMetrics): void {
  const rows = [
    ["status", m.status],
    ["answered", `${m.answered} of ${m.total}`],
    ["total score", String(m.total_score)],
    ["accuracy", `${m.accuracy_pct}%`],
    ["compliance", `${m.compliance_pct}%`],
    ["mean time per prompt", `${m.mean_time_per_prompt} s`],
  ];
  const strata = Object.entries(m.by_support ?? {});
  for (const [name, s] of strata) {
    rows.push([
      name.replace("_", " "),
      `n=${s.count} score=${s.total_score} accuracy=${s.accuracy_pct}% compliance=${s.compliance_pct}%`,
    ]);
  }
  el.innerHTML =
    `<h2>Session ${m.session_id} (${m.condition})</h2><dl>` +
    rows.map(([k, v]) => `<dt>${k}</dt><dd data-summary="${k}">${v}</dd>`).join("") +
    `</dl>`;
}
