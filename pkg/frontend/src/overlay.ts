/** Graph-neighborhood probe: shows nodes within h hops of a center,
 * grouped by distance, in the server-provided order. */

import type { ApiClient } from "./api.js";

export class NeighborhoodOverlay {
  constructor(
    private el: HTMLElement,
    private api: Pick<ApiClient, "neighborhood">,
    private onPick: (id: number) => void,
  ) {
    el.classList.add("overlay");
    el.hidden = true;
    el.addEventListener("click", (ev) => {
      const t = ev.target as HTMLElement;
      if (t.dataset.pick) {
        this.onPick(Number(t.dataset.pick));
        this.close();
      } else if (t.dataset.close) {
        this.close();
      } else if (t.dataset.retry) {
        const [center, h] = t.dataset.retry.split(",").map(Number);
        void this.open(center, h);
      }
    });
  }

  async open(center: number, h: number): Promise<void> {
    this.el.hidden = false;
    this.el.innerHTML = "<p>loading neighborhood...</p>";
    try {
      const hood = await this.api.neighborhood(center, h);
      this.el.innerHTML = "";
      const head = document.createElement("div");
      head.className = "overlay-head";
      const centerLabel =
        hood.nodes.find((n) => n.id === hood.center)?.label ?? `node ${hood.center}`;
      const title = document.createElement("strong");
      title.textContent = `within ${hood.h} hop${hood.h === 1 ? "" : "s"} of ${centerLabel}`;
      const close = document.createElement("button");
      close.dataset.close = "1";
      close.textContent = "close";
      head.append(title, close);
      this.el.appendChild(head);
      const ul = document.createElement("ul");
      for (const entry of hood.nodes) {
        const li = document.createElement("li");
        li.dataset.distance = String(entry.distance);
        const pick = document.createElement("button");
        pick.dataset.pick = String(entry.id);
        pick.textContent = `${entry.label} (${entry.distance})`;
        li.appendChild(pick);
        ul.appendChild(li);
      }
      this.el.appendChild(ul);
    } catch (err) {
      this.el.innerHTML = "";
      const p = document.createElement("p");
      p.className = "error";
      p.textContent = `neighborhood fetch failed: ${(err as Error).message}`;
      const retry = document.createElement("button");
      retry.dataset.retry = `${center},${h}`;
      retry.textContent = "retry";
      this.el.append(p, retry);
    }
  }

  close(): void {
    this.el.hidden = true;
    this.el.innerHTML = "";
  }

  isOpen(): boolean {
    return !this.el.hidden;
  }
}
