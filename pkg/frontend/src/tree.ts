/** Lazy taxonomy tree: per-level fetch, expand/collapse, selection,
 * preselect reveal, and client-side label filtering. */

import type { ApiClient, TreeNode } from "./api.js";

interface Entry {
  id: number;
  label: string;
  hasChildren: boolean;
  children: number[] | null; // null until fetched
  parent: number | null;
}

export class TreeView {
  private nodes = new Map<number, Entry>();
  private rootId: number | null = null;
  private expanded = new Set<number>();
  private filterText = "";
  selected: number | null = null;
  preselect: number | null = null;

  constructor(
    private el: HTMLElement,
    private api: Pick<ApiClient, "tree">,
    private onSelect?: (id: number) => void,
    private onSubmit?: () => void,
  ) {
    el.classList.add("tree");
    el.tabIndex = 0;
    el.addEventListener("click", (ev) => this.handleClick(ev));
    el.addEventListener("keydown", (ev) => this.handleKey(ev));
  }

  async init(): Promise<void> {
    const root = await this.api.tree(undefined, 1);
    this.rootId = root.id;
    this.absorb(root, null);
    this.expanded.add(root.id);
    this.render();
  }

  private absorb(node: TreeNode, parent: number | null): void {
    const prior = this.nodes.get(node.id);
    this.nodes.set(node.id, {
      id: node.id,
      label: node.label,
      hasChildren: node.has_children,
      children: node.children
        ? node.children.map((c) => c.id)
        : (prior?.children ?? null),
      parent: parent ?? prior?.parent ?? null,
    });
    for (const child of node.children ?? []) {
      this.absorb(child, node.id);
    }
  }

  node(id: number): Entry | undefined {
    return this.nodes.get(id);
  }

  has(id: number): boolean {
    return this.nodes.has(id);
  }

  isExpanded(id: number): boolean {
    return this.expanded.has(id);
  }

  private async ensureChildren(id: number): Promise<void> {
    const entry = this.nodes.get(id);
    if (!entry || !entry.hasChildren || entry.children !== null) return;
    const fetched = await this.api.tree(id, 1);
    this.absorb(fetched, entry.parent);
  }

  async expand(id: number): Promise<void> {
    await this.ensureChildren(id);
    this.expanded.add(id);
    this.render();
  }

  collapse(id: number): void {
    this.expanded.delete(id);
    this.render();
  }

  select(id: number): void {
    if (!this.nodes.has(id)) return;
    this.selected = id;
    this.render();
    this.onSelect?.(id);
  }

  /** Expand every ancestor on the given root-to-node path, highlight and
   * select the final node. Used on prompt load for the preselected parent. */
  async revealPath(path: number[]): Promise<void> {
    for (const id of path.slice(0, -1)) {
      await this.ensureChildren(id);
      this.expanded.add(id);
    }
    const target = path[path.length - 1];
    this.preselect = target;
    this.selected = target;
    this.render();
    const row = this.el.querySelector(`[data-node-id="${target}"]`);
    (row as HTMLElement | null)?.scrollIntoView?.({ block: "center" });
  }

  clearPreselect(): void {
    this.preselect = null;
  }

  /** Collapse everything below the root; each prompt starts from a clean
   * view so trials stay independent. */
  resetExpansion(): void {
    this.expanded.clear();
    if (this.rootId !== null) this.expanded.add(this.rootId);
    this.render();
  }

  setFilter(text: string): void {
    this.filterText = text.trim().toLowerCase();
    this.render();
  }

  /** A row stays visible while it or any loaded descendant matches. */
  private matches(id: number): boolean {
    if (!this.filterText) return true;
    const entry = this.nodes.get(id);
    if (!entry) return false;
    if (entry.label.toLowerCase().includes(this.filterText)) return true;
    return (entry.children ?? []).some((c) => this.matches(c));
  }

  visibleIds(): number[] {
    const out: number[] = [];
    const walk = (id: number) => {
      if (!this.matches(id)) return;
      out.push(id);
      if (this.expanded.has(id)) {
        for (const c of this.nodes.get(id)?.children ?? []) walk(c);
      }
    };
    if (this.rootId !== null) walk(this.rootId);
    return out;
  }

  render(): void {
    if (this.rootId === null) return;
    this.el.innerHTML = "";
    if (this.matches(this.rootId)) {
      this.el.appendChild(this.renderList([this.rootId]));
    }
  }

  private renderList(ids: number[]): HTMLUListElement {
    const ul = document.createElement("ul");
    for (const id of ids) {
      if (!this.matches(id)) continue;
      const entry = this.nodes.get(id)!;
      const li = document.createElement("li");
      li.dataset.nodeId = String(id);
      const twist = document.createElement("button");
      twist.className = "twist";
      twist.dataset.twist = String(id);
      twist.textContent = entry.hasChildren
        ? this.expanded.has(id)
          ? "-"
          : "+"
        : "·";
      twist.disabled = !entry.hasChildren;
      const label = document.createElement("span");
      label.className = "label";
      label.dataset.select = String(id);
      label.textContent = entry.label;
      if (id === this.selected) li.classList.add("sel");
      if (id === this.preselect) li.classList.add("pre");
      li.append(twist, label);
      if (this.expanded.has(id) && entry.children?.length) {
        li.appendChild(this.renderList(entry.children));
      }
      ul.appendChild(li);
    }
    return ul;
  }

  private handleClick(ev: Event): void {
    const t = ev.target as HTMLElement;
    if (t.dataset.twist) {
      const id = Number(t.dataset.twist);
      if (this.expanded.has(id)) this.collapse(id);
      else void this.expand(id);
    } else if (t.dataset.select) {
      this.select(Number(t.dataset.select));
    }
  }

  private handleKey(ev: KeyboardEvent): void {
    const order = this.visibleIds();
    if (!order.length) return;
    const pos = this.selected === null ? -1 : order.indexOf(this.selected);
    if (ev.key === "ArrowDown") {
      this.select(order[Math.min(pos + 1, order.length - 1)]);
      ev.preventDefault();
    } else if (ev.key === "ArrowUp") {
      this.select(order[Math.max(pos - 1, 0)]);
      ev.preventDefault();
    } else if (ev.key === "ArrowRight" && this.selected !== null) {
      void this.expand(this.selected);
      ev.preventDefault();
    } else if (ev.key === "ArrowLeft" && this.selected !== null) {
      this.collapse(this.selected);
      ev.preventDefault();
    } else if (ev.key === "Enter") {
      this.onSubmit?.();
      ev.preventDefault();
    }
  }
}
