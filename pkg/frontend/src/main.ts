/** Entry point: wires the tree, HUD, neighborhood probe, and session flow
 * to the review-service HTTP API. */

import { ApiClient } from "./api.js";
import { Hud } from "./hud.js";
import { NeighborhoodOverlay } from "./overlay.js";
import { SessionController } from "./session.js";
import { TreeView } from "./tree.js";

export interface App {
  api: ApiClient;
  hud: Hud;
  tree: TreeView;
  overlay: NeighborhoodOverlay;
  session: SessionController;
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

/** Attach all widgets to the static shell. The shell ids are fixed. */
export function wire(api: ApiClient): App {
  const hud = new Hud(el("hud"));
  const tree = new TreeView(el("tree"), api);
  const overlay = new NeighborhoodOverlay(el("overlay"), api, (id) => {
    if (tree.has(id)) {
      tree.select(id);
    } else if (tree.selected !== null) {
      // Neighbors one hop from a shown node become loadable by expanding it.
      void tree.expand(tree.selected).then(() => tree.select(id));
    }
  });
  const session = new SessionController(api, tree, hud, {
    submit: el<HTMLButtonElement>("submit"),
    banner: el("banner"),
    status: el("status"),
    notice: el("notice"),
    summary: el("summary"),
  });

  el<HTMLInputElement>("search").addEventListener("input", (ev) => {
    tree.setFilter((ev.target as HTMLInputElement).value);
  });

  el<HTMLButtonElement>("probe").addEventListener("click", () => {
    if (tree.selected !== null) {
      const h = Number(el<HTMLInputElement>("probe-h").value) || 1;
      void overlay.open(tree.selected, h);
    }
  });

  el<HTMLButtonElement>("start").addEventListener("click", () => {
    const condition = el<HTMLSelectElement>("condition").value;
    const seed = Number(el<HTMLInputElement>("seed").value) || 0;
    const rawLimit = el<HTMLInputElement>("limit").value;
    const limit = rawLimit ? Number(rawLimit) : undefined;
    void session.start(condition, { seed, limit });
  });

  return { api, hud, tree, overlay, session };
}

export async function boot(): Promise<App> {
  const params = new URLSearchParams(window.location.search);
  const api = new ApiClient(params.get("base") ?? "");
  const app = wire(api);
  await app.tree.init();
  return app;
}

if (typeof document !== "undefined" && document.getElementById("tree")) {
  void boot();
}
