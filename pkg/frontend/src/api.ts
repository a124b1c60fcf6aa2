/** Typed client for the expansion-service HTTP/JSON API. */

export interface NodeRef {
  id: number;
  label: string;
}

export interface TreeNode extends NodeRef {
  has_children: boolean;
  children?: TreeNode[];
}

export interface NeighborEntry extends NodeRef {
  distance: number;
}

export interface Neighborhood {
  center: number;
  h: number;
  nodes: NeighborEntry[];
}

export interface SessionCreated {
  session_id: string;
  condition: string;
  num_prompts: number;
  budget_ms: number;
  created_ts: number;
}

export interface Progress {
  remaining_ms: number;
  score: number;
  correct_count: number;
  incorrect_count: number;
  answered: number;
  total: number;
}

export interface PromptView {
  prompt_id: string;
  condition: string;
  index: number;
  total: number;
  query: NodeRef;
  preselected: NodeRef;
  preselected_path: number[];
}

export type NextResponse =
  | ({ status: "prompt"; prompt: PromptView } & Progress)
  | ({ status: "complete" | "expired" } & Progress);

export type DecisionResponse = {
  prompt_id: string;
  correct: boolean;
  complied: boolean;
} & Progress;

export interface StratumMetrics {
  count: number;
  total_score: number;
  accuracy_pct: number;
  compliance_pct: number;
  mean_time_s: number;
}

export interface SessionMetrics {
  status: "open" | "complete" | "expired";
  session_id: string;
  condition: string;
  answered: number;
  total: number;
  total_score: number;
  mean_time_per_prompt: number;
  accuracy_pct: number;
  compliance_pct: number;
  frac_correct?: number;
  correct_assignment?: string;
  by_support?: Record<string, StratumMetrics>;
}

export interface PredictResult extends NodeRef {
  score: number;
  neighborhood: string;
}

export interface SessionOptions {
  seed?: number;
  frac_correct?: number;
  limit?: number;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

async function parse<T>(resp: Response): Promise<T> {
  if (resp.ok) {
    return (await resp.json()) as T;
  }
  let message = `${resp.status}`;
  try {
    const body = await resp.json();
    message = body?.detail?.message ?? JSON.stringify(body.detail ?? body);
  } catch {
    /* non-JSON error body; keep the status text */
  }
  throw new ApiError(resp.status, message);
}

export class ApiClient {
  constructor(private baseUrl: string = "") {}

  private get(path: string): Promise<Response> {
    return fetch(this.baseUrl + path);
  }

  private post(path: string, body: unknown): Promise<Response> {
    return fetch(this.baseUrl + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  async tree(root?: number, depth = 1): Promise<TreeNode> {
    const q = new URLSearchParams({ depth: String(depth) });
    if (root !== undefined) q.set("root", String(root));
    return parse(await this.get(`/graph/tree?${q}`));
  }

  async neighborhood(nodeId: number, h = 1): Promise<Neighborhood> {
    return parse(await this.get(`/node/${nodeId}/neighborhood?h=${h}`));
  }

  async createSession(
    condition: string,
    opts: SessionOptions = {},
  ): Promise<SessionCreated> {
    return parse(await this.post("/sessions", { condition, ...opts }));
  }

  async nextPrompt(sessionId: string): Promise<NextResponse> {
    return parse(await this.get(`/sessions/${sessionId}/next`));
  }

  async submitDecision(
    sessionId: string,
    promptId: string,
    chosenId: number,
  ): Promise<DecisionResponse> {
    return parse(
      await this.post(`/sessions/${sessionId}/decisions`, {
        prompt_id: promptId,
        chosen_id: chosenId,
      }),
    );
  }

  async sessionMetrics(sessionId: string): Promise<SessionMetrics> {
    return parse(await this.get(`/sessions/${sessionId}/metrics`));
  }

  async predict(text: string, k = 5): Promise<{ query: string; results: PredictResult[] }> {
    return parse(await this.post("/predict", { text, k }));
  }

  async attach(label: string, parentId: number): Promise<{ label: string; parent: NodeRef }> {
    return parse(await this.post("/attach", { label, parent_id: parentId }));
  }

  async reindex(): Promise<{ num_nodes: number; num_candidates: number; pending_cleared: number }> {
    return parse(await this.post("/reindex", {}));
  }
}
