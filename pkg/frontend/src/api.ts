// Typed client for the annotation service. All server interaction in the
// app goes through this module; the base URL is the single setting.

export type Label = "correct" | "partially_correct" | "incorrect";

export interface QueueItem {
  item_id: string;
  domain: string;
  source_word: string;
  target_word: string;
  examples: number[];
  status: "pending" | "judged";
}

export interface AccuracyDomain {
  counts: Record<Label, number>;
  total: number;
  proportions: Record<Label, number>;
  percent: Record<Label, number>;
}

export type AccuracyByDomain = Record<string, AccuracyDomain>;

export interface RefinementAction {
  domain: string;
  source_word: string;
  target_word: string;
  action: "keep" | "remove";
}

export interface RefinementResult {
  applied: number;
  domains: string[];
  warnings: string[];
}

export interface VocabEntry {
  source: string;
  in_domain: string[];
  distractors: { word: string; origin: string }[];
}

export interface Vocab {
  domain: string;
  entries: VocabEntry[];
}

/** Server answered with a non-OK status (as opposed to a network failure). */
export class ApiError extends Error {
  constructor(public readonly status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private readonly base: string;

  constructor(baseUrl: string, private readonly fetchFn: FetchLike = fetch) {
    this.base = baseUrl.replace(/\/+$/, "");
  }

  private async request(path: string, init?: RequestInit): Promise<unknown> {
    const response = await this.fetchFn(this.base + path, init);
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const body = (await response.json()) as { detail?: string };
        if (body.detail) detail = body.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return response.json();
  }

  async fetchQueue(filters?: { domain?: string; status?: string }): Promise<QueueItem[]> {
    const params = new URLSearchParams();
    if (filters?.domain) params.set("domain", filters.domain);
    if (filters?.status) params.set("status", filters.status);
    const query = params.toString();
    const payload = (await this.request(`/queue${query ? "?" + query : ""}`)) as {
      items: QueueItem[];
    };
    return payload.items;
  }

  async submitJudgment(itemId: string, label: Label, annotator: string): Promise<void> {
    await this.request("/judgments", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ item_id: itemId, label, annotator }),
    });
  }

  async fetchAccuracy(): Promise<AccuracyByDomain> {
    const payload = (await this.request("/accuracy")) as { domains: AccuracyByDomain };
    return payload.domains;
  }

  async applyRefinements(actions: RefinementAction[]): Promise<RefinementResult> {
    return (await this.request("/refinements/apply", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ actions }),
    })) as RefinementResult;
  }

  async fetchVocab(domain: string): Promise<Vocab> {
    return (await this.request(`/vocab/${encodeURIComponent(domain)}`)) as Vocab;
  }
}
