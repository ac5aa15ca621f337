// Browser glue: renders the store into the page and turns keypresses into
// submissions. All state lives in ReviewStore; this file only paints it.

import { ApiClient, RefinementAction } from "./api.js";
import { KEY_LABELS, ReviewStore } from "./store.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function baseUrl(): string {
  const fromQuery = new URLSearchParams(location.search).get("api");
  return fromQuery ?? (window as any).AMBIGEVAL_BASE_URL ?? "http://127.0.0.1:8000";
}

function annotator(): string {
  const fromQuery = new URLSearchParams(location.search).get("annotator");
  return fromQuery ?? localStorage.getItem("annotator") ?? "anon";
}

const api = new ApiClient(baseUrl());
const store = new ReviewStore(api, annotator());

function render(): void {
  el("banner").textContent = store.banner ?? "";
  el("banner").style.display = store.banner ? "block" : "none";
  el("toast").textContent = store.toast ?? "";
  el("toast").style.display = store.toast ? "block" : "none";

  const item = store.current();
  if (item === null) {
    el("word-pair").textContent = store.allDone ? "All done!" : "No items queued.";
    el("examples").textContent = "";
  } else {
    el("word-pair").textContent = `${item.source_word}  →  ${item.target_word}   [${item.domain}]`;
    el("examples").textContent = item.examples.length
      ? `training lines: ${item.examples.slice(0, 3).join(", ")}`
      : "no example sentences recorded";
  }

  const progress = store.progress();
  el("progress").textContent = Object.entries(progress)
    .map(([domain, p]) => `${domain}: ${p.judged}/${p.total}`)
    .join("   ");

  el("accuracy").textContent = Object.entries(store.accuracy)
    .map(
      ([domain, acc]) =>
        `${domain}: C ${acc.percent.correct}% / Pc ${acc.percent.partially_correct}% / I ${acc.percent.incorrect}%`
    )
    .join("   ");
}

async function handleKey(event: KeyboardEvent): Promise<void> {
  if (event.repeat) return; // one submission per physical keypress
  if (!(event.key in KEY_LABELS)) return;
  const token = crypto.randomUUID();
  const outcome = await store.submitLabel(event.key, token);
  if (outcome === "submitted") {
    await store.flushOffline();
    await store.refreshAccuracy().catch(() => undefined);
  }
  render();
}

async function applyRefinementBatch(): Promise<void> {
  const raw = (el("refinements") as HTMLTextAreaElement).value.trim();
  if (!raw) return;
  const actions: RefinementAction[] = raw.split("\n").map((line) => {
    const [domain, source_word, target_word, action] = line.split("\t");
    return { domain, source_word, target_word, action: action as "keep" | "remove" };
  });
  const result = await api.applyRefinements(actions);
  el("refinement-result").textContent =
    `applied ${result.applied} action(s)` +
    (result.warnings.length ? `; warnings: ${result.warnings.join("; ")}` : "");
}

export async function start(): Promise<void> {
  document.addEventListener("keydown", (event) => void handleKey(event));
  el("apply-refinements").addEventListener("click", () => void applyRefinementBatch());
  el("reload").addEventListener("click", async () => {
    await store.loadQueue();
    render();
  });
  await store.loadQueue();
  await store.refreshAccuracy().catch(() => undefined);
  render();
}

void start();
