// Drives the real annotation service (spawned uvicorn process): labels
// 1/2/3 land in /accuracy with the hand-computed proportions, and a
// server that answers 500 triggers the rollback path.

import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { createServer, type Server } from "node:http";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { ReviewStore } from "../src/store.js";

const PORT = 18350 + (process.pid % 400);
const BASE = `http://127.0.0.1:${PORT}`;

let service: ChildProcess;

const ITEMS = [
  { item_id: "laws:power:权力", domain: "laws", source_word: "power", target_word: "权力", example_lines: [1, 2], status: "pending" },
  { item_id: "laws:court:法院", domain: "laws", source_word: "court", target_word: "法院", example_lines: [], status: "pending" },
  { item_id: "science:cell:细胞", domain: "science", source_word: "cell", target_word: "细胞", example_lines: [3], status: "pending" },
];

async function waitForService(): Promise<void> {
  for (let attempt = 0; attempt < 100; attempt++) {
    try {
      const response = await fetch(`${BASE}/queue`);
      if (response.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 100));
  }
  throw new Error("annotation service did not come up");
}

beforeAll(async () => {
  const dir = mkdtempSync(join(tmpdir(), "ambigeval-ui-"));
  const itemsPath = join(dir, "items.jsonl");
  writeFileSync(itemsPath, ITEMS.map((it) => JSON.stringify(it)).join("\n") + "\n");
  service = spawn(
    "python3",
    [
      "-m", "ambigeval.cli", "annotate", "serve",
      "--port", String(PORT),
      "--journal", join(dir, "journal.jsonl"),
      "--items", itemsPath,
    ],
    { stdio: "ignore" }
  );
  await waitForService();
}, 30000);

afterAll(() => {
  service?.kill();
});

describe("against the running annotation service", () => {
  it("labels 1/2/3 produce the hand-computed accuracy", async () => {
    const store = new ReviewStore(new ApiClient(BASE), "annotator-ui");
    await store.loadQueue();
    expect(store.items).toHaveLength(3);
    expect(store.current()?.status).toBe("pending");

    expect(await store.submitLabel("1", "press-1")).toBe("submitted");
    expect(await store.submitLabel("2", "press-2")).toBe("submitted");
    expect(await store.submitLabel("3", "press-3")).toBe("submitted");
    expect(store.current()).toBeNull();

    const accuracy = await store.refreshAccuracy();
    // items 1+2 are laws (correct + partially correct), item 3 is science
    expect(accuracy.laws.counts).toEqual({
      correct: 1,
      partially_correct: 1,
      incorrect: 0,
    });
    expect(accuracy.laws.total).toBe(2);
    expect(accuracy.laws.proportions.correct).toBeCloseTo(0.5, 10);
    expect(accuracy.laws.percent).toEqual({
      correct: 50,
      partially_correct: 50,
      incorrect: 0,
    });
    expect(accuracy.science.counts).toEqual({
      correct: 0,
      partially_correct: 0,
      incorrect: 1,
    });
    expect(accuracy.science.percent.incorrect).toBe(100);
  }, 20000);

  it("a judged queue survives reloads (read-your-writes)", async () => {
    const store = new ReviewStore(new ApiClient(BASE), "annotator-ui");
    await store.loadQueue();
    expect(store.allDone).toBe(true);
  });
});

describe("simulated server failure", () => {
  let broken: Server;
  let brokenPort: number;

  beforeAll(async () => {
    broken = createServer((request, response) => {
      if (request.method === "POST") {
        response.writeHead(500, { "content-type": "application/json" });
        response.end(JSON.stringify({ detail: "injected 500" }));
        return;
      }
      response.writeHead(200, { "content-type": "application/json" });
      response.end(
        JSON.stringify({
          items: ITEMS.map((it) => ({ ...it, examples: it.example_lines, status: "pending" })),
        })
      );
    });
    await new Promise<void>((resolve) => broken.listen(0, "127.0.0.1", resolve));
    const address = broken.address();
    if (address === null || typeof address === "string") throw new Error("no port");
    brokenPort = address.port;
  });

  afterAll(() => {
    broken.close();
  });

  it("rolls back the cursor on a 500 and keeps the item pending", async () => {
    const store = new ReviewStore(
      new ApiClient(`http://127.0.0.1:${brokenPort}`),
      "annotator-ui"
    );
    await store.loadQueue();
    const item = store.current()!;
    const outcome = await store.submitLabel("1", "press-x");
    expect(outcome).toBe("rolled_back");
    expect(store.current()?.item_id).toBe(item.item_id);
    expect(item.status).toBe("pending");
    expect(store.toast).toMatch(/injected 500/);
  });
});
