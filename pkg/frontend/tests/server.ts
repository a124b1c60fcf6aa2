/** Global setup: build a small taxonomy, split it, and run the real review
 * service so tests exercise the UI against live HTTP. */

import { execFile, spawn, type ChildProcess } from "node:child_process";
import { mkdir, mkdtemp, rm, writeFile } from "node:fs/promises";
import net from "node:net";
import { tmpdir } from "node:os";
import path from "node:path";
import { promisify } from "node:util";
import type { GlobalSetupContext } from "vitest/node";

const run = promisify(execFile);

function taxonomyLines(branching = 4, depth = 3): string[] {
  const lines: string[] = [];
  let frontier = ["n0"];
  for (let level = 0; level < depth; level++) {
    const next: string[] = [];
    for (const parent of frontier) {
      for (let i = 0; i < branching; i++) {
        const child = `${parent}.${i}`;
        lines.push(`${child}\t${parent}`);
        next.push(child);
      }
    }
    frontier = next;
  }
  return lines;
}

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const srv = net.createServer();
    srv.listen(0, "127.0.0.1", () => {
      const addr = srv.address();
      if (addr && typeof addr === "object") {
        const port = addr.port;
        srv.close(() => resolve(port));
      } else {
        srv.close(() => reject(new Error("no port assigned")));
      }
    });
    srv.on("error", reject);
  });
}

export default async function setup({ provide }: GlobalSetupContext) {
  const dir = await mkdtemp(path.join(tmpdir(), "curator-ui-"));
  const edges = path.join(dir, "edges.tsv");
  await writeFile(edges, taxonomyLines().join("\n") + "\n");
  const splitFile = path.join(dir, "split.txt");
  await run("kgx", [
    "split", "--edges", edges, "--seed", "0", "--split-file", splitFile,
  ]);
  const logDir = path.join(dir, "logs");
  await mkdir(logDir);
  const port = await freePort();
  const base = `http://127.0.0.1:${port}`;

  const child: ChildProcess = spawn(
    "kgx",
    [
      "serve", "--edges", edges, "--split-file", splitFile,
      "--dim", "8", "--synth-noise", "0.0",
      "--log-dir", logDir, "--port", String(port),
    ],
    { cwd: dir, stdio: ["ignore", "pipe", "pipe"] },
  );
  let output = "";
  child.stdout?.on("data", (d) => (output += d));
  child.stderr?.on("data", (d) => (output += d));

  const deadline = Date.now() + 90_000;
  for (;;) {
    if (child.exitCode !== null) {
      throw new Error(`service exited before becoming ready:\n${output}`);
    }
    try {
      const resp = await fetch(`${base}/graph/tree?depth=0`);
      if (resp.ok) break;
    } catch {
      /* not listening yet */
    }
    if (Date.now() > deadline) {
      child.kill("SIGKILL");
      throw new Error(`service never became ready:\n${output}`);
    }
    await new Promise((res) => setTimeout(res, 250));
  }

  provide("baseUrl", base);

  return async () => {
    child.kill("SIGTERM");
    await new Promise((res) => setTimeout(res, 400));
    if (child.exitCode === null) child.kill("SIGKILL");
    await rm(dir, { recursive: true, force: true });
  };
}

declare module "vitest" {
  export interface ProvidedContext {
    baseUrl: string;
  }
}
