import { spawnSync } from "node:child_process";

import { DsvdError } from "./errors.js";

/** Command used to reach the CLI. Override with DSVD_CLI, e.g.
 * `DSVD_CLI="python3 -m dsvd"`; whitespace splits command and leading args. */
export function cliCommand(): string[] {
  const override = process.env.DSVD_CLI;
  if (override && override.trim()) {
    return override.trim().split(/\s+/);
  }
  return ["dsvd"];
}

export interface CliResult {
  status: number;
  stdout: string;
  stderr: string;
}

export function runCli(args: string[]): CliResult {
  const [command, ...prefix] = cliCommand();
  const proc = spawnSync(command, [...prefix, ...args], {
    encoding: "utf8",
    maxBuffer: 1 << 28,
  });
  if (proc.error) {
    throw new DsvdError("IoFailure", `cannot launch ${command}: ${proc.error.message}`);
  }
  return { status: proc.status ?? -1, stdout: proc.stdout, stderr: proc.stderr };
}

/** Run a subcommand, returning its parsed stdout JSON; pipeline errors are
 * re-thrown with the structured code the CLI reports. */
export function invoke(args: string[]): unknown {
  const result = runCli(args);
  if (result.status === 0) {
    return result.stdout.trim() ? JSON.parse(result.stdout) : null;
  }
  let code = result.status === 2 ? "UsageError" : "InternalError";
  let message = result.stderr.trim() || `CLI exited with status ${result.status}`;
  try {
    const doc = JSON.parse(result.stdout) as { error?: { code: string; message: string } };
    if (doc && doc.error) {
      code = doc.error.code;
      message = doc.error.message;
    }
  } catch {
    // stdout was not a JSON error document; keep the fallback
  }
  throw new DsvdError(code, message);
}
