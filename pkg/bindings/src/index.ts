import { invoke } from "./cli.js";
import { DsvdError } from "./errors.js";

export { DsvdError } from "./errors.js";
export { cliCommand, runCli } from "./cli.js";
export { ssim, type Matrix } from "./ssim.js";
export {
  ArchiveHandle,
  openArchive,
  type ArchiveManifest,
  type ManifestLayerEntry,
} from "./archive.js";

export interface PerLayerEntry {
  layer: string;
  kind: string;
  rank: number;
  dense_params: number;
  stored_params: number;
  original_shape: number[];
  dtype: string;
}

export interface CompressionReport {
  tau: number;
  dense_param_count: number;
  stored_param_count: number;
  ratio: number | "infinite";
  estimated_file_bytes: number;
  mismatch_warnings: number;
  per_layer: PerLayerEntry[];
}

export interface InspectReport {
  manifest: {
    format_version: number;
    tau: number;
    base_fingerprint: string;
    tool_version: string;
    layer_count: number;
    kinds: Record<string, number>;
  };
  rank_table: Record<string, number>;
  compression_report: CompressionReport;
}

export interface CompressOptions {
  base: string;
  finetuned: string;
  tau: number;
  out: string;
  policy?: "strict" | "skip";
  energyMode?: "linear" | "squared";
  threads?: number;
}

/** Compress the delta between two checkpoint files into `out`.
 * Semantics, outputs and error codes match the `compress` subcommand;
 * the returned stats equal the CLI's stdout JSON parsed. */
export function compress(options: CompressOptions): CompressionReport {
  if (!(typeof options.tau === "number" && options.tau > 0 && options.tau <= 1)) {
    throw new DsvdError("InvalidTau", `tau must be in (0, 1], got ${options.tau}`);
  }
  const args = [
    "compress",
    "--base", options.base,
    "--finetuned", options.finetuned,
    "--tau", String(options.tau),
    "--out", options.out,
  ];
  if (options.policy !== undefined) {
    args.push("--policy", options.policy);
  }
  if (options.energyMode !== undefined) {
    args.push("--energy-mode", options.energyMode);
  }
  if (options.threads !== undefined) {
    args.push("--threads", String(options.threads));
  }
  return invoke(args) as CompressionReport;
}

export interface ReconstructOptions {
  base: string;
  delta: string;
  out: string;
  force?: boolean;
}

/** Rebuild the fine-tuned checkpoint from base + archive; mirrors the
 * `reconstruct` subcommand including fingerprint verification. */
export function reconstruct(options: ReconstructOptions): void {
  const args = [
    "reconstruct",
    "--base", options.base,
    "--delta", options.delta,
    "--out", options.out,
  ];
  if (options.force) {
    args.push("--force");
  }
  invoke(args);
}

/** Summarize an archive: manifest, per-group average ranks, accounting. */
export function inspect(deltaPath: string, groupsConfigPath?: string): InspectReport {
  const args = ["inspect", "--delta", deltaPath];
  if (groupsConfigPath !== undefined) {
    args.push("--groups", groupsConfigPath);
  }
  return invoke(args) as InspectReport;
}
