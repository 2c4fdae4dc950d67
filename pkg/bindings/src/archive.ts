import { readFileSync } from "node:fs";

import { DsvdError } from "./errors.js";

export interface ManifestLayerEntry {
  kind: "factors" | "dense" | "standalone" | "unchanged";
  rank?: number;
  original_shape: number[];
  original_dtype: string;
}

export interface ArchiveManifest {
  format_version: number;
  tau: number;
  base_fingerprint: string;
  tool_version: string;
  layer_index: Record<string, ManifestLayerEntry>;
}

const SUPPORTED_FORMAT_VERSION = 1;

/** Open handle on a loaded archive manifest. Invalidated by close();
 * use-after-close raises a DsvdError, never crashes the host. */
export class ArchiveHandle {
  #manifest: ArchiveManifest | null;
  readonly path: string;

  constructor(path: string, manifest: ArchiveManifest) {
    this.path = path;
    this.#manifest = manifest;
  }

  #require(): ArchiveManifest {
    if (this.#manifest === null) {
      throw new DsvdError("HandleClosed", `archive handle for ${this.path} is closed`);
    }
    return this.#manifest;
  }

  get manifest(): ArchiveManifest {
    return this.#require();
  }

  get tau(): number {
    return this.#require().tau;
  }

  get baseFingerprint(): string {
    return this.#require().base_fingerprint;
  }

  layerNames(): string[] {
    return Object.keys(this.#require().layer_index).sort();
  }

  get closed(): boolean {
    return this.#manifest === null;
  }

  close(): void {
    this.#manifest = null;
  }
}

/** Parse the archive manifest straight from the container bytes: u64-LE
 * header length, JSON header, metadata key "dsvd_manifest". */
export function openArchive(path: string): ArchiveHandle {
  let raw: Buffer;
  try {
    raw = readFileSync(path);
  } catch (err) {
    throw new DsvdError("IoFailure", `cannot read ${path}: ${(err as Error).message}`);
  }
  if (raw.length < 8) {
    throw new DsvdError("MalformedHeader", `file holds ${raw.length} bytes, need at least 8`);
  }
  const headerLen = raw.readBigUInt64LE(0);
  if (8n + headerLen > BigInt(raw.length)) {
    throw new DsvdError(
      "MalformedHeader",
      `header length ${headerLen} exceeds file size ${raw.length}`,
    );
  }
  let header: Record<string, unknown>;
  try {
    header = JSON.parse(raw.subarray(8, 8 + Number(headerLen)).toString("utf8"));
  } catch (err) {
    throw new DsvdError("MalformedHeader", `header is not valid JSON: ${(err as Error).message}`);
  }
  const metadata = header.__metadata__ as Record<string, string> | undefined;
  const rawManifest = metadata?.dsvd_manifest;
  if (typeof rawManifest !== "string") {
    throw new DsvdError("MissingManifest", "metadata key 'dsvd_manifest' is absent");
  }
  let manifest: ArchiveManifest;
  try {
    manifest = JSON.parse(rawManifest) as ArchiveManifest;
  } catch (err) {
    throw new DsvdError("MissingManifest", `manifest is not valid JSON: ${(err as Error).message}`);
  }
  if (manifest.format_version !== SUPPORTED_FORMAT_VERSION) {
    throw new DsvdError(
      "UnsupportedFormatVersion",
      `archive format_version ${manifest.format_version}, this build reads ${SUPPORTED_FORMAT_VERSION}`,
    );
  }
  return new ArchiveHandle(path, manifest);
}
