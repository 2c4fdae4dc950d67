/** Error raised by every binding call; `code` matches the core taxonomy
 * (ShapeMismatch, FingerprintMismatch, InvalidTau, ...). */
export class DsvdError extends Error {
  readonly code: string;

  constructor(code: string, message: string) {
    super(message);
    this.name = "DsvdError";
    this.code = code;
  }
}
