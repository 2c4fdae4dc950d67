import { DsvdError } from "./errors.js";

const WINDOW = 8;
const K1 = 0.01;
const K2 = 0.03;

export type Matrix = readonly (readonly number[])[];

function checkMatrix(m: Matrix, name: string): { rows: number; cols: number } {
  if (!Array.isArray(m) || m.length === 0 || !Array.isArray(m[0])) {
    throw new DsvdError("DimensionMismatch", `${name} must be a non-empty 2-D array`);
  }
  const cols = m[0].length;
  for (const row of m) {
    if (!Array.isArray(row) || row.length !== cols) {
      throw new DsvdError("DimensionMismatch", `${name} rows have inconsistent lengths`);
    }
    for (const v of row) {
      if (typeof v !== "number" || !Number.isFinite(v)) {
        throw new DsvdError("DimensionMismatch", `${name} contains non-finite entries`);
      }
    }
  }
  return { rows: m.length, cols };
}

/** Mean structural similarity over 8x8 windows, stride 1, uniform weights,
 * population (co)variances. Mirrors the core implementation bit-for-bit in
 * double precision; inputs are read only, never mutated. */
export function ssim(x: Matrix, y: Matrix, dynamicRange: number): number {
  const a = checkMatrix(x, "x");
  const b = checkMatrix(y, "y");
  if (a.rows !== b.rows || a.cols !== b.cols) {
    throw new DsvdError(
      "DimensionMismatch",
      `shape ${a.rows}x${a.cols} vs ${b.rows}x${b.cols}`,
    );
  }
  if (!(dynamicRange > 0)) {
    throw new DsvdError("InvalidDynamicRange", "dynamic_range must be positive");
  }
  if (a.rows < WINDOW || a.cols < WINDOW) {
    throw new DsvdError(
      "WindowTooLarge",
      `image ${a.rows}x${a.cols} smaller than the ${WINDOW}x${WINDOW} window`,
    );
  }
  const c1 = (K1 * dynamicRange) ** 2;
  const c2 = (K2 * dynamicRange) ** 2;
  const n = WINDOW * WINDOW;

  let total = 0;
  let windows = 0;
  for (let i = 0; i + WINDOW <= a.rows; i++) {
    for (let j = 0; j + WINDOW <= a.cols; j++) {
      let sumX = 0;
      let sumY = 0;
      let sumXX = 0;
      let sumYY = 0;
      let sumXY = 0;
      for (let r = i; r < i + WINDOW; r++) {
        const rowX = x[r];
        const rowY = y[r];
        for (let c = j; c < j + WINDOW; c++) {
          const vx = rowX[c];
          const vy = rowY[c];
          sumX += vx;
          sumY += vy;
          sumXX += vx * vx;
          sumYY += vy * vy;
          sumXY += vx * vy;
        }
      }
      const muX = sumX / n;
      const muY = sumY / n;
      const varX = sumXX / n - muX * muX;
      const varY = sumYY / n - muY * muY;
      const cov = sumXY / n - muX * muY;
      const num = (2 * muX * muY + c1) * (2 * cov + c2);
      const den = (muX * muX + muY * muY + c1) * (varX + varY + c2);
      total += num / den;
      windows += 1;
    }
  }
  return total / windows;
}
