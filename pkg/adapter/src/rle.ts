/**
 * Row-major run-length encoding matching the detection wire format: runs
 * alternate background/foreground starting with background, and a leading 0
 * lets a mask open with foreground. Counts must sum to height * width.
 */

export function encodeGrid(grid: Uint8Array, height: number, width: number): number[] {
  const total = height * width;
  if (grid.length !== total) {
    throw new Error(`grid has ${grid.length} cells, expected ${total}`);
  }
  const counts: number[] = [];
  if (grid[0]) {
    counts.push(0);
  }
  let run = 1;
  for (let i = 1; i < total; i++) {
    if ((grid[i] !== 0) === (grid[i - 1] !== 0)) {
      run += 1;
    } else {
      counts.push(run);
      run = 1;
    }
  }
  counts.push(run);
  return counts;
}

/** Counts for an axis-aligned rectangle mask at (x0, y0), size rw x rh. */
export function encodeRect(
  height: number,
  width: number,
  x0: number,
  y0: number,
  rw: number,
  rh: number,
): number[] {
  const grid = new Uint8Array(height * width);
  for (let y = y0; y < y0 + rh; y++) {
    grid.fill(1, y * width + x0, y * width + x0 + rw);
  }
  return encodeGrid(grid, height, width);
}

export function countsSum(counts: number[]): number {
  return counts.reduce((a, b) => a + b, 0);
}

/** Wire-format invariant check; throws rather than emitting a broken mask. */
export function validateCounts(counts: number[], height: number, width: number): void {
  if (counts.some((c) => !Number.isInteger(c) || c < 0)) {
    throw new Error("run counts must be non-negative integers");
  }
  if (counts.slice(1).some((c) => c === 0)) {
    throw new Error("zero run count after the leading run");
  }
  if (countsSum(counts) !== height * width) {
    throw new Error(`run counts sum to ${countsSum(counts)}, expected ${height * width}`);
  }
}
