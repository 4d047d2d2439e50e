/**
 * Waveform display from server-provided min/max peak pairs.
 *
 * The server downsamples the rendered audio to ~512 pairs so the client
 * never ships full PCM just to draw a picture.
 */

export interface PeakColumn {
  x: number;
  yTop: number;
  yBottom: number;
}

/** Map peak pairs onto canvas columns; pure so it can be tested headless. */
export function layoutPeaks(
  peaks: [number, number][],
  width: number,
  height: number,
  minThickness = 1,
): PeakColumn[] {
  if (peaks.length === 0 || width <= 0 || height <= 0) return [];
  const mid = height / 2;
  const columns: PeakColumn[] = [];
  for (let x = 0; x < width; x++) {
    const idx = Math.min(
      peaks.length - 1,
      Math.floor((x / width) * peaks.length),
    );
    const [lo, hi] = peaks[idx];
    const yTop = mid - Math.max(-1, Math.min(1, hi)) * mid;
    const yBottom = mid - Math.max(-1, Math.min(1, lo)) * mid;
    columns.push({
      x,
      yTop: Math.min(yTop, yBottom),
      yBottom: Math.max(yTop, yBottom, yTop + minThickness),
    });
  }
  return columns;
}

export function drawWaveform(
  canvas: HTMLCanvasElement,
  peaks: [number, number][],
  color = '#4fd1c5',
  background = '#101418',
): void {
  const ctx = canvas.getContext('2d');
  if (!ctx) return;
  ctx.fillStyle = background;
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  ctx.fillStyle = color;
  for (const col of layoutPeaks(peaks, canvas.width, canvas.height)) {
    ctx.fillRect(col.x, col.yTop, 1, col.yBottom - col.yTop);
  }
}
