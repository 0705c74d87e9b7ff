// Canvas rendering for region overlays. The context is structurally typed so
// tests can drive it with a recording stub.

import type { OverlayBox } from './view.js';

export interface DrawContext {
  strokeStyle: string | CanvasGradient | CanvasPattern;
  fillStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  font: string;
  globalAlpha: number;
  clearRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  fillText(text: string, x: number, y: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  stroke(): void;
}

export interface OverlayOptions {
  width: number;
  height: number;
  scale: number;
}

export function drawOverlays(
  ctx: DrawContext,
  overlays: OverlayBox[],
  options: OverlayOptions,
): void {
  ctx.clearRect(0, 0, options.width, options.height);
  const s = options.scale;
  // Tail first so the interesting boxes paint on top.
  const ordered = [...overlays].sort((a, b) => b.rank - a.rank);
  for (const box of ordered) {
    const [x, y, w, h] = box.bbox;
    ctx.globalAlpha = box.rejected ? 0.45 : 1.0;
    ctx.lineWidth = box.presented || box.isBStar ? 3 : 1.5;
    ctx.strokeStyle = box.isBStar ? '#00e676' : box.color;
    ctx.strokeRect(x * s, y * s, w * s, h * s);

    if (box.rejected) {
      // struck through corner to corner
      ctx.beginPath();
      ctx.moveTo(x * s, y * s);
      ctx.lineTo((x + w) * s, (y + h) * s);
      ctx.stroke();
    }

    const label = box.isBStar ? `#${box.regionId} target` : `#${box.regionId} r${box.rank}`;
    ctx.fillStyle = 'rgba(0,0,0,0.65)';
    ctx.fillRect(x * s, Math.max(0, y * s - 14), 8 * label.length, 14);
    ctx.fillStyle = box.isBStar ? '#00e676' : '#fff';
    ctx.font = '12px sans-serif';
    ctx.fillText(label, x * s + 2, Math.max(10, y * s - 3));
  }
  ctx.globalAlpha = 1.0;
}

// Geometry for a per-region score sparkline; values are raw service scores,
// scaled only for pixel placement.
export function sparklinePoints(
  series: number[],
  width: number,
  height: number,
): Array<[number, number]> {
  if (series.length === 0) return [];
  const lo = Math.min(...series);
  const hi = Math.max(...series);
  const span = hi - lo || 1;
  return series.map((value, index) => [
    series.length === 1 ? 0 : (index / (series.length - 1)) * width,
    height - ((value - lo) / span) * height,
  ]);
}
