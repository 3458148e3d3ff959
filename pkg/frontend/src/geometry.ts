/** The single fraction<->pixel utility; everything rendering or hit-testing
 * goes through these, using the same center/size convention as the service.
 */

export interface PixelRect {
  x: number;
  y: number;
  w: number;
  h: number;
}

export interface FracBox {
  cx: number;
  cy: number;
  w: number;
  h: number;
}

export function fracToPixel(box: FracBox, canvasW: number, canvasH: number): PixelRect {
  return {
    x: (box.cx - box.w / 2) * canvasW,
    y: (box.cy - box.h / 2) * canvasH,
    w: box.w * canvasW,
    h: box.h * canvasH,
  };
}

export function pixelToFrac(rect: PixelRect, canvasW: number, canvasH: number): FracBox {
  return {
    cx: (rect.x + rect.w / 2) / canvasW,
    cy: (rect.y + rect.h / 2) / canvasH,
    w: rect.w / canvasW,
    h: rect.h / canvasH,
  };
}

/** Normalize a drag gesture (any corner order) into a positive rect. */
export function dragToRect(x0: number, y0: number, x1: number, y1: number): PixelRect {
  return {
    x: Math.min(x0, x1),
    y: Math.min(y0, y1),
    w: Math.abs(x1 - x0),
    h: Math.abs(y1 - y0),
  };
}

/** Clamp a fractional box into the clean range the service accepts. */
export function clampFrac(box: FracBox, minSize = 0.01): FracBox {
  const w = Math.min(Math.max(box.w, minSize), 1);
  const h = Math.min(Math.max(box.h, minSize), 1);
  return {
    cx: Math.min(Math.max(box.cx, 0), 1),
    cy: Math.min(Math.max(box.cy, 0), 1),
    w,
    h,
  };
}

export function hitTest(boxes: FracBox[], fx: number, fy: number): number {
  // topmost (last drawn) wins
  for (let i = boxes.length - 1; i >= 0; i--) {
    const b = boxes[i];
    if (
      fx >= b.cx - b.w / 2 &&
      fx <= b.cx + b.w / 2 &&
      fy >= b.cy - b.h / 2 &&
      fy <= b.cy + b.h / 2
    ) {
      return i;
    }
  }
  return -1;
}
