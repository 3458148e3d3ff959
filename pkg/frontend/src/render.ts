/** Canvas drawing for slots and generated layouts. */

import { colorForClass } from "./colors.js";
import { fracToPixel } from "./geometry.js";
import { Slot } from "./state.js";

export function drawSlots(
  ctx: CanvasRenderingContext2D,
  slots: Slot[],
  classes: string[],
  selected: number,
): void {
  const { width, height } = ctx.canvas;
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#ffffff";
  ctx.fillRect(0, 0, width, height);
  ctx.strokeStyle = "#d0d0d0";
  ctx.strokeRect(0.5, 0.5, width - 1, height - 1);

  slots.forEach((slot, i) => {
    const rect = fracToPixel(slot, width, height);
    const color = slot.cls ? colorForClass(classes, slot.cls) : "#999999";
    ctx.globalAlpha = 0.55;
    ctx.fillStyle = color;
    ctx.fillRect(rect.x, rect.y, rect.w, rect.h);
    ctx.globalAlpha = 1.0;
    ctx.lineWidth = i === selected ? 2.5 : 1.2;
    ctx.strokeStyle = i === selected ? "#222222" : color;
    if (!slot.pinPosition && !slot.pinSize) {
      ctx.setLineDash([5, 3]);
    }
    ctx.strokeRect(rect.x, rect.y, rect.w, rect.h);
    ctx.setLineDash([]);

    ctx.fillStyle = "#111111";
    ctx.font = "11px sans-serif";
    const badges = [
      slot.pinClass ? "C" : "",
      slot.pinPosition ? "P" : "",
      slot.pinSize ? "S" : "",
    ].filter(Boolean).join("");
    const label = `${i}:${slot.cls ?? "?"}${badges ? " [" + badges + "]" : ""}`;
    ctx.fillText(label, rect.x + 3, rect.y + 12);
  });
}

export function drawLegend(container: HTMLElement, classes: string[]): void {
  container.innerHTML = "";
  classes.forEach((name) => {
    const chip = document.createElement("span");
    chip.className = "legend-chip";
    const swatch = document.createElement("span");
    swatch.className = "legend-swatch";
    swatch.style.backgroundColor = colorForClass(classes, name);
    chip.appendChild(swatch);
    chip.appendChild(document.createTextNode(name));
    container.appendChild(chip);
  });
}
