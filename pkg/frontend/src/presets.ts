/** Scenario presets: the three standard conditioning patterns, applied from
 * a reference layout (an imported file or a previous generation).
 */

import { EditorState, Slot } from "./state.js";
import { WireLayout } from "./types.js";

export type Scenario = "category" | "category-size" | "unconditioned";

export function applyPreset(
  reference: WireLayout,
  scenario: Scenario,
  nMax: number,
): EditorState {
  const slots: Slot[] = reference.components.slice(0, nMax).map((comp) => {
    const [cx, cy, w, h] = comp.bbox;
    return {
      cls: comp.class,
      pinClass: scenario !== "unconditioned",
      cx,
      cy,
      w,
      h,
      pinPosition: false,
      pinSize: scenario === "category-size",
    };
  });
  return { slots, nMax };
}
