/** Editor state: component slots with per-attribute pins.
 *
 * Pins map one-to-one onto the service's condition items, and the request
 * serialization is lossless: building a request and parsing it back yields
 * the same pin state.  Position pins always travel together with a size pin
 * (the wire format expresses position through a full box), which matches
 * how pins are created in the editor: by drawing a rectangle.
 */

import { ConditionItem, GenerateRequest, WireLayout } from "./types.js";

export interface Slot {
  /** Pinned class name, when the class pin is on. */
  cls: string | null;
  pinClass: boolean;
  /** Geometry values currently shown for the slot (fractions). */
  cx: number;
  cy: number;
  w: number;
  h: number;
  pinPosition: boolean;
  pinSize: boolean;
}

export interface EditorState {
  slots: Slot[];
  nMax: number;
}

export function emptySlot(): Slot {
  return {
    cls: null,
    pinClass: false,
    cx: 0.5,
    cy: 0.5,
    w: 0.25,
    h: 0.15,
    pinPosition: false,
    pinSize: false,
  };
}

export function newState(nMax: number): EditorState {
  return { slots: [emptySlot()], nMax };
}

export function addSlot(state: EditorState): EditorState {
  if (state.slots.length >= state.nMax) {
    return state;
  }
  return { ...state, slots: [...state.slots, emptySlot()] };
}

export function removeSlot(state: EditorState, index: number): EditorState {
  const slots = state.slots.filter((_, i) => i !== index);
  return { ...state, slots: slots.length ? slots : [emptySlot()] };
}

export function updateSlot(state: EditorState, index: number, patch: Partial<Slot>): EditorState {
  const slots = state.slots.map((slot, i) => (i === index ? { ...slot, ...patch } : slot));
  return { ...state, slots };
}

function round6(v: number): number {
  return Math.round(v * 1e6) / 1e6;
}

/** Build the /generate request body from the pin state. */
export function toRequest(
  state: EditorState,
  opts: { seed?: number; numSamples?: number } = {},
): GenerateRequest {
  const condition: ConditionItem[] = [];
  state.slots.forEach((slot, index) => {
    const item: ConditionItem = { index };
    let pinned = false;
    if (slot.pinClass && slot.cls !== null) {
      item.class = slot.cls;
      pinned = true;
    }
    if (slot.pinPosition) {
      // drawing a rectangle pins the full box
      item.box = [round6(slot.cx), round6(slot.cy), round6(slot.w), round6(slot.h)];
      pinned = true;
    } else if (slot.pinSize) {
      item.box = [0.5, 0.5, round6(slot.w), round6(slot.h)];
      item.size_only = true;
      pinned = true;
    }
    if (pinned) {
      condition.push(item);
    }
  });
  const req: GenerateRequest = {
    n_components: state.slots.length,
    condition,
  };
  if (opts.seed !== undefined) {
    req.seed = opts.seed;
  }
  if (opts.numSamples !== undefined) {
    req.num_samples = opts.numSamples;
  }
  return req;
}

/** Recover the pin state encoded in a request body (lossless inverse). */
export function fromRequest(req: GenerateRequest, nMax: number): EditorState {
  const slots: Slot[] = [];
  for (let i = 0; i < req.n_components; i++) {
    slots.push(emptySlot());
  }
  for (const item of req.condition) {
    const slot = slots[item.index];
    if (!slot) {
      continue;
    }
    if (item.class !== undefined) {
      slot.cls = item.class;
      slot.pinClass = true;
    }
    if (item.box) {
      const [cx, cy, w, h] = item.box;
      slot.w = w;
      slot.h = h;
      if (item.size_only) {
        slot.pinSize = true;
      } else {
        slot.cx = cx;
        slot.cy = cy;
        slot.pinPosition = true;
        slot.pinSize = true;
      }
    }
  }
  return { slots, nMax };
}

/**
 * Show a generated layout in the slots without touching any pinned value:
 * unpinned attributes take the generated values, pinned ones stay put.
 */
export function applyGenerated(state: EditorState, layout: WireLayout): EditorState {
  const slots = state.slots.map((slot, i) => {
    const comp = layout.components[i];
    if (!comp) {
      return slot;
    }
    const next = { ...slot };
    if (!slot.pinClass) {
      next.cls = comp.class;
    }
    const [cx, cy, w, h] = comp.bbox;
    if (!slot.pinPosition) {
      next.cx = cx;
      next.cy = cy;
    }
    if (!slot.pinSize) {
      next.w = w;
      next.h = h;
    }
    return next;
  });
  return { ...state, slots };
}

/** One-click re-pin of a generated component, to seed the next round. */
export function pinAllFromGenerated(state: EditorState, index: number): EditorState {
  return updateSlot(state, index, {
    pinClass: true,
    pinPosition: true,
    pinSize: true,
  });
}
