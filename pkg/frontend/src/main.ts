/** Editor wiring: slots panel, canvas interactions, generation round trips. */

import { Client, ServiceError } from "./api.js";
import { clampFrac, dragToRect, hitTest, pixelToFrac } from "./geometry.js";
import { applyPreset, Scenario } from "./presets.js";
import {
  addSlot,
  applyGenerated,
  EditorState,
  newState,
  pinAllFromGenerated,
  removeSlot,
  toRequest,
  updateSlot,
} from "./state.js";
import { drawLegend, drawSlots } from "./render.js";
import { WireLayout } from "./types.js";

const client = new Client("");

let state: EditorState = newState(10);
let classes: string[] = [];
let selected = 0;
let history: { layout: WireLayout; seed: number }[] = [];
let reference: WireLayout | null = null;
let lastSeed: number | null = null;
let inFlight = false;

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

const canvas = $("editor-canvas") as unknown as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;

function setBanner(message: string | null, retry = false): void {
  const banner = $("banner");
  banner.textContent = message ?? "";
  banner.style.display = message ? "block" : "none";
  $("retry-btn").style.display = message && retry ? "inline-block" : "none";
}

function setFieldError(message: string | null): void {
  const el = $("field-error");
  el.textContent = message ?? "";
  el.style.display = message ? "block" : "none";
}

function redraw(): void {
  drawSlots(ctx, state.slots, classes, selected);
  renderSlotPanel();
  $("seed-label").textContent = lastSeed === null ? "-" : String(lastSeed);
  const presetsEnabled = reference !== null;
  ["preset-category", "preset-category-size", "preset-unconditioned"].forEach((id) => {
    ($(id) as HTMLButtonElement).disabled = !presetsEnabled;
  });
  ($("generate-btn") as HTMLButtonElement).disabled = inFlight;
}

function renderSlotPanel(): void {
  const panel = $("slots-panel");
  panel.innerHTML = "";
  state.slots.forEach((slot, i) => {
    const row = document.createElement("div");
    row.className = "slot-row" + (i === selected ? " selected" : "");
    row.addEventListener("click", () => {
      selected = i;
      redraw();
    });

    const title = document.createElement("span");
    title.textContent = `#${i}`;
    row.appendChild(title);

    const select = document.createElement("select");
    const blank = document.createElement("option");
    blank.value = "";
    blank.textContent = "(class)";
    select.appendChild(blank);
    classes.forEach((name) => {
      const opt = document.createElement("option");
      opt.value = name;
      opt.textContent = name;
      if (slot.cls === name) opt.selected = true;
      select.appendChild(opt);
    });
    select.addEventListener("change", () => {
      state = updateSlot(state, i, {
        cls: select.value || null,
        pinClass: Boolean(select.value),
      });
      redraw();
    });
    row.appendChild(select);

    const pins: Array<[string, "pinClass" | "pinPosition" | "pinSize"]> = [
      ["class", "pinClass"],
      ["pos", "pinPosition"],
      ["size", "pinSize"],
    ];
    pins.forEach(([label, key]) => {
      const toggle = document.createElement("label");
      const box = document.createElement("input");
      box.type = "checkbox";
      box.checked = slot[key];
      box.addEventListener("change", () => {
        state = updateSlot(state, i, { [key]: box.checked } as Partial<typeof slot>);
        redraw();
      });
      toggle.appendChild(box);
      toggle.appendChild(document.createTextNode(label));
      row.appendChild(toggle);
    });

    const pinAll = document.createElement("button");
    pinAll.textContent = "pin all";
    pinAll.addEventListener("click", (ev) => {
      ev.stopPropagation();
      state = pinAllFromGenerated(state, i);
      redraw();
    });
    row.appendChild(pinAll);

    const remove = document.createElement("button");
    remove.textContent = "x";
    remove.addEventListener("click", (ev) => {
      ev.stopPropagation();
      state = removeSlot(state, i);
      selected = Math.min(selected, state.slots.length - 1);
      redraw();
    });
    row.appendChild(remove);

    panel.appendChild(row);
  });
}

function renderHistory(): void {
  const strip = $("history-strip");
  strip.innerHTML = "";
  history.forEach((entry, idx) => {
    const card = document.createElement("button");
    card.className = "history-card";
    card.textContent = `gen ${idx} (seed ${entry.seed})`;
    card.addEventListener("click", () => {
      reference = entry.layout;
      lastSeed = entry.seed;
      state = applyGenerated(state, entry.layout);
      setBanner(null);
      redraw();
    });
    strip.appendChild(card);
  });
}

async function generate(seed?: number): Promise<void> {
  if (inFlight) return;
  inFlight = true;
  setFieldError(null);
  setBanner(null);
  redraw();
  try {
    const req = toRequest(state, seed === undefined ? {} : { seed });
    const res = await client.generate(req);
    lastSeed = res.seed;
    const layout = res.layouts[0];
    history.unshift({ layout, seed: res.seed });
    history = history.slice(0, 12);
    reference = layout;
    state = applyGenerated(state, layout);
    renderHistory();
  } catch (err) {
    if (err instanceof ServiceError && err.status === 400) {
      setFieldError(`${err.field ?? "request"}: ${err.message}`);
    } else if (err instanceof ServiceError && err.status === 0) {
      setBanner("service unreachable - is `layoutdiff serve` running?", true);
    } else {
      setBanner(String(err), true);
    }
  } finally {
    inFlight = false;
    redraw();
  }
}

function bindCanvas(): void {
  let dragStart: { x: number; y: number } | null = null;
  canvas.addEventListener("mousedown", (ev) => {
    const rect = canvas.getBoundingClientRect();
    dragStart = { x: ev.clientX - rect.left, y: ev.clientY - rect.top };
  });
  canvas.addEventListener("mouseup", (ev) => {
    if (!dragStart) return;
    const rect = canvas.getBoundingClientRect();
    const x1 = ev.clientX - rect.left;
    const y1 = ev.clientY - rect.top;
    const moved = Math.hypot(x1 - dragStart.x, y1 - dragStart.y) > 4;
    if (moved) {
      const px = dragToRect(dragStart.x, dragStart.y, x1, y1);
      const frac = clampFrac(pixelToFrac(px, canvas.width, canvas.height));
      state = updateSlot(state, selected, {
        ...frac,
        pinPosition: true,
        pinSize: true,
      });
    } else {
      const fx = x1 / canvas.width;
      const fy = y1 / canvas.height;
      const hit = hitTest(state.slots, fx, fy);
      if (hit >= 0) selected = hit;
    }
    dragStart = null;
    redraw();
  });
}

function bindControls(): void {
  $("add-slot-btn").addEventListener("click", () => {
    state = addSlot(state);
    selected = state.slots.length - 1;
    redraw();
  });
  $("generate-btn").addEventListener("click", () => void generate());
  $("reuse-seed-btn").addEventListener("click", () => {
    if (lastSeed !== null) void generate(lastSeed);
  });
  $("retry-btn").addEventListener("click", () => void init());

  (["category", "category-size", "unconditioned"] as Scenario[]).forEach((scenario) => {
    $(`preset-${scenario}`).addEventListener("click", () => {
      if (!reference) return;
      state = applyPreset(reference, scenario, state.nMax);
      selected = 0;
      redraw();
    });
  });

  $("export-btn").addEventListener("click", () => {
    const lines = history.map((e) => JSON.stringify(e.layout)).join("\n");
    const blob = new Blob([lines + "\n"], { type: "application/jsonl" });
    const a = document.createElement("a");
    a.href = URL.createObjectURL(blob);
    a.download = "layouts.jsonl";
    a.click();
  });

  ($("import-input") as HTMLInputElement).addEventListener("change", async (ev) => {
    const input = ev.target as HTMLInputElement;
    const file = input.files?.[0];
    if (!file) return;
    const text = await file.text();
    const first = text.split("\n").find((line) => line.trim());
    if (first) {
      reference = JSON.parse(first) as WireLayout;
      setBanner(null);
      redraw();
    }
  });
}

async function init(): Promise<void> {
  try {
    const health = await client.health();
    const schema = await client.schema();
    classes = schema.classes;
    state = { ...state, nMax: schema.n_max };
    drawLegend($("legend"), classes);
    setBanner(null);
    $("model-label").textContent = `${health.schema.name} (T=${health.T})`;
  } catch {
    setBanner("service unreachable - is `layoutdiff serve` running?", true);
  }
  redraw();
}

bindCanvas();
bindControls();
renderHistory();
void init();
