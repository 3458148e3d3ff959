/** Deterministic class-index -> color mapping for stable visual identity. */

const PALETTE = [
  "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f",
  "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac",
  "#86bcb6", "#d37295", "#fabfd2", "#b6992d", "#499894",
  "#79706e", "#d7b5a6", "#a0cbe8", "#ffbe7d", "#8cd17d",
];

export function classColor(index: number): string {
  return PALETTE[((index % PALETTE.length) + PALETTE.length) % PALETTE.length];
}

export function colorForClass(classes: string[], name: string): string {
  const index = classes.indexOf(name);
  return classColor(index >= 0 ? index : classes.length);
}
