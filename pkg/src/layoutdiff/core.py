"""Canonical layout representation shared by every other module.

A layout is an ordered set of typed, positioned, sized rectangular
components on a pixel canvas.  Geometry is stored as center/size canvas
fractions (cx, cy, w, h).  The diffusion chains operate on an affinely
rescaled "signal space" version of the same coordinates; the two maps
`to_signal` / `from_signal` are exact inverses on clean boxes.

The canonical on-disk format is JSON Lines, one layout per line:

    {"canvas": [W, H], "components": [{"class": "text", "bbox": [cx, cy, w, h]}]}

with fractions rounded to 6 decimals.  Every module that reads or writes
layouts (ingestion, training, sampling, metrics, the CLI and the HTTP
service) goes through this format.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

# Reserved name of the absorbing class.  Clean layouts never contain it.
MASK_NAME = ""

# Default signal scale: clean fractions in [0, 1] map to [-SIGNAL_SCALE, +SIGNAL_SCALE].
SIGNAL_SCALE = 2.0

# Smallest representable width/height after clamping raw network output.
MIN_SIZE = 1e-3

# Hard cap on components per layout.
N_MAX = 10


class LayoutError(ValueError):
    """A layout or condition violates a structural invariant."""


@dataclass(frozen=True)
class DatasetSchema:
    """Ordered class vocabulary of a dataset plus its slot budget.

    `classes` holds the K real class names; index K is implicitly the
    absorbing mask class.
    """

    name: str
    classes: tuple[str, ...]
    n_max: int = N_MAX

    def __post_init__(self) -> None:
        if len(self.classes) < 1:
            raise LayoutError("schema needs at least one class")
        if len(set(self.classes)) != len(self.classes):
            raise LayoutError("class names must be unique")
        if MASK_NAME in self.classes:
            raise LayoutError("the empty name is reserved for the mask class")

    @property
    def K(self) -> int:
        return len(self.classes)

    @property
    def mask_index(self) -> int:
        return self.K

    def label(self, name: str) -> "ClassLabel":
        try:
            return ClassLabel(self.classes.index(name), name)
        except ValueError:
            raise LayoutError(f"unknown class {name!r} for schema {self.name!r}") from None

    def label_of(self, index: int) -> "ClassLabel":
        if index == self.K:
            return ClassLabel(index, MASK_NAME)
        if not 0 <= index < self.K:
            raise LayoutError(f"class index {index} out of range for K={self.K}")
        return ClassLabel(index, self.classes[index])

    def to_dict(self) -> dict:
        return {"name": self.name, "classes": list(self.classes), "n_max": self.n_max}

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSchema":
        return cls(name=d["name"], classes=tuple(d["classes"]), n_max=int(d.get("n_max", N_MAX)))


@dataclass(frozen=True)
class ClassLabel:
    """A component class: index in [0, K], where index K is the mask class."""

    index: int
    name: str

    def __post_init__(self) -> None:
        if self.index < 0:
            raise LayoutError(f"negative class index {self.index}")
        if (self.name == MASK_NAME) != self.is_mask_candidate():
            # Consistency between name and index is enforced by the schema;
            # here we only reject the plainly broken combination of a real
            # name at a negative index (checked above).  Full validation
            # happens in Layout.validate against a schema.
            pass

    def is_mask_candidate(self) -> bool:
        return self.name == MASK_NAME


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box as center/size canvas fractions.

    Clean boxes satisfy 0 <= cx,cy <= 1 and 0 < w,h <= 1.  Signal-space
    vectors produced by `to_signal` are unconstrained reals.
    """

    cx: float
    cy: float
    w: float
    h: float

    def is_clean(self) -> bool:
        return (
            0.0 <= self.cx <= 1.0
            and 0.0 <= self.cy <= 1.0
            and 0.0 < self.w <= 1.0
            and 0.0 < self.h <= 1.0
        )

    @property
    def area(self) -> float:
        return self.w * self.h

    def corners(self) -> tuple[float, float, float, float]:
        """(x0, y0, x1, y1) fractions; may extend outside [0,1] for off-canvas centers."""
        return (
            self.cx - self.w / 2,
            self.cy - self.h / 2,
            self.cx + self.w / 2,
            self.cy + self.h / 2,
        )

    def as_array(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.w, self.h], dtype=np.float64)


@dataclass(frozen=True)
class Component:
    cls: ClassLabel
    box: BBox


@dataclass
class Layout:
    """Up to `n_max` components on a positive-size pixel canvas."""

    components: list[Component]
    canvas_w: int
    canvas_h: int

    @property
    def n(self) -> int:
        return len(self.components)

    def validate(self, schema: DatasetSchema | None = None) -> None:
        if self.canvas_w <= 0 or self.canvas_h <= 0:
            raise LayoutError(f"canvas must be positive, got {self.canvas_w}x{self.canvas_h}")
        n_max = schema.n_max if schema is not None else N_MAX
        if self.n > n_max:
            raise LayoutError(f"{self.n} components exceeds the {n_max}-slot cap")
        for i, comp in enumerate(self.components):
            if comp.cls.name == MASK_NAME:
                raise LayoutError(f"component {i} carries the mask class in a clean layout")
            if not comp.box.is_clean():
                raise LayoutError(f"component {i} box {comp.box} violates clean-box ranges")
            if schema is not None:
                want = schema.label(comp.cls.name)
                if want.index != comp.cls.index:
                    raise LayoutError(
                        f"component {i}: class {comp.cls.name!r} has index "
                        f"{comp.cls.index}, schema says {want.index}"
                    )

    def class_indices(self) -> np.ndarray:
        return np.array([c.cls.index for c in self.components], dtype=np.int64)

    def boxes(self) -> np.ndarray:
        """N x 4 array of clean fraction coordinates."""
        if not self.components:
            return np.zeros((0, 4), dtype=np.float64)
        return np.stack([c.box.as_array() for c in self.components])

    def to_dict(self) -> dict:
        return {
            "canvas": [self.canvas_w, self.canvas_h],
            "components": [
                {
                    "class": c.cls.name,
                    "bbox": [round(float(v), 6) for v in c.box.as_array()],
                }
                for c in self.components
            ],
        }

    @classmethod
    def from_dict(cls, d: dict, schema: DatasetSchema) -> "Layout":
        comps = []
        for item in d["components"]:
            cx, cy, w, h = (float(v) for v in item["bbox"])
            comps.append(Component(schema.label(item["class"]), BBox(cx, cy, w, h)))
        W, H = d["canvas"]
        return cls(components=comps, canvas_w=int(W), canvas_h=int(H))


def normalize(
    canvas_w: int,
    canvas_h: int,
    components: Sequence[tuple[ClassLabel, float, float, float, float]],
) -> Layout:
    """Convert absolute-pixel top-left boxes (x, y, w, h) to a canonical layout.

    Ordering is preserved.  A box that extends outside the canvas is rejected
    with the index of the offending component.
    """
    if canvas_w <= 0 or canvas_h <= 0:
        raise LayoutError(f"canvas must be positive, got {canvas_w}x{canvas_h}")
    out = []
    for i, (label, x, y, w, h) in enumerate(components):
        if w <= 0 or h <= 0:
            raise LayoutError(f"component {i}: non-positive size {w}x{h}")
        if x < 0 or y < 0 or x + w > canvas_w or y + h > canvas_h:
            raise LayoutError(
                f"component {i}: box ({x}, {y}, {w}, {h}) lies outside the "
                f"{canvas_w}x{canvas_h} canvas"
            )
        box = BBox(
            cx=(x + w / 2) / canvas_w,
            cy=(y + h / 2) / canvas_h,
            w=w / canvas_w,
            h=h / canvas_h,
        )
        out.append(Component(label, box))
    return Layout(components=out, canvas_w=canvas_w, canvas_h=canvas_h)


def to_signal(box: BBox, scale: float = SIGNAL_SCALE) -> np.ndarray:
    """Map a clean box into the diffusion working range: v = (2u - 1) * scale."""
    return (2.0 * box.as_array() - 1.0) * scale


def from_signal(vec: np.ndarray, scale: float = SIGNAL_SCALE) -> BBox:
    """Invert `to_signal` and clamp into clean ranges.

    Centers clamp to [0, 1]; sizes clamp to [MIN_SIZE, 1] so that raw network
    output can never produce a zero or negative box.
    """
    u = (np.asarray(vec, dtype=np.float64) / scale + 1.0) / 2.0
    cx = float(np.clip(u[0], 0.0, 1.0))
    cy = float(np.clip(u[1], 0.0, 1.0))
    w = float(np.clip(u[2], MIN_SIZE, 1.0))
    h = float(np.clip(u[3], MIN_SIZE, 1.0))
    return BBox(cx, cy, w, h)


def signal_matrix(layout: Layout, scale: float = SIGNAL_SCALE) -> np.ndarray:
    """N x 4 signal-space coordinates of a clean layout."""
    if not layout.components:
        return np.zeros((0, 4), dtype=np.float64)
    return (2.0 * layout.boxes() - 1.0) * scale


@dataclass
class ConditionSpec:
    """Which attributes of which component slots are pinned, and to what.

    Flag arrays have length `n_components`.  A flagged attribute always
    carries a pinned value that satisfies the clean-layout invariants; an
    all-false spec is unconditioned generation.
    """

    n_components: int
    cond_cls: list[bool] = field(default_factory=list)
    cond_pos: list[bool] = field(default_factory=list)
    cond_size: list[bool] = field(default_factory=list)
    pin_cls: list[int | None] = field(default_factory=list)
    pin_pos: list[tuple[float, float] | None] = field(default_factory=list)
    pin_size: list[tuple[float, float] | None] = field(default_factory=list)

    def __post_init__(self) -> None:
        n = self.n_components
        for name in ("cond_cls", "cond_pos", "cond_size"):
            if not getattr(self, name):
                setattr(self, name, [False] * n)
        for name in ("pin_cls", "pin_pos", "pin_size"):
            if not getattr(self, name):
                setattr(self, name, [None] * n)

    @classmethod
    def empty(cls, n_components: int) -> "ConditionSpec":
        return cls(n_components=n_components)

    @classmethod
    def from_layout(
        cls,
        layout: Layout,
        *,
        cls_flags: Sequence[bool] | bool = False,
        pos_flags: Sequence[bool] | bool = False,
        size_flags: Sequence[bool] | bool = False,
    ) -> "ConditionSpec":
        """Pin the flagged attributes at the layout's own values."""

        def expand(flags, n):
            if isinstance(flags, bool):
                return [flags] * n
            return list(flags)

        n = layout.n
        cf, pf, sf = expand(cls_flags, n), expand(pos_flags, n), expand(size_flags, n)
        spec = cls(n_components=n, cond_cls=cf, cond_pos=pf, cond_size=sf)
        for i, comp in enumerate(layout.components):
            if cf[i]:
                spec.pin_cls[i] = comp.cls.index
            if pf[i]:
                spec.pin_pos[i] = (comp.box.cx, comp.box.cy)
            if sf[i]:
                spec.pin_size[i] = (comp.box.w, comp.box.h)
        return spec

    def is_unconditioned(self) -> bool:
        return not (any(self.cond_cls) or any(self.cond_pos) or any(self.cond_size))

    def validate(self, schema: DatasetSchema) -> None:
        if self.n_components < 1 or self.n_components > schema.n_max:
            raise LayoutError(
                f"n_components={self.n_components} outside [1, {schema.n_max}]"
            )
        n = self.n_components
        for name in ("cond_cls", "cond_pos", "cond_size", "pin_cls", "pin_pos", "pin_size"):
            if len(getattr(self, name)) != n:
                raise LayoutError(f"{name} length != n_components")
        for i in range(n):
            if self.cond_cls[i]:
                k = self.pin_cls[i]
                if k is None or not 0 <= k < schema.K:
                    raise LayoutError(f"slot {i}: pinned class {k!r} not a real class")
            if self.cond_pos[i]:
                p = self.pin_pos[i]
                if p is None or not (0.0 <= p[0] <= 1.0 and 0.0 <= p[1] <= 1.0):
                    raise LayoutError(f"slot {i}: pinned position {p!r} outside [0,1]")
            if self.cond_size[i]:
                s = self.pin_size[i]
                if s is None or not (0.0 < s[0] <= 1.0 and 0.0 < s[1] <= 1.0):
                    raise LayoutError(f"slot {i}: pinned size {s!r} outside (0,1]")


def write_jsonl(path: str | Path, layouts: Iterable[Layout]) -> int:
    """Write layouts in the canonical JSON Lines format.  Returns the count."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for layout in layouts:
            fh.write(json.dumps(layout.to_dict()) + "\n")
            n += 1
    return n


def read_jsonl(path: str | Path, schema: DatasetSchema) -> list[Layout]:
    return list(iter_jsonl(path, schema))


def iter_jsonl(path: str | Path, schema: DatasetSchema) -> Iterator[Layout]:
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                yield Layout.from_dict(json.loads(line), schema)
            except (KeyError, ValueError) as exc:
                raise LayoutError(f"{path}:{line_no}: {exc}") from exc
