"""Dataset ingestion: adapters, filtering, splits, stats, synthetic profiles.

Adapters convert external annotation dumps into the canonical JSON Lines
format.  Expected source formats:

* ``publaynet`` — COCO-style JSON: top-level ``images`` (id, width, height),
  ``annotations`` (image_id, bbox as [x, y, w, h] top-left pixels,
  category_id) and ``categories`` (id, name).  One file per split
  (``train.json``, ``val.json``) or a single file split by ratio.
* ``rico`` — a directory of per-app JSON view hierarchies.  Each file holds
  ``activity.root`` with pixel ``bounds`` [left, top, right, bottom] and
  nested ``children``; nodes carrying a ``componentLabel`` become
  components.  Layouts containing a class outside the top-13 most frequent
  are dropped.
* ``magazine`` — a directory of per-page XML files:
  ``<annotation><size><width/><height/></size><layout><element label=".."
  polygon_x="x1 x2 x3 x4" polygon_y="..."/></layout></annotation>``;
  polygons are reduced to their bounding rectangle.  An explicit split
  manifest (JSON mapping file stem to train/val/test) is honored when
  supplied.
* ``canonical`` — already-canonical JSON Lines, revalidated and refiltered.

Filters applied everywhere: layouts with more than ``n_max`` components are
dropped; zero-area components are removed (and a layout left empty is
dropped).  Splits are deterministic by hash of a stable layout identifier.
"""
from __future__ import annotations

import hashlib
import json
import logging
import xml.etree.ElementTree as ET
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (
    BBox,
    Component,
    DatasetSchema,
    Layout,
    iter_jsonl,
    normalize,
    write_jsonl,
)

log = logging.getLogger(__name__)

PUBLAYNET_SCHEMA = DatasetSchema(
    name="publaynet", classes=("text", "title", "list", "table", "figure")
)
MAGAZINE_SCHEMA = DatasetSchema(
    name="magazine",
    classes=("text", "image", "headline", "text-over-image", "headline-over-image", "background"),
)

DEFAULT_RATIOS = (0.85, 0.05, 0.10)
RICO_TOP_CLASSES = 13


class IngestError(ValueError):
    """Unusable source annotations."""


@dataclass
class IngestReport:
    """Filter accounting: input count = kept + sum of per-rule drops."""

    total: int = 0
    kept: int = 0
    dropped: Counter = field(default_factory=Counter)
    split_counts: Counter = field(default_factory=Counter)

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "kept": self.kept,
            "dropped": dict(self.dropped),
            "splits": dict(self.split_counts),
        }


@dataclass
class DatasetStats:
    class_hist: dict[str, int]
    count_hist: dict[int, int]
    size_hist: dict[str, int]
    n_layouts: int

    def to_dict(self) -> dict:
        return {
            "n_layouts": self.n_layouts,
            "class_hist": self.class_hist,
            "count_hist": {str(k): v for k, v in self.count_hist.items()},
            "size_hist": self.size_hist,
        }


def split_of(identifier: str, ratios: tuple[float, float, float] = DEFAULT_RATIOS) -> str:
    """Deterministic train/val/test assignment by hash of a stable id."""
    digest = hashlib.sha256(identifier.encode("utf-8")).digest()
    u = int.from_bytes(digest[:8], "big") / 2**64
    if u < ratios[0]:
        return "train"
    if u < ratios[0] + ratios[1]:
        return "val"
    return "test"


def _clean_components(
    layout: Layout, report: IngestReport, schema: DatasetSchema
) -> Layout | None:
    """Apply the shared filters; returns None when the layout is dropped."""
    comps = []
    for comp in layout.components:
        if comp.box.w <= 0 or comp.box.h <= 0:
            report.dropped["zero-area-component"] += 1
            continue
        comps.append(comp)
    if not comps:
        report.dropped["empty-layout"] += 1
        return None
    if len(comps) > schema.n_max:
        report.dropped["too-many-components"] += 1
        return None
    out = Layout(components=comps, canvas_w=layout.canvas_w, canvas_h=layout.canvas_h)
    out.validate(schema)
    return out


def ingest(
    source: str | Path,
    adapter: str,
    out_dir: str | Path,
    schema: DatasetSchema | None = None,
    ratios: tuple[float, float, float] = DEFAULT_RATIOS,
    split_manifest: str | Path | None = None,
) -> tuple[DatasetSchema, IngestReport]:
    """Convert a source dump into train/val/test canonical files plus stats."""
    source = Path(source)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if adapter == "publaynet":
        schema = schema or PUBLAYNET_SCHEMA
        items = _read_publaynet(source, schema)
    elif adapter == "rico":
        schema, items = _read_rico(source, schema)
    elif adapter == "magazine":
        schema = schema or MAGAZINE_SCHEMA
        items = _read_magazine(source, schema)
    elif adapter == "canonical":
        if schema is None:
            raise IngestError("the canonical adapter needs an explicit schema")
        items = [
            (f"{source.name}:{i}", None, layout, None)
            for i, layout in enumerate(iter_jsonl(source, schema))
        ]
    else:
        raise IngestError(f"unknown adapter {adapter!r}")

    manifest = None
    if split_manifest is not None:
        manifest = json.loads(Path(split_manifest).read_text())

    report = IngestReport()
    buckets: dict[str, list[Layout]] = {"train": [], "val": [], "test": []}
    for identifier, fixed_split, layout, drop_reason in items:
        report.total += 1
        if drop_reason is not None:
            report.dropped[drop_reason] += 1
            continue
        cleaned = _clean_components(layout, report, schema)
        if cleaned is None:
            continue
        if manifest is not None and identifier in manifest:
            split = manifest[identifier]
        elif fixed_split is not None:
            split = fixed_split
        else:
            split = split_of(identifier, ratios)
        if split not in buckets:
            raise IngestError(f"bad split {split!r} for {identifier!r}")
        buckets[split].append(cleaned)
        report.kept += 1
        report.split_counts[split] += 1

    for split, layouts in buckets.items():
        write_jsonl(out_dir / f"{split}.jsonl", layouts)
    (out_dir / "schema.json").write_text(json.dumps(schema.to_dict(), indent=2))
    train_stats = stats(buckets["train"])
    (out_dir / "stats.json").write_text(json.dumps(train_stats.to_dict(), indent=2))
    (out_dir / "ingest_report.json").write_text(json.dumps(report.to_dict(), indent=2))
    log.info("ingest %s: %s", adapter, report.to_dict())
    return schema, report


def _read_publaynet(source: Path, schema: DatasetSchema):
    """COCO-style annotations; a directory means one file per official split."""
    if source.is_dir():
        parts = []
        for split_file, split in (("train.json", "train"), ("val.json", "val"), ("test.json", "test")):
            p = source / split_file
            if p.exists():
                parts.extend(_read_coco_file(p, schema, split))
        if not parts:
            raise IngestError(f"{source}: no train.json/val.json/test.json found")
        return parts
    return _read_coco_file(source, schema, None)


def _read_coco_file(path: Path, schema: DatasetSchema, split: str | None):
    try:
        doc = json.loads(path.read_text())
        cat_names = {c["id"]: c["name"] for c in doc["categories"]}
        images = {im["id"]: im for im in doc["images"]}
    except (KeyError, json.JSONDecodeError) as exc:
        raise IngestError(f"{path}: not COCO-style annotations ({exc})") from exc

    by_image: dict[int, list] = {im_id: [] for im_id in images}
    for ann in doc.get("annotations", []):
        by_image.setdefault(ann["image_id"], []).append(ann)

    items = []
    for im_id, anns in by_image.items():
        im = images.get(im_id)
        if im is None:
            continue
        W, H = int(im["width"]), int(im["height"])
        comps = []
        for ann in anns:
            name = cat_names.get(ann["category_id"])
            if name is None or name not in schema.classes:
                raise IngestError(f"{path}: category {ann['category_id']} not in schema")
            x, y, w, h = ann["bbox"]
            # clip sloppy annotations at the canvas border instead of dropping
            x, y = max(x, 0.0), max(y, 0.0)
            w, h = min(w, W - x), min(h, H - y)
            if w <= 0 or h <= 0:
                comps.append((schema.label(name), 0.0, 0.0, 0.0, 0.0))
                continue
            comps.append((schema.label(name), x, y, w, h))
        layout = _normalize_lenient(W, H, comps)
        items.append((str(im.get("file_name", im_id)), split, layout, None))
    return items


def _normalize_lenient(W, H, comps):
    """normalize() but representing zero-size boxes so the shared filter logs them."""
    good = [(lbl, x, y, w, h) for lbl, x, y, w, h in comps if w > 0 and h > 0]
    layout = normalize(W, H, good)
    for lbl, x, y, w, h in comps:
        if w <= 0 or h <= 0:
            layout.components.append(Component(lbl, BBox(0.5, 0.5, 0.0, 0.0)))
    return layout


def _rico_nodes(node: dict, out: list) -> None:
    label = node.get("componentLabel")
    if label is not None and "bounds" in node:
        out.append((label, node["bounds"]))
    for child in node.get("children") or []:
        if child:
            _rico_nodes(child, out)


def _read_rico(source: Path, schema: DatasetSchema | None):
    files = sorted(source.glob("*.json"))
    if not files:
        raise IngestError(f"{source}: no RICO view hierarchy .json files")

    parsed = []
    freq: Counter = Counter()
    for path in files:
        try:
            doc = json.loads(path.read_text())
            root = doc["activity"]["root"]
        except (KeyError, json.JSONDecodeError) as exc:
            raise IngestError(f"{path}: not a RICO view hierarchy ({exc})") from exc
        nodes: list = []
        _rico_nodes(root, nodes)
        bounds = root.get("bounds", [0, 0, 1440, 2560])
        W, H = bounds[2] - bounds[0], bounds[3] - bounds[1]
        parsed.append((path.stem, W, H, nodes))
        freq.update(label for label, _ in nodes)

    if schema is None:
        top = [name for name, _ in freq.most_common(RICO_TOP_CLASSES)]
        log.info("rico top-%d classes: %s", RICO_TOP_CLASSES, top)
        schema = DatasetSchema(name="rico", classes=tuple(sorted(top)))

    items = []
    for stem, W, H, nodes in parsed:
        if any(label not in schema.classes for label, _ in nodes):
            items.append((stem, None, None, "off-vocabulary-class"))
            continue
        comps = []
        for label, (l, t, r, b) in nodes:
            l, t = max(l, 0), max(t, 0)
            r, b = min(r, W), min(b, H)
            if r <= l or b <= t:
                comps.append((schema.label(label), 0.0, 0.0, 0.0, 0.0))
                continue
            comps.append((schema.label(label), l, t, r - l, b - t))
        items.append((stem, None, _normalize_lenient(W, H, comps), None))
    return schema, items


def _read_magazine(source: Path, schema: DatasetSchema):
    files = sorted(source.glob("*.xml"))
    if not files:
        raise IngestError(f"{source}: no magazine .xml annotation files")
    items = []
    for path in files:
        try:
            root = ET.parse(path).getroot()
            size = root.find("size")
            W = int(float(size.findtext("width")))
            H = int(float(size.findtext("height")))
        except (ET.ParseError, AttributeError, TypeError, ValueError) as exc:
            raise IngestError(f"{path}: bad magazine annotation ({exc})") from exc
        comps = []
        for el in root.iter("element"):
            label = el.get("label")
            if label not in schema.classes:
                raise IngestError(f"{path}: label {label!r} not in magazine schema")
            xs = [float(v) for v in el.get("polygon_x", "").split()]
            ys = [float(v) for v in el.get("polygon_y", "").split()]
            if not xs or not ys:
                continue
            x0, x1 = max(min(xs), 0.0), min(max(xs), W)
            y0, y1 = max(min(ys), 0.0), min(max(ys), H)
            if x1 <= x0 or y1 <= y0:
                comps.append((schema.label(label), 0.0, 0.0, 0.0, 0.0))
                continue
            comps.append((schema.label(label), x0, y0, x1 - x0, y1 - y0))
        items.append((path.stem, None, _normalize_lenient(W, H, comps), None))
    return items


def stats(layouts: list[Layout]) -> DatasetStats:
    """Exact class/size/component-count histograms of a canonical dataset."""
    class_hist: Counter = Counter()
    count_hist: Counter = Counter()
    size_hist: Counter = Counter()
    for layout in layouts:
        count_hist[layout.n] += 1
        for comp in layout.components:
            class_hist[comp.cls.name] += 1
            # coarse area decile bucket, for sanity plots
            bucket = min(int(comp.box.area * 10), 9)
            size_hist[f"area_{bucket * 10}_{bucket * 10 + 10}pct"] += 1
    return DatasetStats(
        class_hist=dict(class_hist),
        count_hist=dict(count_hist),
        size_hist=dict(size_hist),
        n_layouts=len(layouts),
    )


# --- synthetic profiles -----------------------------------------------------

GRID_SCHEMA = DatasetSchema(name="synthgrid", classes=("cell", "header"))
MOBILE_SCHEMA = DatasetSchema(name="synthmobile", classes=("toolbar", "row", "banner"))


def synth(profile: str, n: int, seed: int = 0) -> tuple[DatasetSchema, list[Layout]]:
    """Procedural layouts with known alignment/overlap structure."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    if profile == "two-column-doc":
        schema = PUBLAYNET_SCHEMA
        layouts = [_synth_two_column(rng, schema) for _ in range(n)]
    elif profile == "grid":
        schema = GRID_SCHEMA
        layouts = [_synth_grid(rng, schema) for _ in range(n)]
    elif profile == "mobile-list":
        schema = MOBILE_SCHEMA
        layouts = [_synth_mobile(rng, schema) for _ in range(n)]
    else:
        raise ValueError(f"unknown synth profile {profile!r}")
    for layout in layouts:
        layout.validate(schema)
    return schema, layouts


def _quantize(v: float) -> float:
    # canonical files round to 6 decimals; quantizing up front keeps
    # constructed alignments exact through a write/read cycle
    return round(v, 6)


def _synth_two_column(rng: np.random.Generator, schema: DatasetSchema) -> Layout:
    """Title bar over two non-overlapping columns of row-aligned blocks.

    Geometry lives on a fixed grid (two column x-positions, four equal row
    slots) and the arrangement is a deterministic function of the class
    multiset: blocks sort by class and deal round-robin across the columns.
    Blocks never overlap, every component is edge-aligned with another, and
    duplicate classes always land in different columns, which keeps every
    slot assignment resolvable for a permutation-equivariant model.
    Variation comes from the class multiset (up to two blocks per class).
    """
    W, H = 850, 1100
    margin = 0.08
    gap = 0.04
    col_w = (1.0 - 2 * margin - gap) / 2
    col_x = [margin, margin + col_w + gap]
    title_h = 0.06
    row_h = 0.16
    row_gap = 0.02
    rows_top = 0.14  # below the title band

    comps: list[Component] = [
        Component(
            schema.label("title"),
            BBox(
                _quantize(margin + col_w / 2),
                _quantize(0.05 + title_h / 2),
                _quantize(col_w),
                _quantize(title_h),
            ),
        )
    ]
    block_kinds = ("text", "figure", "list", "table")
    while True:
        counts = rng.integers(0, 3, size=len(block_kinds))
        if 2 <= counts.sum() <= 8:
            break
    blocks = [kind for kind, c in zip(block_kinds, counts) for _ in range(int(c))]
    for j, kind in enumerate(blocks):
        col, row = j % 2, j // 2
        y = rows_top + row * (row_h + row_gap)
        comps.append(
            Component(
                schema.label(kind),
                BBox(
                    _quantize(col_x[col] + col_w / 2),
                    _quantize(y + row_h / 2),
                    _quantize(col_w),
                    _quantize(row_h),
                ),
            )
        )
    return Layout(components=comps, canvas_w=W, canvas_h=H)


def _synth_grid(rng: np.random.Generator, schema: DatasetSchema) -> Layout:
    """r x c grid of identical cells with shared edges; alignment is exactly 0."""
    while True:
        r, c = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        if r * c >= 2:
            break
    W, H = 1000, 1000
    margin = 0.05
    gap = 0.02
    cw = (1 - 2 * margin - (c - 1) * gap) / c
    ch = (1 - 2 * margin - (r - 1) * gap) / r
    comps = []
    for i in range(r):
        for j in range(c):
            name = "header" if i == 0 and rng.random() < 0.3 else "cell"
            comps.append(
                Component(
                    schema.label(name),
                    BBox(
                        _quantize(margin + j * (cw + gap) + cw / 2),
                        _quantize(margin + i * (ch + gap) + ch / 2),
                        _quantize(cw),
                        _quantize(ch),
                    ),
                )
            )
    return Layout(components=comps, canvas_w=W, canvas_h=H)


def _synth_mobile(rng: np.random.Generator, schema: DatasetSchema) -> Layout:
    """Full-width toolbar plus stacked rows sharing both side edges."""
    W, H = 1440, 2560
    comps = [
        Component(schema.label("toolbar"), BBox(0.5, _quantize(0.04), _quantize(0.96), 0.06))
    ]
    y = 0.1
    n_rows = int(rng.integers(3, 9))
    for i in range(n_rows):
        h = float(rng.uniform(0.06, 0.12))
        if y + h > 0.97:
            break
        name = "banner" if i == 0 and rng.random() < 0.2 else "row"
        comps.append(
            Component(
                schema.label(name),
                BBox(0.5, _quantize(y + h / 2), _quantize(0.96), _quantize(h)),
            )
        )
        y = y + h + 0.015
    return Layout(components=comps, canvas_w=W, canvas_h=H)
