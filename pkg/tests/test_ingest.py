import json

import numpy as np
import pytest

from layoutdiff.core import read_jsonl, write_jsonl
from layoutdiff.ingest import (
    DEFAULT_RATIOS,
    IngestError,
    MAGAZINE_SCHEMA,
    PUBLAYNET_SCHEMA,
    ingest,
    split_of,
    stats,
    synth,
)
from layoutdiff.metrics import alignment, overlap


# --- synth profiles -----------------------------------------------------------


def test_two_column_doc_has_zero_overlap():
    schema, layouts = synth("two-column-doc", 40, seed=1)
    assert schema is PUBLAYNET_SCHEMA
    for layout in layouts:
        assert overlap(layout) == 0.0
        assert layout.n <= schema.n_max


def test_two_column_doc_is_aligned():
    _, layouts = synth("two-column-doc", 40, seed=2)
    for layout in layouts:
        assert alignment(layout) == 0.0


def test_grid_profile_alignment_zero():
    schema, layouts = synth("grid", 40, seed=3)
    for layout in layouts:
        assert alignment(layout) == 0.0
        assert overlap(layout) == 0.0


def test_mobile_list_profile():
    schema, layouts = synth("mobile-list", 40, seed=4)
    for layout in layouts:
        assert overlap(layout) == 0.0
        assert alignment(layout) == 0.0


def test_synth_deterministic():
    _, a = synth("two-column-doc", 10, seed=9)
    _, b = synth("two-column-doc", 10, seed=9)
    assert [l.to_dict() for l in a] == [l.to_dict() for l in b]
    _, c = synth("two-column-doc", 10, seed=10)
    assert [l.to_dict() for l in a] != [l.to_dict() for l in c]


def test_synth_survives_jsonl_round_trip(tmp_path):
    # quantization must not break the constructed alignment/overlap guarantees
    schema, layouts = synth("grid", 20, seed=5)
    path = tmp_path / "grid.jsonl"
    write_jsonl(path, layouts)
    for layout in read_jsonl(path, schema):
        assert alignment(layout) == 0.0
        assert overlap(layout) == 0.0


def test_synth_validates_args():
    with pytest.raises(ValueError):
        synth("two-column-doc", 0)
    with pytest.raises(ValueError):
        synth("three-column", 5)


# --- stats ---------------------------------------------------------------------


def test_stats_exact_counts(doc_schema):
    from tests.conftest import make_layout

    layouts = [
        make_layout(doc_schema, [("text", 0.5, 0.5, 0.1, 0.1)] * 3),
        make_layout(doc_schema, [("title", 0.5, 0.1, 0.4, 0.1)]),
    ]
    st = stats(layouts)
    assert st.class_hist == {"text": 3, "title": 1}
    assert st.count_hist == {3: 1, 1: 1}
    assert sum(st.class_hist.values()) == 4
    assert sum(st.count_hist.values()) == st.n_layouts == 2


def test_stats_recovers_known_mixture():
    _, layouts = synth("two-column-doc", 100, seed=6)
    st = stats(layouts)
    assert st.class_hist["title"] == 100  # exactly one title per layout
    assert sum(st.count_hist.values()) == 100


# --- splits -----------------------------------------------------------------------


def test_split_of_deterministic():
    assert split_of("layout-123") == split_of("layout-123")


def test_split_ratios_approximate():
    names = [f"id-{i}" for i in range(20_000)]
    splits = [split_of(n) for n in names]
    for split, want in zip(("train", "val", "test"), DEFAULT_RATIOS):
        got = splits.count(split) / len(names)
        assert abs(got - want) < 0.02


# --- adapters ----------------------------------------------------------------------


def coco_fixture(tmp_path, n_images=30, big_image_at=3):
    cats = [
        {"id": i + 1, "name": name}
        for i, name in enumerate(PUBLAYNET_SCHEMA.classes)
    ]
    images, annotations = [], []
    ann_id = 1
    rng = np.random.default_rng(0)
    for i in range(n_images):
        images.append({"id": i, "width": 600, "height": 800, "file_name": f"p{i}.png"})
        n_boxes = 11 if i == big_image_at else int(rng.integers(1, 6))
        for b in range(n_boxes):
            annotations.append(
                {
                    "image_id": i,
                    "category_id": int(rng.integers(1, 6)),
                    "bbox": [10 + 40 * b, 20 + 30 * b, 35, 25],
                }
            )
        ann_id += n_boxes
    # one degenerate zero-width annotation
    annotations.append({"image_id": 0, "category_id": 1, "bbox": [5, 5, 0, 10]})
    path = tmp_path / "annotations.json"
    path.write_text(json.dumps({"images": images, "annotations": annotations, "categories": cats}))
    return path


def test_publaynet_ingest_filters_and_splits(tmp_path):
    src = coco_fixture(tmp_path)
    out = tmp_path / "out"
    schema, report = ingest(src, "publaynet", out)
    assert report.total == 30
    assert report.dropped["too-many-components"] == 1
    assert report.dropped["zero-area-component"] == 1
    assert report.kept == report.total - report.dropped["too-many-components"]
    assert report.kept == sum(report.split_counts.values())
    for split in ("train", "val", "test"):
        assert (out / f"{split}.jsonl").exists()
    kept = sum(
        len(read_jsonl(out / f"{s}.jsonl", schema)) for s in ("train", "val", "test")
    )
    assert kept == report.kept
    assert json.loads((out / "stats.json").read_text())["n_layouts"] == report.split_counts["train"]
    assert json.loads((out / "schema.json").read_text())["name"] == "publaynet"


def test_publaynet_official_split_dir(tmp_path):
    d = tmp_path / "coco"
    d.mkdir()
    coco_fixture(tmp_path, n_images=10).rename(d / "train.json")
    coco_fixture(tmp_path, n_images=4, big_image_at=99).rename(d / "val.json")
    out = tmp_path / "out"
    schema, report = ingest(d, "publaynet", out)
    # official split respected: everything from val.json lands in val
    assert report.split_counts["val"] == 4
    assert report.split_counts["test"] == 0


def rico_fixture(tmp_path, n=20):
    d = tmp_path / "rico"
    d.mkdir()
    labels = ["Toolbar", "Text", "Image", "Icon", "List Item"]
    rng = np.random.default_rng(1)
    for i in range(n):
        children = []
        n_nodes = int(rng.integers(2, 7))
        for b in range(n_nodes):
            children.append(
                {
                    "componentLabel": labels[int(rng.integers(len(labels)))],
                    "bounds": [0, 200 * b, 1440, 200 * b + 180],
                    "children": [],
                }
            )
        # one file carries an exotic label that should knock the layout out
        if i == 7:
            children.append(
                {"componentLabel": "RareWidget9000", "bounds": [0, 0, 10, 10], "children": []}
            )
        doc = {
            "activity": {
                "root": {"bounds": [0, 0, 1440, 2560], "children": children}
            }
        }
        (d / f"app{i:03d}.json").write_text(json.dumps(doc))
    return d


def test_rico_ingest_top_class_filter(tmp_path):
    src = rico_fixture(tmp_path)
    out = tmp_path / "out"
    schema, report = ingest(src, "rico", out)
    # 5 common labels + 1 rare one; the rare label misses the top-13 cut only
    # if there are more than 13 classes, so emulate by passing a schema
    assert "RareWidget9000" in schema.classes or report.dropped.get("off-vocabulary-class", 0) >= 0

    from layoutdiff.core import DatasetSchema

    narrow = DatasetSchema(name="rico", classes=("Toolbar", "Text", "Image", "Icon", "List Item"))
    out2 = tmp_path / "out2"
    schema2, report2 = ingest(src, "rico", out2, schema=narrow)
    assert report2.dropped["off-vocabulary-class"] == 1
    assert report2.kept == report2.total - 1


def test_rico_top13_limits_vocabulary(tmp_path):
    d = tmp_path / "rico"
    d.mkdir()
    # 14 labels with strictly decreasing frequency; the rarest must be cut
    labels = [f"W{i:02d}" for i in range(14)]
    file_id = 0
    for rank, label in enumerate(labels):
        for _ in range(14 - rank):
            doc = {
                "activity": {
                    "root": {
                        "bounds": [0, 0, 1000, 1000],
                        "children": [
                            {"componentLabel": label, "bounds": [0, 0, 500, 500], "children": []},
                            {"componentLabel": labels[0], "bounds": [0, 500, 500, 1000], "children": []},
                        ],
                    }
                }
            }
            (d / f"f{file_id:04d}.json").write_text(json.dumps(doc))
            file_id += 1
    out = tmp_path / "out"
    schema, report = ingest(d, "rico", out)
    assert schema.K == 13
    assert "W13" not in schema.classes
    assert report.dropped["off-vocabulary-class"] == 1  # the single W13 file


def magazine_fixture(tmp_path, n=6):
    d = tmp_path / "mag"
    d.mkdir()
    for i in range(n):
        xml = f"""<annotation>
  <size><width>300</width><height>400</height></size>
  <layout>
    <element label="text" polygon_x="10 110 110 10" polygon_y="20 20 120 120"/>
    <element label="image" polygon_x="150 290 290 150" polygon_y="200 200 380 380"/>
  </layout>
</annotation>"""
        (d / f"page{i}.xml").write_text(xml)
    return d


def test_magazine_ingest_with_manifest(tmp_path):
    src = magazine_fixture(tmp_path)
    manifest = tmp_path / "split.json"
    manifest.write_text(json.dumps({"page0": "test", "page1": "val"}))
    out = tmp_path / "out"
    schema, report = ingest(src, "magazine", out, split_manifest=manifest)
    assert schema is MAGAZINE_SCHEMA
    assert report.split_counts["test"] >= 1
    test_layouts = read_jsonl(out / "test.jsonl", schema)
    assert test_layouts[0].components[0].cls.name == "text"
    box = test_layouts[0].components[0].box
    assert box.cx == pytest.approx(60 / 300)
    assert box.h == pytest.approx(100 / 400)


def test_canonical_passthrough_idempotent(tmp_path):
    schema, layouts = synth("grid", 30, seed=8)
    src = tmp_path / "src.jsonl"
    write_jsonl(src, layouts)
    out1 = tmp_path / "o1"
    ingest(src, "canonical", out1, schema=schema)
    all1 = []
    for split in ("train", "val", "test"):
        all1 += [json.dumps(l.to_dict()) for l in read_jsonl(out1 / f"{split}.jsonl", schema)]

    merged = tmp_path / "merged.jsonl"
    merged.write_text("".join(line + "\n" for line in all1))
    out2 = tmp_path / "o2"
    ingest(merged, "canonical", out2, schema=schema)
    all2 = []
    for split in ("train", "val", "test"):
        all2 += [json.dumps(l.to_dict()) for l in read_jsonl(out2 / f"{split}.jsonl", schema)]
    assert sorted(all1) == sorted(all2)


def test_ingest_error_paths(tmp_path):
    with pytest.raises(IngestError, match="adapter"):
        ingest(tmp_path, "mystery", tmp_path / "o")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(IngestError):
        ingest(bad, "publaynet", tmp_path / "o")
    empty = tmp_path / "emptydir"
    empty.mkdir()
    with pytest.raises(IngestError):
        ingest(empty, "rico", tmp_path / "o")
    with pytest.raises(IngestError, match="schema"):
        ingest(bad, "canonical", tmp_path / "o")