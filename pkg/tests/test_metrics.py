import itertools

import numpy as np
import pytest
import scipy.linalg

from layoutdiff.core import BBox, Component, Layout
from layoutdiff.ingest import synth
from layoutdiff.metrics import (
    CriticConfig,
    alignment,
    critic_accuracy,
    docsim,
    docsim_weights,
    evaluate,
    fid,
    frechet_distance,
    gaussian_fit,
    overlap,
    piou,
    sqrtm_psd,
    train_fid_critic,
)
from tests.conftest import make_layout


def shift_layout(layout, dx, dy):
    comps = [
        Component(c.cls, BBox(c.box.cx + dx, c.box.cy + dy, c.box.w, c.box.h))
        for c in layout.components
    ]
    return Layout(components=comps, canvas_w=layout.canvas_w, canvas_h=layout.canvas_h)


def random_layout(doc_schema, rng, n=None):
    n = n or int(rng.integers(2, 8))
    spec = []
    for _ in range(n):
        w, h = rng.uniform(0.05, 0.4, size=2)
        cx = rng.uniform(w / 2, 1 - w / 2)
        cy = rng.uniform(h / 2, 1 - h / 2)
        name = doc_schema.classes[int(rng.integers(doc_schema.K))]
        spec.append((name, cx, cy, w, h))
    return make_layout(doc_schema, spec)


# --- overlap -------------------------------------------------------------------


def test_overlap_disjoint_boxes(doc_schema):
    layout = make_layout(
        doc_schema, [("text", 0.2, 0.2, 0.2, 0.2), ("text", 0.7, 0.7, 0.2, 0.2)]
    )
    assert overlap(layout) == 0.0


def test_overlap_identical_boxes(doc_schema):
    layout = make_layout(
        doc_schema, [("text", 0.5, 0.5, 0.4, 0.4), ("figure", 0.5, 0.5, 0.4, 0.4)]
    )
    assert overlap(layout) == pytest.approx(0.5)


def test_overlap_single_and_empty(doc_schema):
    assert overlap(make_layout(doc_schema, [("text", 0.5, 0.5, 0.5, 0.5)])) == 0.0
    assert overlap(make_layout(doc_schema, [])) == 0.0


def test_overlap_translation_invariant(doc_schema, rng):
    layout = random_layout(doc_schema, rng)
    shifted = shift_layout(layout, 0.02, -0.03)
    assert overlap(shifted) == pytest.approx(overlap(layout), abs=1e-12)


# --- pIOU ---------------------------------------------------------------------


def test_piou_disjoint(doc_schema):
    layout = make_layout(
        doc_schema, [("text", 0.2, 0.2, 0.2, 0.2), ("text", 0.7, 0.7, 0.2, 0.2)]
    )
    assert piou(layout) == 0.0


def test_piou_identical_pair_is_one(doc_schema):
    layout = make_layout(
        doc_schema, [("text", 0.5, 0.5, 0.4, 0.4), ("figure", 0.5, 0.5, 0.4, 0.4)]
    )
    assert piou(layout) == 1.0


def test_piou_half_overlap_one_third(doc_schema):
    # quarter-canvas squares (side 0.5) offset by half a side
    layout = make_layout(
        doc_schema,
        [("text", 0.375, 0.5, 0.5, 0.5), ("figure", 0.625, 0.5, 0.5, 0.5)],
    )
    assert piou(layout, raster=256) == pytest.approx(1 / 3, abs=2 / 256)


def test_piou_raster_validation(doc_schema):
    layout = make_layout(doc_schema, [("text", 0.5, 0.5, 0.5, 0.5)])
    with pytest.raises(ValueError):
        piou(layout, raster=32)
    assert piou(make_layout(doc_schema, []), raster=256) == 0.0


def test_piou_raster_convergence(doc_schema, rng):
    for _ in range(5):
        layout = random_layout(doc_schema, rng)
        assert abs(piou(layout, 256) - piou(layout, 512)) < 5e-3


def test_piou_translation_invariant(doc_schema, rng):
    layout = random_layout(doc_schema, rng)
    shifted = shift_layout(layout, 1 / 256, -1 / 256)  # whole raster pixels
    assert piou(shifted) == pytest.approx(piou(layout), abs=1e-12)


# --- alignment ------------------------------------------------------------------


def test_alignment_grid_is_zero(doc_schema):
    layout = make_layout(
        doc_schema,
        [
            ("text", 0.25, 0.25, 0.3, 0.3),
            ("text", 0.75, 0.25, 0.3, 0.3),
            ("text", 0.25, 0.75, 0.3, 0.3),
            ("text", 0.75, 0.75, 0.3, 0.3),
        ],
    )
    assert alignment(layout) == 0.0


def test_alignment_center_only_counts(doc_schema):
    layout = make_layout(
        doc_schema, [("text", 0.5, 0.3, 0.2, 0.1), ("figure", 0.5, 0.7, 0.34, 0.22)]
    )
    assert alignment(layout) == 0.0


def test_alignment_hand_offset_case(doc_schema):
    layout = make_layout(
        doc_schema, [("text", 0.3, 0.3, 0.2, 0.2), ("text", 0.35, 0.8, 0.2, 0.2)]
    )
    assert alignment(layout) == pytest.approx(0.05)


def test_alignment_fewer_than_two(doc_schema):
    assert alignment(make_layout(doc_schema, [("text", 0.4, 0.4, 0.2, 0.2)])) == 0.0


def test_alignment_translation_invariant(doc_schema, rng):
    layout = random_layout(doc_schema, rng)
    shifted = shift_layout(layout, -0.01, 0.04)
    assert alignment(shifted) == pytest.approx(alignment(layout), abs=1e-12)


# --- DocSim ---------------------------------------------------------------------


def brute_force_docsim(gen, ref):
    """Exhaustive max over padded permutations; oracle for n <= 5."""
    W = docsim_weights(gen, ref)
    m = max(gen.n, ref.n)
    padded = np.zeros((m, m))
    padded[: gen.n, : ref.n] = W
    best = max(
        sum(padded[i, p[i]] for i in range(m))
        for p in itertools.permutations(range(m))
    )
    return best / m


def test_docsim_self_similarity(doc_schema):
    layout = make_layout(
        doc_schema,
        [("text", 0.3, 0.3, 0.2, 0.4), ("title", 0.5, 0.1, 0.6, 0.1)],
    )
    expected = np.mean([np.sqrt(c.box.area) for c in layout.components])
    assert docsim(layout, layout) == pytest.approx(expected, abs=1e-12)


def test_docsim_no_shared_classes(doc_schema):
    a = make_layout(doc_schema, [("text", 0.3, 0.3, 0.2, 0.2)])
    b = make_layout(doc_schema, [("figure", 0.3, 0.3, 0.2, 0.2)])
    assert docsim(a, b) == 0.0


def test_docsim_empty_inputs(doc_schema):
    a = make_layout(doc_schema, [])
    b = make_layout(doc_schema, [("text", 0.3, 0.3, 0.2, 0.2)])
    assert docsim(a, b) == 0.0


@pytest.mark.parametrize("trial", range(10))
def test_docsim_matches_exhaustive_matching(doc_schema, trial):
    rng = np.random.default_rng(trial)
    a = random_layout(doc_schema, rng, n=int(rng.integers(1, 6)))
    b = random_layout(doc_schema, rng, n=int(rng.integers(1, 6)))
    assert docsim(a, b) == pytest.approx(brute_force_docsim(a, b), abs=1e-12)


def test_docsim_self_beats_same_class_perturbations(doc_schema):
    rng = np.random.default_rng(33)
    for _ in range(100):
        a = random_layout(doc_schema, rng, n=4)
        # same class multiset, jittered geometry
        comps = []
        for c in a.components:
            dx, dy = rng.uniform(-0.05, 0.05, size=2)
            comps.append(
                Component(
                    c.cls,
                    BBox(
                        float(np.clip(c.box.cx + dx, 0, 1)),
                        float(np.clip(c.box.cy + dy, 0, 1)),
                        c.box.w,
                        c.box.h,
                    ),
                )
            )
        b = Layout(components=comps, canvas_w=a.canvas_w, canvas_h=a.canvas_h)
        assert docsim(a, a) >= docsim(a, b) - 1e-12


# --- Frechet distance -------------------------------------------------------------


def test_sqrtm_psd_against_scipy(rng):
    for _ in range(5):
        A = rng.standard_normal((6, 6))
        M = A @ A.T + 1e-3 * np.eye(6)
        ours = sqrtm_psd(M)
        ref = np.real(scipy.linalg.sqrtm(M))
        np.testing.assert_allclose(ours, ref, atol=1e-8)
        np.testing.assert_allclose(ours @ ours, M, atol=1e-8)


def test_frechet_identical_distributions(rng):
    f = rng.standard_normal((500, 8))
    mu, sigma = gaussian_fit(f)
    assert frechet_distance(mu, sigma, mu, sigma) == pytest.approx(0.0, abs=1e-6)


def test_frechet_one_dimensional_analytic():
    rng = np.random.default_rng(0)
    a = rng.normal(0.0, 1.0, size=(20_000, 1))
    b = rng.normal(1.0, 1.0, size=(20_000, 1))
    d = frechet_distance(*gaussian_fit(a), *gaussian_fit(b))
    # squared mean gap 1.0; MC error on the fit ~ O(1/sqrt(n))
    assert d == pytest.approx(1.0, abs=0.06)


def test_frechet_symmetric(rng):
    f1 = rng.standard_normal((300, 6))
    f2 = rng.standard_normal((300, 6)) * 1.4 + 0.3
    d_ab = frechet_distance(*gaussian_fit(f1), *gaussian_fit(f2))
    d_ba = frechet_distance(*gaussian_fit(f2), *gaussian_fit(f1))
    assert abs(d_ab - d_ba) < 1e-9


# --- critic and evaluate -----------------------------------------------------------


@pytest.fixture(scope="module")
def critic_setup():
    schema, layouts = synth("two-column-doc", 300, seed=4)
    cfg = CriticConfig(K=schema.K, steps=800, batch_size=48)
    bundle = train_fid_critic(layouts[:220], schema, cfg, seed=0)
    return schema, layouts, bundle


def test_critic_requires_minimum_data():
    from layoutdiff.ingest import PUBLAYNET_SCHEMA

    _, layouts = synth("two-column-doc", 10, seed=1)
    with pytest.raises(ValueError, match="64"):
        train_fid_critic(layouts, PUBLAYNET_SCHEMA, seed=0)


def test_critic_accuracy_on_held_out(critic_setup):
    schema, layouts, bundle = critic_setup
    acc = critic_accuracy(bundle, layouts[220:], seed=5)
    assert acc >= 0.8


def test_critic_feature_dimension(critic_setup):
    schema, layouts, bundle = critic_setup
    feats = bundle.layout_features(layouts[:8])
    assert feats.shape == (8, bundle.model.config.d_model)


def test_critic_deterministic(critic_setup):
    schema, layouts, bundle = critic_setup
    cfg = CriticConfig(K=schema.K, steps=40, batch_size=16)
    a = train_fid_critic(layouts[:80], schema, cfg, seed=9)
    b = train_fid_critic(layouts[:80], schema, cfg, seed=9)
    fa = a.layout_features(layouts[:10])
    fb = b.layout_features(layouts[:10])
    np.testing.assert_array_equal(fa, fb)


def test_critic_save_load_round_trip(tmp_path, critic_setup):
    from layoutdiff.metrics import CriticBundle
    schema, layouts, bundle = critic_setup
    path = tmp_path / "critic.pt"
    bundle.save(path)
    back = CriticBundle.load(path)
    np.testing.assert_array_equal(
        back.layout_features(layouts[:6]), bundle.layout_features(layouts[:6])
    )


def test_fid_identical_sets_near_zero(critic_setup):
    schema, layouts, bundle = critic_setup
    subset = layouts[:150]
    assert fid(subset, subset, bundle) <= 1e-6


def test_fid_separates_real_from_garbage(critic_setup, rng):
    schema, layouts, bundle = critic_setup
    garbage = [random_layout(schema, rng, n=6) for _ in range(150)]
    d_real = fid(layouts[:150], layouts[150:], bundle)
    d_garbage = fid(garbage, layouts[150:], bundle)
    assert d_garbage > d_real


def test_evaluate_self_report(critic_setup):
    schema, layouts, bundle = critic_setup
    subset = layouts[:100]
    report = evaluate(subset, subset, critic=bundle, pairing=list(range(100)))
    assert report.n_layouts == 100
    assert report.overlap == pytest.approx(np.mean([overlap(l) for l in subset]))
    assert report.fid == pytest.approx(0.0, abs=1e-6)
    assert 0.0 <= report.docsim <= 1.0
    report.check()


def test_evaluate_without_critic_or_pairing(critic_setup):
    schema, layouts, _ = critic_setup
    report = evaluate(layouts[:20], layouts[20:40])
    assert report.docsim is None and report.fid is None
    report.check()


def test_evaluate_rejects_empty(critic_setup):
    schema, layouts, _ = critic_setup
    with pytest.raises(ValueError):
        evaluate([], layouts[:5])
    with pytest.raises(ValueError):
        evaluate(layouts[:5], layouts[:5], pairing=[0, 1])
