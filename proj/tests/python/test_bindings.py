import json
import math
from pathlib import Path

import numpy as np
import pytest

conceptseg = pytest.importorskip("conceptseg")


def numpy_dice(p, g):
    p = p.astype(bool)
    g = g.astype(bool)
    denom = p.sum() + g.sum()
    return 1.0 if denom == 0 else 2.0 * (p & g).sum() / denom


def test_phrase_rule():
    assert conceptseg.validate_phrase("  Breast   Tumor ") == "breast tumor"
    with pytest.raises(conceptseg.ConceptSegError) as info:
        conceptseg.validate_phrase("ischemic stroke lesion segmentation")
    assert info.value.code == "invalid-phrase"


def test_dice_matches_numpy():
    rng = np.random.default_rng(7)
    for _ in range(200):
        h, w = rng.integers(1, 20, size=2)
        p = rng.random((h, w)) < rng.random()
        g = rng.random((h, w)) < rng.random()
        assert conceptseg.dice(p, g) == pytest.approx(numpy_dice(p, g), abs=1e-12)
    empty = np.zeros((4, 4), dtype=bool)
    assert conceptseg.dice(empty, empty) == 1.0
    inter, np_, ng = conceptseg.dice_counts(np.eye(3), np.ones((3, 3)))
    assert (inter, np_, ng) == (3, 3, 9)


def test_dice_shape_mismatch_raises():
    with pytest.raises(conceptseg.ConceptSegError):
        conceptseg.dice(np.zeros((2, 3)), np.zeros((3, 2)))


def test_rle_round_trip():
    rng = np.random.default_rng(11)
    for _ in range(100):
        h, w = rng.integers(1, 30, size=2)
        m = rng.random((h, w)) < 0.4
        rle = conceptseg.encode_rle(m)
        assert sum(rle["runs"]) == h * w
        assert np.array_equal(conceptseg.decode_rle(rle), m)


def test_largest_component_box_matches_scipy():
    ndimage = pytest.importorskip("scipy.ndimage")
    rng = np.random.default_rng(3)
    for _ in range(100):
        m = rng.random((24, 24)) < 0.15
        if not m.any():
            continue
        labels, n = ndimage.label(m, structure=np.ones((3, 3)))
        sizes = np.bincount(labels.ravel())[1:]
        best = sizes.max()
        # Ties go to the component seen first in row-major order.
        first = {}
        for idx, lab in enumerate(labels.ravel()):
            if lab and lab not in first:
                first[lab] = idx
        winner = min((first[k + 1], k + 1) for k in range(n) if sizes[k] == best)[1]
        ys, xs = np.nonzero(labels == winner)
        expected = (xs.min(), ys.min(), xs.max(), ys.max())
        assert conceptseg.largest_component_box(m) == expected
    with pytest.raises(conceptseg.ConceptSegError) as info:
        conceptseg.largest_component_box(np.zeros((5, 5)))
    assert info.value.code == "no-target"


def test_registry_counts():
    phrases = [p for d in conceptseg.registry_datasets() for _, p in conceptseg.registry_phrases(d)]
    assert len(phrases) == 19
    assert len(set(phrases)) == 17
    assert all(len(p.split()) <= 3 for p in phrases)


def test_train_count_is_ceiling():
    for n in range(1, 300):
        assert conceptseg.train_count(n) == math.ceil(0.8 * n - 1e-9)


def test_round_half_even():
    assert conceptseg.round_half_even(2.5, 0) == 2.0
    assert conceptseg.round_half_even(3.5, 0) == 4.0


def test_arrow_checks_single_known_discrepancy():
    checks = conceptseg.arrow_checks()
    assert len(checks) == 30
    off = [c for c in checks if not c["within_tolerance"]]
    assert [(c["table"], c["dataset"], c["method"]) for c in off] == [
        ("finetuned_2d", "BUSI", "MedSAM-3 T+I")
    ]
    assert off[0]["known_discrepancy"]


def test_parse_action():
    a = conceptseg.parse_action('noise {"action": "SET_PHRASE", "phrase": "Breast Tumor"} tail')
    assert a["action"] == "SET_PHRASE"
    assert a["phrase"] == "breast tumor"
    with pytest.raises(conceptseg.ConceptSegError):
        conceptseg.parse_action("no json here")


def test_toy_suite_end_to_end(tmp_path):
    manifest, scenes = conceptseg.write_toy_suite(str(tmp_path), cases=12, seed=5)
    full = tmp_path / "world-full-vocab.json"
    empty = tmp_path / "world-empty-vocab.json"
    t_full = conceptseg.run_toy_eval(manifest, str(full), scenes, "TEXT", jobs=2)
    t_empty = conceptseg.run_toy_eval(manifest, str(empty), scenes, "TEXT")
    tb = conceptseg.run_toy_eval(manifest, str(empty), scenes, "TEXT_BOX")
    assert len(t_full["rows"]) == 12
    assert t_full["summaries"][0]["mean_dice"] == 1.0
    assert t_empty["summaries"][0]["mean_dice"] == 0.0
    assert tb["summaries"][0]["mean_dice"] >= 0.95
    checks = conceptseg.validate_manifest(manifest)
    assert all(c["passed"] for c in checks)


def test_split_manifest(tmp_path):
    suite = tmp_path / "suite"
    manifest, _ = conceptseg.write_toy_suite(str(suite), cases=20, seed=1)
    doc = json.loads(Path(manifest).read_text())
    for c in doc["cases"]:
        c.pop("split", None)
    unsplit = suite / "unsplit.json"
    unsplit.write_text(json.dumps(doc))
    out = suite / "split.json"
    conceptseg.split_manifest(str(unsplit), 9, str(out))
    splits = [c["split"] for c in json.loads(out.read_text())["cases"]]
    assert splits.count("train") == 16
    assert splits.count("test") == 4
