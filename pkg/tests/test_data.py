import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from intentrank.data import (
    Bbox,
    Bundle,
    Detection,
    GroundTruth,
    Region,
    bundle_from_document,
    iou,
    load_bundle,
    load_detections,
    load_ground_truth,
    load_queries,
    mine_ambiguous,
    save_bundle,
)
from intentrank.errors import FormatError

from conftest import make_bundle, unit


boxes = st.builds(
    Bbox,
    x=st.floats(-100, 100),
    y=st.floats(-100, 100),
    w=st.floats(0.1, 50),
    h=st.floats(0.1, 50),
)


class TestIou:
    def test_identical(self):
        box = Bbox(0, 0, 10, 10)
        assert iou(box, box) == 1.0

    def test_disjoint(self):
        assert iou(Bbox(0, 0, 10, 10), Bbox(20, 20, 5, 5)) == 0.0

    def test_partial_overlap(self):
        assert iou(Bbox(0, 0, 10, 10), Bbox(5, 5, 10, 10)) == pytest.approx(25 / 175)

    def test_boundary_touch_is_zero(self):
        assert iou(Bbox(0, 0, 10, 10), Bbox(10, 0, 10, 10)) == 0.0

    def test_invalid_extents(self):
        with pytest.raises(ValueError):
            Bbox(0, 0, 0, 10)

    @given(boxes, boxes)
    def test_symmetric_and_bounded(self, a, b):
        ab = iou(a, b)
        assert ab == iou(b, a)
        assert 0.0 <= ab <= 1.0

    @given(boxes)
    def test_self_is_one(self, a):
        assert iou(a, a) == pytest.approx(1.0)


class TestBundleIO:
    def manifest(self, **overrides):
        doc = {
            "image_id": "img-7",
            "dim": 2,
            "regions": [
                {"id": 0, "bbox": [0, 0, 10, 10], "embedding": [3.0, 4.0]},
                {"id": 1, "bbox": [20, 0, 10, 10], "embedding": [1.0, 0.0]},
            ],
        }
        doc.update(overrides)
        return doc

    def test_normalizes_at_ingest(self, tmp_path):
        path = tmp_path / "b.json"
        path.write_text(json.dumps(self.manifest()))
        bundle = load_bundle(path)
        np.testing.assert_allclose(bundle.regions[0].embedding, [0.6, 0.8])

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_bundle(tmp_path / "absent.json")

    def test_duplicate_ids(self):
        doc = self.manifest()
        doc["regions"][1]["id"] = 0
        with pytest.raises(FormatError):
            bundle_from_document(doc)

    def test_dim_mismatch(self):
        doc = self.manifest(dim=3)
        with pytest.raises(FormatError):
            bundle_from_document(doc)

    def test_both_inline_and_sidecar(self):
        doc = self.manifest(embedding_file="side.f32")
        with pytest.raises(FormatError):
            bundle_from_document(doc)

    def test_sidecar_size_mismatch(self, tmp_path):
        doc = self.manifest(embedding_file="side.f32")
        for region in doc["regions"]:
            del region["embedding"]
        (tmp_path / "side.f32").write_bytes(b"\0" * (3 * 2 * 4))  # 3 rows for M=2
        path = tmp_path / "b.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(FormatError):
            load_bundle(path)

    def test_sidecar_round_trip(self, tmp_path):
        bundle = make_bundle([unit(13), unit(77), unit(-40)], image_id="img-s")
        save_bundle(bundle, tmp_path / "b.json", sidecar=True)
        loaded = load_bundle(tmp_path / "b.json")
        assert loaded.image_id == "img-s" and len(loaded.regions) == 3
        for orig, back in zip(bundle.regions, loaded.regions):
            np.testing.assert_allclose(back.embedding, orig.embedding, atol=1e-6)

    def test_inline_round_trip_is_identity(self, tmp_path):
        bundle = make_bundle([unit(13), unit(77)], image_id="img-i")
        save_bundle(bundle, tmp_path / "b.json")
        once = load_bundle(tmp_path / "b.json")
        save_bundle(once, tmp_path / "b2.json")
        twice = load_bundle(tmp_path / "b2.json")
        assert once.image_id == twice.image_id and once.dim == twice.dim
        for r1, r2 in zip(once.regions, twice.regions):
            assert r1.id == r2.id and r1.bbox == r2.bbox
            assert r1.embedding.tobytes() == r2.embedding.tobytes()

    def test_region_order_preserved(self, tmp_path):
        bundle = make_bundle([unit(1), unit(2)], ids=[5, 3])
        save_bundle(bundle, tmp_path / "b.json")
        loaded = load_bundle(tmp_path / "b.json")
        assert [r.id for r in loaded.regions] == [5, 3]


class TestRecordFiles:
    def test_queries_round_trip(self, tmp_path):
        record = {
            "query_id": "q1",
            "image_id": "img-1",
            "text": "the front cup",
            "text_embedding": [1.0, 0.0],
            "gt_bbox": [0, 0, 10, 10],
            "category": "cup",
        }
        path = tmp_path / "queries.jsonl"
        path.write_text(json.dumps(record) + "\n")
        (query,) = load_queries(path)
        assert query.query_id == "q1" and query.category == "cup"
        assert query.ref_image_embedding is None
        np.testing.assert_array_equal(query.text_embedding, [1.0, 0.0])

    def test_query_without_embedding_rejected(self, tmp_path):
        record = {
            "query_id": "q1",
            "image_id": "img-1",
            "gt_bbox": [0, 0, 10, 10],
            "category": "cup",
        }
        path = tmp_path / "queries.jsonl"
        path.write_text(json.dumps(record) + "\n")
        with pytest.raises(FormatError):
            load_queries(path)

    def test_ground_truth_and_detections(self, tmp_path):
        gt_path = tmp_path / "gt.jsonl"
        gt_path.write_text(
            json.dumps({"image_id": "i", "bbox": [0, 0, 5, 5], "category": "cup"}) + "\n"
        )
        det_path = tmp_path / "det.jsonl"
        det_path.write_text(
            json.dumps(
                {"image_id": "i", "bbox": [0, 0, 5, 5], "confidence": 0.9, "category": "cup"}
            )
            + "\n"
        )
        assert load_ground_truth(gt_path)[0].category == "cup"
        assert load_detections(det_path)[0].confidence == 0.9

    def test_bad_json_line(self, tmp_path):
        path = tmp_path / "gt.jsonl"
        path.write_text("{not json\n")
        with pytest.raises(FormatError):
            load_ground_truth(path)


def det(image_id, bbox, confidence, category="cup"):
    return Detection(image_id=image_id, bbox=Bbox(*bbox), confidence=confidence, category=category)


class TestMineAmbiguous:
    def test_reference_fixture(self):
        gt = [GroundTruth("i", Bbox(0, 0, 10, 10), "cup")]
        detections = [
            det("i", (20, 20, 10, 10), 0.9),
            det("i", (0, 0, 10, 10), 0.8),
        ]
        (sample,) = mine_ambiguous(gt, detections)
        assert sample.true_target_rank == 2
        assert sample.distractor_count == 1
        assert sample.category == "cup"

    def test_rank1_correct_not_emitted(self):
        gt = [GroundTruth("i", Bbox(0, 0, 10, 10), "cup")]
        detections = [
            det("i", (0, 0, 10, 10), 0.9),
            det("i", (20, 20, 10, 10), 0.8),
        ]
        assert mine_ambiguous(gt, detections) == []

    def test_high_overlap_prediction_is_not_a_distractor(self):
        # IoU 0.7 to gt: fails the low-overlap condition and is itself the
        # best-IoU prediction, so nothing outranks the target.
        gt = [GroundTruth("i", Bbox(0, 0, 10, 10), "cup")]
        detections = [det("i", (0, 1.76, 10, 10), 0.9), det("i", (50, 50, 10, 10), 0.8)]
        assert iou(detections[0].bbox, gt[0].bbox) > 0.69
        assert mine_ambiguous(gt, detections) == []

    def test_other_category_not_a_distractor(self):
        gt = [GroundTruth("i", Bbox(0, 0, 10, 10), "cup")]
        detections = [
            det("i", (20, 20, 10, 10), 0.9, category="bottle"),
            det("i", (0, 0, 10, 10), 0.8),
        ]
        # The bottle probe's detection is not part of the cup probe's list.
        assert mine_ambiguous(gt, detections) == []

    def test_empty_detection_list_skipped(self):
        gt = [GroundTruth("i", Bbox(0, 0, 10, 10), "cup")]
        assert mine_ambiguous(gt, []) == []

    def test_monotone_in_iou_low(self):
        rng = np.random.default_rng(17)
        gt = []
        detections = []
        for i in range(30):
            image = f"img-{i}"
            gt.append(GroundTruth(image, Bbox(0, 0, 10, 10), "cup"))
            for rank in range(4):
                dx = float(rng.uniform(0, 15))
                detections.append(det(image, (dx, 0, 10, 10), 0.9 - 0.1 * rank))
        keys_low = {(s.image_id, s.category) for s in mine_ambiguous(gt, detections, iou_low=0.5)}
        keys_high = {(s.image_id, s.category) for s in mine_ambiguous(gt, detections, iou_low=0.9)}
        assert keys_low <= keys_high

    def test_emitted_samples_are_subset_with_sane_fields(self):
        rng = np.random.default_rng(18)
        gt = []
        detections = []
        for i in range(20):
            image = f"img-{i}"
            gt.append(GroundTruth(image, Bbox(0, 0, 10, 10), "cup"))
            for rank in range(3):
                dx = float(rng.uniform(0, 25))
                detections.append(det(image, (dx, 0, 10, 10), 0.9 - 0.1 * rank))
        for sample in mine_ambiguous(gt, detections):
            assert sample.true_target_rank >= 2
            assert sample.distractor_count >= 1
            assert any(g.image_id == sample.image_id for g in gt)

    def test_verify_against_gt_mode(self):
        gt = [
            GroundTruth("i", Bbox(0, 0, 10, 10), "cup"),
            GroundTruth("i", Bbox(30, 0, 10, 10), "cup"),
        ]
        hallucinated = [
            det("i", (60, 60, 10, 10), 0.9),  # overlaps no gt instance
            det("i", (0, 0, 10, 10), 0.8),
        ]
        assert len(mine_ambiguous(gt, hallucinated)) == 1
        assert mine_ambiguous(gt, hallucinated, verify_against_gt=True) == []
        verified = [
            det("i", (30, 0, 10, 10), 0.9),  # sits on the other cup instance
            det("i", (0, 0, 10, 10), 0.8),
        ]
        samples = mine_ambiguous(gt, verified, verify_against_gt=True)
        assert any(s.gt_bbox == Bbox(0, 0, 10, 10) for s in samples)
