"""FROC curve, area summary, operating point, and bootstrap tests.

The two-image fixture is small enough to enumerate by hand; the random
fixtures cross-check the incremental per-rank matcher against the one-shot
assignment matcher, and the bootstrap against a plain resampling loop.
"""

import numpy as np
import pytest

from wsdn.data import GridSample
from wsdn.evaluation import (
    Candidate,
    bootstrap_fauc,
    curve_from_records,
    detection_record,
    fauc,
    froc_curve,
    load_froc_csv,
    match_detections,
    operating_point_metrics,
    predicted_count,
    save_froc_csv,
)


def _sample(dots, boxes):
    return GridSample(
        image=np.zeros((140, 196)),
        count=len(dots),
        gt_dots=tuple(dots),
        gt_boxes=tuple(boxes),
    )


def _cands(*positions):
    return [Candidate(row=r, col=c, score=s) for r, c, s in positions]


def _fixture():
    # image 1: two dots, first two candidates hit them, third is a stray
    img1 = _sample([(14, 14), (14, 42)], [(0, 0), (0, 28)])
    c1 = _cands((14, 14, 0.9), (10, 40, 0.8), (100, 100, 0.7))
    # image 2: nothing to find, three strays
    img2 = _sample([], [])
    c2 = _cands((50, 50, 0.95), (60, 60, 0.6), (70, 70, 0.5))
    return [c1, c2], [img1, img2]


class TestDetectionRecord:
    def test_counts_grow_by_at_most_one_per_rank(self):
        cands, samples = _fixture()
        rec = detection_record(cands[0], samples[0])
        assert rec.tp_at_k == (0, 1, 2, 2)
        assert rec.n_gt == 2
        assert rec.n_candidates == 3

    def test_zero_ground_truth_image(self):
        cands, samples = _fixture()
        rec = detection_record(cands[1], samples[1])
        assert rec.tp_at_k == (0, 0, 0, 0)
        assert rec.n_gt == 0

    def test_later_candidate_forces_reassignment(self):
        # the first candidate can serve either dot, the second only the
        # first dot; keeping both matched requires moving the first over
        sample = _sample([(50, 50), (50, 58)], [(36, 36), (36, 44)])
        cands = _cands((50, 54, 0.9), (50, 46, 0.8))
        rec = detection_record(cands, sample, criterion="radius", radius=5.0)
        assert rec.tp_at_k == (0, 1, 2)

    def test_agrees_with_one_shot_matching_at_every_cutoff(self):
        rng = np.random.default_rng(23)
        for _ in range(40):
            n_dots = int(rng.integers(0, 6))
            cells = rng.choice(35, size=n_dots, replace=False)
            dots, boxes = [], []
            for cell in cells:
                r, c = divmod(int(cell), 7)
                boxes.append((28 * r, 28 * c))
                dots.append((28 * r + 14, 28 * c + 14))
            sample = _sample(dots, boxes)
            n_cands = int(rng.integers(0, 8))
            cands = [
                Candidate(
                    row=int(rng.integers(0, 140)),
                    col=int(rng.integers(0, 196)),
                    score=float(1.0 - 0.01 * i),
                )
                for i in range(n_cands)
            ]
            rec = detection_record(cands, sample)
            for k in range(n_cands + 1):
                out = match_detections(cands[:k], sample)
                assert len(out.tp) == rec.tp_at_k[k]


class TestFrocCurve:
    def test_hand_enumerated_two_image_curve(self):
        cands, samples = _fixture()
        curve = froc_curve(cands, samples)
        assert curve.n_images == 2
        assert curve.n_gt == 2
        assert curve.points == (
            (0, 0.0, 0.0),
            (1, 0.5, 0.5),
            (2, 1.0, 1.0),
            (3, 2.0, 1.0),
        )

    def test_images_with_fewer_candidates_saturate(self):
        cands, samples = _fixture()
        cands = [cands[0], cands[1][:1]]
        curve = froc_curve(cands, samples)
        # image 2 has one candidate in total, so from k=2 onward only
        # image 1 keeps taking more
        assert curve.points == (
            (0, 0.0, 0.0),
            (1, 0.5, 0.5),
            (2, 0.5, 1.0),
            (3, 1.0, 1.0),
        )

    def test_zero_total_ground_truth_rejected(self):
        _, samples = _fixture()
        with pytest.raises(ValueError):
            froc_curve([[], []], [samples[1], samples[1]])

    def test_misaligned_inputs_rejected(self):
        cands, samples = _fixture()
        with pytest.raises(ValueError):
            froc_curve(cands, samples[:1])


class TestFauc:
    def test_hand_fixture_is_exact(self):
        points = [(0.0, 0.0), (1.0, 0.5), (5.0, 0.5)]
        assert fauc(points, 5.0) == 45.0

    def test_perfect_curve_scores_one_hundred(self):
        assert fauc([(0.0, 1.0)], 5.0) == 100.0

    def test_empty_curve_scores_zero(self):
        assert fauc([], 5.0) == 0.0

    def test_clip_interpolates_inside_a_segment(self):
        assert fauc([(0.0, 0.0), (2.0, 1.0)], 1.0) == 25.0

    def test_short_curve_extends_horizontally(self):
        assert fauc([(0.0, 0.8)], 5.0) == pytest.approx(80.0)

    def test_accepts_curve_objects(self):
        cands, samples = _fixture()
        curve = froc_curve(cands, samples)
        assert fauc(curve, 2.0) == 75.0

    def test_fp_max_must_be_positive(self):
        with pytest.raises(ValueError):
            fauc([(0.0, 0.0)], 0.0)


class TestOperatingPoint:
    def test_rounding_and_clamping(self):
        assert predicted_count(-0.4) == 0
        assert predicted_count(-3.0) == 0
        assert predicted_count(0.4) == 0
        assert predicted_count(0.5) == 1
        assert predicted_count(2.5) == 3
        assert predicted_count(3.49) == 3
        assert predicted_count(40.0) == 35

    def test_hand_fixture_metrics(self):
        cands, samples = _fixture()
        out = operating_point_metrics([2.2, 0.4], cands, samples)
        assert (out.tp, out.fp, out.fn) == (2, 0, 0)
        assert out.sensitivity == 1.0
        assert out.fpavg == 0.0
        assert out.fnavg == 0.0
        out = operating_point_metrics([1.0, 2.0], cands, samples)
        assert (out.tp, out.fp, out.fn) == (1, 2, 1)
        assert out.sensitivity == 0.5
        assert out.fpavg == 1.0
        assert out.fnavg == 0.5

    def test_prediction_beyond_candidate_list_uses_all_candidates(self):
        cands, samples = _fixture()
        out = operating_point_metrics([10.0, 0.0], cands, samples)
        assert (out.tp, out.fp, out.fn) == (2, 1, 0)
        assert out.fpavg == 0.5

    def test_zero_total_ground_truth_rejected(self):
        _, samples = _fixture()
        with pytest.raises(ValueError):
            operating_point_metrics([1.0], [_cands((5, 5, 1.0))], [samples[1]])


def _naive_bootstrap_values(records, fp_max, n_replicates, seed):
    # independent route: resample the record list itself, then reuse the
    # public curve and area functions
    values = []
    n = len(records)
    for b in range(n_replicates):
        rng = np.random.default_rng((seed, 400, b))
        for _ in range(100):
            idx = rng.integers(0, n, size=n)
            resampled = [records[i] for i in idx]
            if sum(r.n_gt for r in resampled) > 0:
                break
        values.append(fauc(curve_from_records(resampled), fp_max))
    return values


class TestBootstrap:
    def _records(self):
        cands, samples = _fixture()
        extra = _sample([(70, 70)], [(56, 56)])
        extra_cands = _cands((70, 70, 0.9), (12, 120, 0.4))
        lists = cands + [extra_cands]
        samples = samples + [extra]
        return [detection_record(c, s) for c, s in zip(lists, samples)]

    def test_same_seed_reproduces_summary(self):
        records = self._records()
        a = bootstrap_fauc(records, 2.0, n_replicates=50, seed=5)
        b = bootstrap_fauc(records, 2.0, n_replicates=50, seed=5)
        assert a == b
        c = bootstrap_fauc(records, 2.0, n_replicates=50, seed=6)
        assert c.std != a.std

    def test_identical_images_have_zero_spread(self):
        one = detection_record(*(_fixture()[0][0], _fixture()[1][0]))
        records = [one, one, one]
        out = bootstrap_fauc(records, 2.0, n_replicates=20, seed=0)
        assert out.std == 0.0
        assert out.ci_low == out.ci_high == out.fauc

    def test_matches_plain_resampling_loop(self):
        records = self._records()
        want = _naive_bootstrap_values(records, 2.0, 200, seed=9)
        got = bootstrap_fauc(records, 2.0, n_replicates=200, seed=9)
        arr = np.sort(np.asarray(want))
        assert got.std == float(np.std(want, ddof=1))
        # nearest-rank percentiles: ceil(0.025 * 200) = 5, ceil(0.975 * 200) = 195
        assert got.ci_low == float(arr[4])
        assert got.ci_high == float(arr[194])

    def test_zero_ground_truth_resamples_are_redrawn(self):
        cands, samples = _fixture()
        records = [detection_record(c, s) for c, s in zip(cands, samples)]
        # half the draws hit the empty image only; redraws must recover
        out = bootstrap_fauc(records, 2.0, n_replicates=100, seed=1)
        assert out.n_replicates == 100
        assert out.ci_low <= out.ci_high

    def test_all_empty_records_rejected_outright(self):
        # the point estimate is already undefined with zero ground truth,
        # so this fails before any resampling happens
        _, samples = _fixture()
        records = [detection_record(_cands((5, 5, 1.0)), samples[1])]
        with pytest.raises(ValueError):
            bootstrap_fauc(records, 2.0, n_replicates=5, seed=0)

    def test_too_few_replicates_rejected(self):
        records = self._records()
        with pytest.raises(ValueError):
            bootstrap_fauc(records, 2.0, n_replicates=1, seed=0)


class TestFrocCsv:
    def test_round_trip_preserves_values(self, tmp_path):
        cands, samples = _fixture()
        curve = froc_curve(cands, samples)
        path = tmp_path / "froc.csv"
        save_froc_csv(curve, path)
        text = path.read_text()
        assert text.startswith("k,fpavg,sensitivity\n")
        assert load_froc_csv(path) == curve.points

    def test_rejects_foreign_files(self, tmp_path):
        path = tmp_path / "junk.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError):
            load_froc_csv(path)
