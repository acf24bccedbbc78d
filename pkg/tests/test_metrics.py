"""Evaluation metrics against worked examples and quadratic brute force."""

import numpy as np
import pytest

from labelfuse4d.metrics import (
    EdgeLengths,
    chamfer_squared,
    edge_lengths,
    parsing_metrics,
    parsing_report,
    sample_surface,
    simulation_loss,
    stretching_energy,
)
from labelfuse4d.scene_io import TriMesh

from helpers import icosphere
from oracles import chamfer_brute, confusion_metrics


def unit_triangle(scale=1.0):
    v = scale * np.array([[0.0, 0, 0], [1.0, 0, 0], [0.5, np.sqrt(3) / 2, 0]])
    return TriMesh(v, np.array([[0, 1, 2]], np.int32))


class TestParsingMetrics:
    def test_worked_example(self):
        # all pixels predicted 0: class 0 fully recalled but polluted,
        # class 1 missed entirely -> mAcc (1+0)/2, mIoU (0.5+0)/2
        gt = np.array([0, 0, 1, 1])
        pred = np.array([0, 0, 0, 0])
        macc, miou = parsing_metrics(pred, gt)
        assert macc == pytest.approx(0.5)
        assert miou == pytest.approx(0.25)
        report = parsing_report(pred, gt)
        assert report["pixelAcc"] == pytest.approx(0.5)
        assert report["per_label"][0] == {"acc": 1.0, "iou": 0.5}
        assert report["per_label"][1] == {"acc": 0.0, "iou": 0.0}

    def test_perfect_prediction(self):
        gt = np.array([0, 1, 2, 3, 4, 5])
        macc, miou = parsing_metrics(gt.copy(), gt)
        assert macc == 1.0 and miou == 1.0

    def test_background_is_ignored(self):
        gt = np.array([0, 0, 1, -1, -1])
        pred_a = np.array([0, 0, 1, 5, 2])
        pred_b = np.array([0, 0, 1, 0, 0])
        assert parsing_metrics(pred_a, gt) == parsing_metrics(pred_b, gt)
        assert parsing_metrics(pred_a, gt) == (1.0, 1.0)

    def test_prediction_into_background_still_counts_as_miss(self):
        gt = np.array([2, 2])
        pred = np.array([2, -1])
        macc, miou = parsing_metrics(pred, gt)
        assert macc == pytest.approx(0.5)
        assert miou == pytest.approx(0.5)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_confusion_oracle(self, seed):
        rng = np.random.default_rng(seed)
        gt = rng.integers(-1, 6, 500)
        gt[0] = 3  # keep at least one labeled entry
        pred = np.where(rng.random(500) < 0.7, gt, rng.integers(0, 6, 500))
        want = confusion_metrics(pred, gt)
        got = parsing_metrics(pred, gt)
        assert got[0] == pytest.approx(want[0], abs=1e-9)
        assert got[1] == pytest.approx(want[1], abs=1e-9)

    def test_absent_classes_do_not_dilute(self):
        gt = np.array([4, 4, 4])  # only one class present
        pred = np.array([4, 4, 0])
        macc, _ = parsing_metrics(pred, gt)
        assert macc == pytest.approx(2 / 3)

    def test_errors(self):
        with pytest.raises(ValueError, match="shape"):
            parsing_metrics(np.zeros(3, np.int64), np.zeros(4, np.int64))
        with pytest.raises(ValueError, match="no labeled"):
            parsing_metrics(np.zeros(3, np.int64), np.full(3, -1))


class TestChamfer:
    def test_worked_example(self):
        x = np.array([[0.0, 0, 0]])
        y = np.array([[1.0, 0, 0], [-1.0, 0, 0]])
        assert chamfer_squared(x, y) == pytest.approx(2.0)

    def test_zero_on_identical_clouds(self):
        pts = np.random.default_rng(0).normal(size=(50, 3))
        assert chamfer_squared(pts, pts) == 0.0

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_quadratic_brute_force(self, seed):
        rng = np.random.default_rng(seed + 10)
        x = rng.normal(size=(rng.integers(5, 60), 3))
        y = rng.normal(size=(rng.integers(5, 60), 3))
        assert chamfer_squared(x, y) == pytest.approx(chamfer_brute(x, y),
                                                      abs=1e-9)

    def test_symmetry_and_quadratic_scaling(self):
        rng = np.random.default_rng(11)
        x = rng.normal(size=(30, 3))
        y = rng.normal(size=(40, 3))
        assert chamfer_squared(x, y) == pytest.approx(chamfer_squared(y, x))
        assert chamfer_squared(3 * x, 3 * y) == pytest.approx(
            9 * chamfer_squared(x, y), rel=1e-12)

    def test_rigid_motion_invariance(self):
        rng = np.random.default_rng(12)
        x = rng.normal(size=(30, 3))
        y = rng.normal(size=(40, 3))
        a = np.deg2rad(37.0)
        rot = np.array([[np.cos(a), -np.sin(a), 0],
                        [np.sin(a), np.cos(a), 0], [0, 0, 1]])
        shift = np.array([0.3, -1.2, 2.0])
        assert chamfer_squared(x @ rot.T + shift, y @ rot.T + shift) == \
            pytest.approx(chamfer_squared(x, y), rel=1e-9)

    def test_empty_and_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            chamfer_squared(np.zeros((0, 3)), np.ones((2, 3)))
        bad = np.ones((2, 3))
        bad[0, 0] = np.nan
        with pytest.raises(ValueError):
            chamfer_squared(bad, np.ones((2, 3)))


class TestSurfaceSampling:
    def test_deterministic_per_seed(self):
        m = icosphere(level=1)
        a = sample_surface(m, 100, seed=4)
        b = sample_surface(m, 100, seed=4)
        c = sample_surface(m, 100, seed=5)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_samples_lie_on_the_surface(self):
        m = unit_triangle()
        pts = sample_surface(m, 500, seed=0)
        assert np.allclose(pts[:, 2], 0.0)
        # inside the triangle: barycentric reconstruction is non-negative
        assert (pts[:, 1] >= -1e-12).all()
        assert (pts[:, 1] <= np.sqrt(3) / 2 + 1e-12).all()

    def test_area_weighting(self):
        # two parallel triangles, one with 4x the area: expect an 80/20 split
        v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0],
                      [5, 0, 0], [7, 0, 0], [5, 2, 0.0]])
        f = np.array([[0, 1, 2], [3, 4, 5]], np.int32)
        pts = sample_surface(TriMesh(v, f), 20000, seed=1)
        frac_big = float(np.mean(pts[:, 0] >= 4.0))
        assert frac_big == pytest.approx(0.8, abs=0.02)

    def test_sphere_samples_have_unit_norm_up_to_facets(self):
        m = icosphere(level=3)
        pts = sample_surface(m, 1000, seed=2)
        r = np.linalg.norm(pts, axis=1)
        assert (r <= 1.0 + 1e-12).all()
        assert r.min() > 0.97  # level-3 facets sag at most ~2%

    def test_bad_count_rejected(self):
        with pytest.raises(ValueError):
            sample_surface(unit_triangle(), 0)


class TestStretching:
    def test_worked_example(self):
        # every unit edge stretched to 1.5: (0.5)^2 = 0.25
        e = edge_lengths(unit_triangle(1.5), unit_triangle(1.0))
        assert e.n_edges == 3
        assert stretching_energy(e) == pytest.approx(0.25, abs=1e-12)

    def test_rest_state_has_zero_energy(self):
        m = icosphere(level=1)
        assert stretching_energy(edge_lengths(m, m)) == 0.0

    def test_translation_invariance(self):
        m = icosphere(level=1)
        moved = TriMesh(m.vertices + [3.0, -2.0, 1.0], m.faces)
        assert stretching_energy(edge_lengths(moved, m)) == pytest.approx(0.0,
                                                                          abs=1e-18)

    def test_topology_mismatch_rejected(self):
        a = unit_triangle()
        b = TriMesh(a.vertices, a.faces[:, [0, 2, 1]])
        with pytest.raises(ValueError, match="topology"):
            edge_lengths(a, b)

    def test_edge_container_validation(self):
        with pytest.raises(ValueError):
            EdgeLengths(np.array([1.0]), np.array([1.0, 2.0]))
        with pytest.raises(ValueError):
            EdgeLengths(np.array([0.0]), np.array([1.0]))


class TestSimulationLoss:
    def test_combination(self):
        template = unit_triangle(1.0)
        sim = unit_triangle(1.5)
        gt = unit_triangle(1.5)
        # geometry matches gt exactly, so only stretching remains
        assert simulation_loss(sim, gt, template, w=0.1) == pytest.approx(
            0.1 * 0.25, abs=1e-12)

    def test_weight_zero_skips_topology_requirement(self):
        sim = unit_triangle(1.0)
        gt = icosphere(level=0)
        out = simulation_loss(sim, gt, gt, w=0.0)
        assert out == pytest.approx(chamfer_squared(sim.vertices, gt.vertices))

    def test_negative_weight_rejected(self):
        m = unit_triangle()
        with pytest.raises(ValueError):
            simulation_loss(m, m, m, w=-1.0)
